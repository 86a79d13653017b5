#include "nlink/framing.hpp"

#include <bit>
#include <stdexcept>

namespace nlink::framing {

BitVec preamble_bits() {
    BitVec bits(kPreambleBits);
    for (size_t i = 0; i < kPreambleBits; ++i)
        bits[i] = static_cast<uint8_t>((kPreambleWord >> (63 - i)) & 1u);
    return bits;
}

std::vector<uint8_t> build_packet(std::span<const uint8_t> payload, uint16_t seq_num,
                                  uint16_t bits_per_symbol, const FramingConfig& config) {
    if (payload.size() > config.max_payload_bytes)
        throw std::invalid_argument("payload exceeds max_payload_bytes");
    if (bits_per_symbol == 0)
        throw std::invalid_argument("bits_per_symbol must be nonzero");

    std::vector<uint8_t> out;
    out.reserve(kOverheadBytes + payload.size());
    for (int i = 7; i >= 0; --i)
        out.push_back(static_cast<uint8_t>(kPreambleWord >> (8 * i)));
    auto push_u16 = [&out](uint16_t v) {
        out.push_back(static_cast<uint8_t>(v >> 8));
        out.push_back(static_cast<uint8_t>(v & 0xFF));
    };
    push_u16(bits_per_symbol);
    push_u16(static_cast<uint16_t>(payload.size()));
    push_u16(seq_num);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::optional<PacketHeader> parse_header(std::span<const uint8_t> bits,
                                         const FramingConfig& config, HeaderError* error) {
    auto fail = [error](HeaderError e) -> std::optional<PacketHeader> {
        if (error) *error = e;
        return std::nullopt;
    };
    if (bits.size() < kHeaderBits)
        return fail(HeaderError::truncated);

    uint16_t fields[3] = {};
    for (int f = 0; f < 3; ++f)
        for (int i = 0; i < 16; ++i)
            fields[f] = static_cast<uint16_t>((fields[f] << 1) | (bits[f * 16 + i] & 1u));

    PacketHeader h{fields[0], fields[1], fields[2]};
    if (h.bits_per_symbol == 0)
        return fail(HeaderError::bad_bps);
    if (h.payload_len > config.max_payload_bytes)
        return fail(HeaderError::payload_too_long);
    return h;
}

std::vector<PreambleHit> detect_preambles(std::span<const uint8_t> bits, int threshold) {
    std::vector<PreambleHit> hits;
    if (bits.size() < kPreambleBits || threshold < 0)
        return hits;

    uint64_t window = 0;
    for (size_t i = 0; i < kPreambleBits; ++i)
        window = (window << 1) | (bits[i] & 1u);

    for (size_t off = 0;; ++off) {
        int corr = 64 - 2 * std::popcount(window ^ kPreambleWord);
        if (corr >= threshold || -corr >= threshold)
            hits.push_back({off, corr, corr >= 0 ? 1 : -1});
        if (off + kPreambleBits >= bits.size())
            break;
        window = (window << 1) | (bits[off + kPreambleBits] & 1u);
    }
    return hits;
}

ExtractResult extract_packets(std::span<const uint8_t> bits, const FramingConfig& config) {
    ExtractResult result;
    auto hits = detect_preambles(bits, config.detect_threshold);
    result.stats.hits = hits.size();

    size_t next_free = 0;
    for (const auto& hit : hits) {
        if (hit.bit_offset < next_free) {
            ++result.stats.skipped_overlap;
            continue;
        }
        size_t header_at = hit.bit_offset + kPreambleBits;
        if (header_at + kHeaderBits > bits.size()) {
            ++result.stats.dropped_truncated;
            continue;
        }

        uint8_t flip = hit.polarity < 0 ? 1u : 0u;
        uint8_t hdr_bits[kHeaderBits];
        for (size_t i = 0; i < kHeaderBits; ++i)
            hdr_bits[i] = (bits[header_at + i] ^ flip) & 1u;

        HeaderError err;
        auto header = parse_header({hdr_bits, kHeaderBits}, config, &err);
        if (!header) {
            ++result.stats.dropped_bad_header;
            continue;
        }

        size_t payload_at = header_at + kHeaderBits;
        size_t payload_bits = static_cast<size_t>(header->payload_len) * 8;
        if (payload_at + payload_bits > bits.size()) {
            ++result.stats.dropped_truncated;
            continue;
        }

        Packet pkt;
        pkt.header = *header;
        pkt.payload.resize(header->payload_len);
        for (size_t b = 0; b < pkt.payload.size(); ++b) {
            uint8_t byte = 0;
            for (size_t j = 0; j < 8; ++j)
                byte = static_cast<uint8_t>((byte << 1) | ((bits[payload_at + b * 8 + j] ^ flip) & 1u));
            pkt.payload[b] = byte;
        }
        result.packets.push_back(std::move(pkt));
        next_free = payload_at + payload_bits;
    }
    return result;
}

} // namespace nlink::framing
