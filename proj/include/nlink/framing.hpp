#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nlink/bits.hpp"

namespace nlink::framing {

/*
 * Link-layer packet, serialized MSB-first onto the air:
 *
 *   byte  0                8        10       12       14
 *         +----------------+--------+--------+--------+--- ... ---+
 *         |    preamble    |  bps   | paylen |  seq   |  payload  |
 *         +----------------+--------+--------+--------+--- ... ---+
 *
 *   preamble   8 bytes, fixed correlation word (below)
 *   bps        u16 BE, modulation bits per symbol (1 for BPSK)
 *   paylen     u16 BE, payload length in bytes
 *   seq        u16 BE, sequence number, wraps mod 2^16
 *   payload    paylen bytes, opaque
 *
 * No CRC: residual bit errors in the payload are exactly what the other
 * end wants to measure, so the frame deliberately lets them through.
 */

// 63-bit m-sequence from x^6 + x + 1 plus one trailing complement bit to
// fill the word. Peak aperiodic autocorrelation sidelobe is 9 (vs 64).
inline constexpr uint64_t kPreambleWord = 0xA4E2F28C20FD59BAull;
inline constexpr size_t kPreambleBits = 64;
inline constexpr size_t kHeaderBytes = 6;
inline constexpr size_t kHeaderBits = kHeaderBytes * 8;
inline constexpr size_t kOverheadBytes = 8 + kHeaderBytes;

struct FramingConfig {
    uint16_t max_payload_bytes = 1472;
    // Minimum |correlation| against the 64-bit preamble to declare a hit.
    int detect_threshold = 58;
};

struct PacketHeader {
    uint16_t bits_per_symbol = 1;
    uint16_t payload_len = 0;
    uint16_t seq_num = 0;
};

struct Packet {
    PacketHeader header;
    std::vector<uint8_t> payload;
};

struct PreambleHit {
    size_t bit_offset = 0;   // index of the first preamble bit
    int correlation = 0;     // signed, in [-64, 64]
    int polarity = 1;        // +1 normal, -1 whole packet inverted
};

enum class HeaderError {
    truncated,        // fewer than kHeaderBits available
    bad_bps,          // bits_per_symbol == 0
    payload_too_long, // payload_len > max_payload_bytes
};

struct ExtractStats {
    uint64_t hits = 0;
    uint64_t skipped_overlap = 0;
    uint64_t dropped_bad_header = 0;
    uint64_t dropped_truncated = 0;
};

struct ExtractResult {
    std::vector<Packet> packets;
    ExtractStats stats;
};

BitVec preamble_bits();

// Serialize one packet (preamble included). Throws std::invalid_argument if
// the payload exceeds config.max_payload_bytes.
std::vector<uint8_t> build_packet(std::span<const uint8_t> payload, uint16_t seq_num,
                                  uint16_t bits_per_symbol = 1,
                                  const FramingConfig& config = {});

// Parse the 6 header bytes that follow the preamble. bits must hold at
// least kHeaderBits entries starting at offset, already polarity-corrected.
std::optional<PacketHeader> parse_header(std::span<const uint8_t> bits,
                                         const FramingConfig& config = {},
                                         HeaderError* error = nullptr);

// Slide a 64-bit window over the bit stream and report every offset where
// |corr| >= threshold, corr = 64 - 2 * popcount(window ^ preamble). A
// negative peak means the carrier locked 180 degrees off and the packet
// reads back inverted; polarity records which.
std::vector<PreambleHit> detect_preambles(std::span<const uint8_t> bits, int threshold);

// Full deframe pass: detect, resolve overlaps greedily (earliest hit wins,
// later hits inside a claimed packet body are skipped), parse headers,
// copy out payloads. Bad or truncated candidates are counted, not returned.
ExtractResult extract_packets(std::span<const uint8_t> bits, const FramingConfig& config = {});

} // namespace nlink::framing
