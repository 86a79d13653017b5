#include <doctest.h>

#include <algorithm>

#include "nlink/framing.hpp"
#include "nlink/rng.hpp"
#include "support/oracles.hpp"

using namespace nlink;
using namespace nlink::framing;

TEST_CASE("preamble word structure") {
    auto bits = preamble_bits();
    REQUIRE(bits.size() == 64);

    int ones = 0;
    for (auto b : bits) ones += b;
    CHECK(ones == 32);

    // first 63 bits are an m-sequence: periodic autocorrelation is exactly
    // -1 at every nonzero shift
    for (int shift = 1; shift < 63; ++shift) {
        int acc = 0;
        for (int i = 0; i < 63; ++i) {
            int a = bits[i] ? 1 : -1;
            int b = bits[(i + shift) % 63] ? 1 : -1;
            acc += a * b;
        }
        CHECK(acc == -1);
    }

    // worst aperiodic self-overlap of the full word, both polarities: a
    // detector threshold above 9 can never fire early on the preamble itself
    int peak = 0;
    for (int k = 1; k < 64; ++k) {
        int acc = 0;
        for (int i = 0; i + k < 64; ++i)
            acc += (bits[i] ? 1 : -1) * (bits[i + k] ? 1 : -1);
        peak = std::max(peak, std::abs(acc));
    }
    CHECK(peak == 9);
}

TEST_CASE("build_packet serializes header fields big-endian") {
    std::vector<uint8_t> payload = {0xDE, 0xAD, 0xBE};
    auto pkt = build_packet(payload, 0x1234, 1);
    REQUIRE(pkt.size() == kOverheadBytes + 3);
    CHECK(pkt[0] == 0xA4);
    CHECK(pkt[7] == 0xBA);
    CHECK(pkt[8] == 0x00);  // bps hi
    CHECK(pkt[9] == 0x01);  // bps lo
    CHECK(pkt[10] == 0x00); // paylen hi
    CHECK(pkt[11] == 0x03); // paylen lo
    CHECK(pkt[12] == 0x12);
    CHECK(pkt[13] == 0x34);
    CHECK(pkt[14] == 0xDE);

    CHECK_THROWS_AS(build_packet(std::vector<uint8_t>(1473), 0), std::invalid_argument);
    CHECK_THROWS_AS(build_packet(payload, 0, 0), std::invalid_argument);
}

TEST_CASE("parse_header round trip and error taxonomy") {
    auto pkt = build_packet(std::vector<uint8_t>(100, 0x55), 4242, 1);
    auto bits = bytes_to_bits(pkt);

    auto h = parse_header(std::span(bits).subspan(kPreambleBits));
    REQUIRE(h.has_value());
    CHECK(h->bits_per_symbol == 1);
    CHECK(h->payload_len == 100);
    CHECK(h->seq_num == 4242);

    HeaderError err;
    CHECK(!parse_header(std::span(bits).subspan(kPreambleBits, 40), {}, &err));
    CHECK(err == HeaderError::truncated);

    BitVec zeros(kHeaderBits, 0);
    CHECK(!parse_header(zeros, {}, &err));
    CHECK(err == HeaderError::bad_bps);

    auto big = build_packet(std::vector<uint8_t>(1400), 0);
    auto big_bits = bytes_to_bits(big);
    FramingConfig tight;
    tight.max_payload_bytes = 512;
    CHECK(!parse_header(std::span(big_bits).subspan(kPreambleBits), tight, &err));
    CHECK(err == HeaderError::payload_too_long);
}

TEST_CASE("detect_preambles finds planted patterns with polarity") {
    Rng rng(7);
    BitVec bits = rng.random_bits(5000);
    auto pre = preamble_bits();

    std::copy(pre.begin(), pre.end(), bits.begin() + 1000);
    auto inv = invert_bits(pre);
    std::copy(inv.begin(), inv.end(), bits.begin() + 3000);

    auto hits = detect_preambles(bits, 64);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].bit_offset == 1000);
    CHECK(hits[0].correlation == 64);
    CHECK(hits[0].polarity == 1);
    CHECK(hits[1].bit_offset == 3000);
    CHECK(hits[1].correlation == -64);
    CHECK(hits[1].polarity == -1);
}

TEST_CASE("correlation degrades by 2 per flipped bit") {
    auto pre = preamble_bits();
    for (int k : {1, 2, 3, 4}) {
        BitVec dam = pre;
        for (int i = 0; i < k; ++i)
            dam[5 + 11 * i] ^= 1;
        auto hits = detect_preambles(dam, 64 - 2 * k);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].correlation == 64 - 2 * k);
    }
    // one flip below threshold: silence
    BitVec dam = pre;
    dam[9] ^= 1;
    CHECK(detect_preambles(dam, 63).empty());
}

TEST_CASE("extract_packets round trip, multiple packets, junk between") {
    Rng rng(21);
    std::vector<std::vector<uint8_t>> payloads;
    BitVec stream = rng.random_bits(300);
    for (uint16_t s = 0; s < 5; ++s) {
        payloads.push_back(rng.random_bytes(100 + 57 * s));
        auto bits = bytes_to_bits(build_packet(payloads.back(), s));
        stream.insert(stream.end(), bits.begin(), bits.end());
        auto gap = rng.random_bits(64 + (s * 13) % 100);
        stream.insert(stream.end(), gap.begin(), gap.end());
    }

    auto res = extract_packets(stream);
    REQUIRE(res.packets.size() == 5);
    for (uint16_t s = 0; s < 5; ++s) {
        CHECK(res.packets[s].header.seq_num == s);
        CHECK(res.packets[s].payload == payloads[s]);
    }
    CHECK(res.stats.dropped_bad_header == 0);
}

TEST_CASE("extract_packets is polarity invariant") {
    Rng rng(22);
    BitVec stream = rng.random_bits(100);
    for (uint16_t s = 0; s < 3; ++s) {
        auto bits = bytes_to_bits(build_packet(rng.random_bytes(200), s, 1));
        stream.insert(stream.end(), bits.begin(), bits.end());
    }
    auto a = extract_packets(stream);
    auto b = extract_packets(invert_bits(stream));
    REQUIRE(a.packets.size() == 3);
    REQUIRE(b.packets.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(a.packets[i].header.seq_num == b.packets[i].header.seq_num);
        CHECK(a.packets[i].payload == b.packets[i].payload);
    }
}

TEST_CASE("extract_packets drops bad headers and truncated tails") {
    auto pre = preamble_bits();

    // header with bps = 0
    BitVec bad = pre;
    BitVec zeros(kHeaderBits, 0);
    bad.insert(bad.end(), zeros.begin(), zeros.end());
    bad.insert(bad.end(), 200, 1);
    auto res = extract_packets(bad);
    CHECK(res.packets.empty());
    CHECK(res.stats.dropped_bad_header == 1);

    // payload promised but stream ends first
    auto pkt_bits = bytes_to_bits(build_packet(std::vector<uint8_t>(100), 9));
    pkt_bits.resize(pkt_bits.size() - 300);
    res = extract_packets(pkt_bits);
    CHECK(res.packets.empty());
    CHECK(res.stats.dropped_truncated == 1);
}

TEST_CASE("a preamble inside a claimed payload is skipped") {
    auto inner = preamble_bits();
    std::vector<uint8_t> payload = bits_to_bytes(inner); // payload that looks like a preamble
    auto bits = bytes_to_bits(build_packet(payload, 77));
    auto res = extract_packets(bits);
    REQUIRE(res.packets.size() == 1);
    CHECK(res.packets[0].payload == payload);
    CHECK(res.stats.skipped_overlap >= 1);
}

TEST_CASE("false alarm rate on random bits tracks the binomial tail") {
    // measured at a low threshold so the expectation is large enough to pin
    Rng rng(1234);
    const size_t n_bits = 1u << 20;
    auto bits = rng.random_bits(n_bits);

    const int threshold = 28;
    auto hits = detect_preambles(bits, threshold);
    double windows = static_cast<double>(n_bits - 63);
    double expected = windows * oracle::preamble_false_alarm(threshold);
    CHECK(expected > 300.0);
    CHECK(hits.size() > expected / 2);
    CHECK(hits.size() < expected * 2);

    // at the operating threshold the tail is ~5e-15 per window: silence
    CHECK(detect_preambles(bits, 58).empty());
}
