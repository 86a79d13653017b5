#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace nlink {

// One bit per element, values 0 or 1. Wasteful but easy to slice and
// correlate against; link payloads are small enough not to care.
using BitVec = std::vector<uint8_t>;

// MSB-first: bit 7 of bytes[0] comes out as bits[0].
inline BitVec bytes_to_bits(std::span<const uint8_t> bytes) {
    BitVec bits;
    bits.reserve(bytes.size() * 8);
    for (uint8_t b : bytes)
        for (int i = 7; i >= 0; --i)
            bits.push_back((b >> i) & 1u);
    return bits;
}

// Inverse of bytes_to_bits. Trailing bits short of a full byte are dropped.
inline std::vector<uint8_t> bits_to_bytes(std::span<const uint8_t> bits) {
    std::vector<uint8_t> bytes;
    bytes.reserve(bits.size() / 8);
    for (size_t i = 0; i + 8 <= bits.size(); i += 8) {
        uint8_t b = 0;
        for (size_t j = 0; j < 8; ++j)
            b = static_cast<uint8_t>((b << 1) | (bits[i + j] & 1u));
        bytes.push_back(b);
    }
    return bytes;
}

inline BitVec invert_bits(BitVec bits) {
    for (auto& b : bits) b ^= 1u;
    return bits;
}

inline uint64_t hamming_distance(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    uint64_t d = 0;
    size_t n = a.size() < b.size() ? a.size() : b.size();
    for (size_t i = 0; i < n; ++i)
        d += static_cast<uint64_t>(__builtin_popcount(a[i] ^ b[i]));
    return d;
}

} // namespace nlink
