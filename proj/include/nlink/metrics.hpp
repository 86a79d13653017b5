#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nlink/packet_log.hpp"
#include "nlink/video.hpp"

namespace nlink::metrics {

// A session is acceptable when its APSNR clears this line.
inline constexpr double kApsnrAcceptableDb = 30.0;

// Sequence numbers wrap mod 2^16; matching stays unambiguous as long as
// one session stays under this many packets. Longer captures must be
// segmented by the caller.
inline constexpr size_t kMaxSessionPackets = 1u << 16;

struct MatchResult {
    std::vector<std::pair<size_t, size_t>> pairs; // (tx index, rx index)
    uint64_t tx_only = 0;    // transmitted, never received = dropped
    uint64_t rx_only = 0;    // received seq that was never sent
    uint64_t duplicates = 0; // extra rx copies of an already-matched seq
};

// In-order matching on seq_num. When several rx packets carry the same seq
// the one closest to the tx payload pairs up and the rest count as
// duplicates. Throws std::invalid_argument if either log exceeds
// kMaxSessionPackets.
MatchResult match_packets(const PacketLog& tx, const PacketLog& rx);

struct BerResult {
    bool defined = false; // false when nothing was comparable
    uint64_t bit_errors = 0;
    uint64_t bits_compared = 0;
    double ber = 0.0;
    uint64_t length_mismatches = 0; // matched pairs excluded from the count
};

// Hamming distance over matched payloads of equal length. Dropped packets
// never contribute; they are loss, not error.
BerResult compute_ber(const MatchResult& match, const PacketLog& tx, const PacketLog& rx);

struct LinkReport {
    std::string session_id;

    bool ber_defined = false;
    double ber = 0.0;
    uint64_t bit_errors = 0;
    uint64_t bits_compared = 0;

    uint64_t packets_tx = 0;
    uint64_t packets_rx = 0;
    uint64_t packets_dropped = 0;
    uint64_t packets_malformed = 0; // detected but undecodable on the air side
    uint64_t duplicates = 0;
    uint64_t rx_only = 0;
    uint64_t length_mismatches = 0;

    bool apsnr_defined = false;
    double apsnr_db = 0.0;
    uint32_t frames_absent = 0;
    bool acceptable = false; // apsnr_defined && apsnr_db >= kApsnrAcceptableDb

    std::vector<video::PsnrPoint> psnr_series;
};

LinkReport build_report(std::string session_id, const MatchResult& match, const BerResult& ber,
                        std::span<const video::PsnrPoint> psnr_series, uint32_t frames_absent,
                        uint64_t packets_malformed);

/*
 * Report CSV, one row per session:
 *
 *   # link_report v1
 *   session_id,ber,bit_errors,bits_compared,packets_tx,packets_rx,
 *       packets_dropped,apsnr_db,frames_absent,acceptable_flag
 *
 * Undefined ber/apsnr serialize as empty fields. Floats use shortest
 * round-trip formatting, so a reread report compares bit-equal and the
 * bytes are stable across runs. The psnr series lives in its own CSV
 * (video module), not here.
 */
void write_report_csv(const std::filesystem::path& path, std::span<const LinkReport> reports);
std::vector<LinkReport> read_report_csv(const std::filesystem::path& path);

} // namespace nlink::metrics
