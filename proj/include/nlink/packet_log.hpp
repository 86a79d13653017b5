#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace nlink {

// One captured packet, in capture order. TX logs hold what was handed to
// the framer; RX logs hold what the deframer got back out.
struct LogEntry {
    uint16_t seq_num = 0;
    std::vector<uint8_t> payload;
};

using PacketLog = std::vector<LogEntry>;

/*
 * Packet log file, little-endian:
 *
 *   offset  size  field
 *   0       4     magic "NLPL"
 *   4       4     u32 version (1)
 *   8       4     u32 malformed count (detections dropped before logging)
 *   12      8     u64 entry count
 *   20      ...   entries: u16 seq, u32 payload_len, payload bytes
 *
 * Read errors name the offending byte offset.
 */
void write_packet_log(const std::filesystem::path& path, const PacketLog& log,
                      uint32_t malformed = 0);
PacketLog read_packet_log(const std::filesystem::path& path, uint32_t* malformed = nullptr);

} // namespace nlink
