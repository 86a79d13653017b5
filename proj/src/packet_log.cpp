#include "nlink/packet_log.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nlink {

namespace {
constexpr char kMagic[4] = {'N', 'L', 'P', 'L'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderSize = 20;

[[noreturn]] void fail_at(const std::filesystem::path& path, uint64_t offset,
                          const std::string& msg) {
    throw std::runtime_error(path.string() + " at byte " + std::to_string(offset) + ": " + msg);
}
} // namespace

void write_packet_log(const std::filesystem::path& path, const PacketLog& log,
                      uint32_t malformed) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for write: " + path.string());

    char header[kHeaderSize] = {};
    std::memcpy(header, kMagic, 4);
    std::memcpy(header + 4, &kVersion, 4);
    std::memcpy(header + 8, &malformed, 4);
    uint64_t count = log.size();
    std::memcpy(header + 12, &count, 8);
    f.write(header, kHeaderSize);

    for (const auto& entry : log) {
        uint16_t seq = entry.seq_num;
        uint32_t len = static_cast<uint32_t>(entry.payload.size());
        f.write(reinterpret_cast<const char*>(&seq), 2);
        f.write(reinterpret_cast<const char*>(&len), 4);
        f.write(reinterpret_cast<const char*>(entry.payload.data()),
                static_cast<std::streamsize>(entry.payload.size()));
    }
    if (!f)
        throw std::runtime_error("short write: " + path.string());
}

PacketLog read_packet_log(const std::filesystem::path& path, uint32_t* malformed) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open: " + path.string());

    char header[kHeaderSize];
    f.read(header, kHeaderSize);
    if (f.gcount() != kHeaderSize)
        fail_at(path, static_cast<uint64_t>(f.gcount()), "truncated header");
    if (std::memcmp(header, kMagic, 4) != 0)
        fail_at(path, 0, "bad magic");
    uint32_t version;
    std::memcpy(&version, header + 4, 4);
    if (version != kVersion)
        fail_at(path, 4, "unsupported version " + std::to_string(version));
    uint32_t malformed_count;
    std::memcpy(&malformed_count, header + 8, 4);
    uint64_t count;
    std::memcpy(&count, header + 12, 8);

    PacketLog log;
    log.reserve(count < (1u << 20) ? count : (1u << 20));
    uint64_t offset = kHeaderSize;
    for (uint64_t i = 0; i < count; ++i) {
        char fixed[6];
        f.read(fixed, 6);
        if (f.gcount() != 6)
            fail_at(path, offset, "truncated entry " + std::to_string(i));
        LogEntry entry;
        std::memcpy(&entry.seq_num, fixed, 2);
        uint32_t len;
        std::memcpy(&len, fixed + 2, 4);
        offset += 6;

        entry.payload.resize(len);
        f.read(reinterpret_cast<char*>(entry.payload.data()), len);
        if (static_cast<uint32_t>(f.gcount()) != len)
            fail_at(path, offset, "truncated payload of entry " + std::to_string(i));
        offset += len;
        log.push_back(std::move(entry));
    }
    if (f.peek() != std::ifstream::traits_type::eof())
        fail_at(path, offset, "trailing bytes after last entry");

    if (malformed) *malformed = malformed_count;
    return log;
}

} // namespace nlink
