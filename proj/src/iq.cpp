#include "nlink/iq.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nlink {

namespace {
constexpr char kMagic[4] = {'N', 'L', 'I', 'Q'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderSize = 32;
} // namespace

double mean_power(std::span<const std::complex<float>> samples) {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : samples)
        acc += static_cast<double>(s.real()) * s.real() + static_cast<double>(s.imag()) * s.imag();
    return acc / static_cast<double>(samples.size());
}

void write_iq_file(const std::filesystem::path& path, const IqBuffer& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());

    char header[kHeaderSize] = {};
    std::memcpy(header, kMagic, 4);
    std::memcpy(header + 4, &kVersion, 4);
    std::memcpy(header + 8, &buf.sample_rate, 8);
    f.write(header, kHeaderSize);
    // complex<float> is layout-compatible with float[2], I then Q
    f.write(reinterpret_cast<const char*>(buf.samples.data()),
            static_cast<std::streamsize>(buf.samples.size() * sizeof(std::complex<float>)));
    if (!f) throw std::runtime_error("short write: " + path.string());
}

IqFileWriter::IqFileWriter(const std::filesystem::path& path, double sample_rate)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_)
        throw std::runtime_error("cannot open for write: " + path.string());
    char header[kHeaderSize] = {};
    std::memcpy(header, kMagic, 4);
    std::memcpy(header + 4, &kVersion, 4);
    std::memcpy(header + 8, &sample_rate, 8);
    out_.write(header, kHeaderSize);
}

void IqFileWriter::append(std::span<const std::complex<float>> samples) {
    out_.write(reinterpret_cast<const char*>(samples.data()),
               static_cast<std::streamsize>(samples.size() * sizeof(std::complex<float>)));
    if (!out_)
        throw std::runtime_error("short write: " + path_.string());
}

void IqFileWriter::close() {
    if (out_.is_open()) {
        out_.close();
        if (out_.fail())
            throw std::runtime_error("close failed: " + path_.string());
    }
}

IqFileWriter::~IqFileWriter() {
    if (out_.is_open()) out_.close();
}

IqBuffer read_iq_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path.string());

    char header[kHeaderSize];
    f.read(header, kHeaderSize);
    if (f.gcount() != kHeaderSize)
        throw std::runtime_error("truncated header: " + path.string());
    if (std::memcmp(header, kMagic, 4) != 0)
        throw std::runtime_error("bad magic: " + path.string());
    uint32_t version;
    std::memcpy(&version, header + 4, 4);
    if (version != kVersion)
        throw std::runtime_error("unsupported version: " + path.string());

    IqBuffer buf;
    std::memcpy(&buf.sample_rate, header + 8, 8);

    f.seekg(0, std::ios::end);
    auto end = f.tellg();
    size_t body = static_cast<size_t>(end) - kHeaderSize;
    if (body % sizeof(std::complex<float>) != 0)
        throw std::runtime_error("sample data not a whole number of I/Q pairs: " + path.string());

    buf.samples.resize(body / sizeof(std::complex<float>));
    f.seekg(kHeaderSize);
    f.read(reinterpret_cast<char*>(buf.samples.data()), static_cast<std::streamsize>(body));
    if (static_cast<size_t>(f.gcount()) != body)
        throw std::runtime_error("short read: " + path.string());
    return buf;
}

} // namespace nlink
