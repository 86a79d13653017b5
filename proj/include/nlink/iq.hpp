#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace nlink {

struct IqBuffer {
    std::vector<std::complex<float>> samples;
    double sample_rate = 0.0; // samples per second

    size_t size() const { return samples.size(); }
    double duration_s() const { return sample_rate > 0 ? samples.size() / sample_rate : 0.0; }
};

double mean_power(std::span<const std::complex<float>> samples);

/*
 * On-disk capture format, little-endian:
 *
 *   offset  size  field
 *   0       4     magic "NLIQ"
 *   4       4     u32 version (1)
 *   8       8     f64 sample_rate
 *   16      16    reserved, zero
 *   32      ...   float32 pairs, I then Q
 *
 * read_iq_file throws std::runtime_error on bad magic, version or size.
 */
void write_iq_file(const std::filesystem::path& path, const IqBuffer& buf);
IqBuffer read_iq_file(const std::filesystem::path& path);

// Incremental writer for captures too big to hold. Same format; sample
// count is implied by file size.
class IqFileWriter {
public:
    IqFileWriter(const std::filesystem::path& path, double sample_rate);
    void append(std::span<const std::complex<float>> samples);
    void close(); // also runs on destruction

    ~IqFileWriter();
    IqFileWriter(const IqFileWriter&) = delete;
    IqFileWriter& operator=(const IqFileWriter&) = delete;

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

} // namespace nlink
