#include "nlink/video.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nlink/rng.hpp"
#include "nlink/textio.hpp"

namespace nlink::video {

void VideoFrame::validate() const {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("frame dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("channels must be 1 or 3");
    size_t want = static_cast<size_t>(width) * height * channels;
    if (pixels.size() != want)
        throw std::invalid_argument("pixel buffer length mismatch");
}

void FrameStream::validate() const {
    for (size_t i = 0; i < frames.size(); ++i) {
        frames[i].validate();
        if (i > 0 && frames[i].frame_index <= frames[i - 1].frame_index)
            throw std::invalid_argument("frame indices must be strictly increasing");
    }
}

Pattern pattern_from_string(const std::string& name) {
    if (name == "gradient") return Pattern::gradient;
    if (name == "checker") return Pattern::checker;
    if (name == "moving-box" || name == "moving_box") return Pattern::moving_box;
    if (name == "noise") return Pattern::noise;
    throw std::invalid_argument("unknown pattern '" + name + "'");
}

const char* pattern_name(Pattern p) {
    switch (p) {
        case Pattern::gradient: return "gradient";
        case Pattern::checker: return "checker";
        case Pattern::moving_box: return "moving-box";
        case Pattern::noise: return "noise";
    }
    return "?";
}

FrameStream generate_test_pattern(Pattern kind, int width, int height, int channels,
                                  uint32_t n_frames, double frame_rate, uint64_t seed) {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("pattern dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("channels must be 1 or 3");
    if (frame_rate <= 0.0)
        throw std::invalid_argument("frame_rate must be positive");

    FrameStream stream;
    stream.frame_rate = frame_rate;
    size_t plane = static_cast<size_t>(width) * height;

    for (uint32_t f = 0; f < n_frames; ++f) {
        VideoFrame frame;
        frame.width = width;
        frame.height = height;
        frame.channels = channels;
        frame.frame_index = f;
        frame.pixels.resize(plane * channels);

        switch (kind) {
            case Pattern::gradient: {
                double denom = plane > 1 ? static_cast<double>(plane - 1) : 1.0;
                for (size_t i = 0; i < plane; ++i) {
                    auto v = static_cast<uint8_t>(std::lround(255.0 * i / denom));
                    for (int c = 0; c < channels; ++c)
                        frame.pixels[c * plane + i] = v;
                }
                break;
            }
            case Pattern::checker: {
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x) {
                        uint8_t v = ((x / 16 + y / 16) % 2) ? 255 : 0;
                        for (int c = 0; c < channels; ++c)
                            frame.pixels[c * plane + static_cast<size_t>(y) * width + x] = v;
                    }
                break;
            }
            case Pattern::moving_box: {
                int bw = std::max(1, width / 4);
                int bh = std::max(1, height / 4);
                auto bounce = [](uint32_t t, int range) {
                    if (range <= 0) return 0;
                    uint32_t period = 2 * static_cast<uint32_t>(range);
                    uint32_t p = t % period;
                    return p < static_cast<uint32_t>(range) ? static_cast<int>(p)
                                                            : static_cast<int>(period - p);
                };
                int bx = bounce(f, width - bw);
                int by = bounce(f, height - bh);
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x) {
                        bool inside = x >= bx && x < bx + bw && y >= by && y < by + bh;
                        uint8_t v = inside ? 224 : 32;
                        for (int c = 0; c < channels; ++c)
                            frame.pixels[c * plane + static_cast<size_t>(y) * width + x] = v;
                    }
                break;
            }
            case Pattern::noise: {
                Rng rng = Rng::derive(seed, f);
                for (auto& px : frame.pixels)
                    px = static_cast<uint8_t>(rng.next_u64() & 0xFF);
                break;
            }
        }
        stream.frames.push_back(std::move(frame));
    }
    return stream;
}

void encode_chunk_prefix(uint32_t frame_index, uint16_t chunk_index, uint8_t* out6) {
    out6[0] = static_cast<uint8_t>(frame_index >> 24);
    out6[1] = static_cast<uint8_t>(frame_index >> 16);
    out6[2] = static_cast<uint8_t>(frame_index >> 8);
    out6[3] = static_cast<uint8_t>(frame_index);
    out6[4] = static_cast<uint8_t>(chunk_index >> 8);
    out6[5] = static_cast<uint8_t>(chunk_index);
}

void decode_chunk_prefix(const uint8_t* in6, uint32_t& frame_index, uint16_t& chunk_index) {
    frame_index = (static_cast<uint32_t>(in6[0]) << 24) | (static_cast<uint32_t>(in6[1]) << 16) |
                  (static_cast<uint32_t>(in6[2]) << 8) | in6[3];
    chunk_index = static_cast<uint16_t>((in6[4] << 8) | in6[5]);
}

std::vector<std::vector<uint8_t>> packetize(const FrameStream& stream, size_t payload_size) {
    if (payload_size <= kChunkPrefixBytes)
        throw std::invalid_argument("payload_size must exceed the 6-byte chunk prefix");
    stream.validate();

    size_t chunk_data = payload_size - kChunkPrefixBytes;
    std::vector<std::vector<uint8_t>> payloads;
    for (const auto& frame : stream.frames) {
        size_t total = frame.pixels.size();
        size_t n_chunks = (total + chunk_data - 1) / chunk_data;
        if (n_chunks > 0xFFFF)
            throw std::invalid_argument("frame needs more than 65535 chunks");
        for (size_t c = 0; c < n_chunks; ++c) {
            size_t off = c * chunk_data;
            size_t len = std::min(chunk_data, total - off);
            std::vector<uint8_t> payload(kChunkPrefixBytes + len);
            encode_chunk_prefix(frame.frame_index, static_cast<uint16_t>(c), payload.data());
            std::memcpy(payload.data() + kChunkPrefixBytes, frame.pixels.data() + off, len);
            payloads.push_back(std::move(payload));
        }
    }
    return payloads;
}

ReconstructResult reconstruct(std::span<const std::vector<uint8_t>> payloads,
                              const StreamGeometry& geometry) {
    if (geometry.width <= 0 || geometry.height <= 0)
        throw std::invalid_argument("geometry dimensions must be positive");
    if (geometry.channels != 1 && geometry.channels != 3)
        throw std::invalid_argument("channels must be 1 or 3");
    if (geometry.payload_size <= kChunkPrefixBytes)
        throw std::invalid_argument("payload_size must exceed the 6-byte chunk prefix");

    size_t frame_bytes =
        static_cast<size_t>(geometry.width) * geometry.height * geometry.channels;
    size_t chunk_data = geometry.payload_size - kChunkPrefixBytes;
    size_t chunks_per_frame = (frame_bytes + chunk_data - 1) / chunk_data;

    // group incoming chunks by frame so reconstruction can run in display
    // order with previous-frame concealment
    std::vector<std::vector<size_t>> by_frame(geometry.n_frames);
    ReconstructResult result;
    for (size_t i = 0; i < payloads.size(); ++i) {
        const auto& p = payloads[i];
        if (p.size() < kChunkPrefixBytes) {
            ++result.chunks_rejected;
            continue;
        }
        uint32_t fi;
        uint16_t ci;
        decode_chunk_prefix(p.data(), fi, ci);
        if (fi >= geometry.n_frames || ci >= chunks_per_frame) {
            ++result.chunks_rejected;
            continue;
        }
        by_frame[fi].push_back(i);
    }

    result.stream.frame_rate = geometry.frame_rate;
    result.present.assign(geometry.n_frames, 0);
    std::vector<uint8_t> previous(frame_bytes, 128);

    for (uint32_t f = 0; f < geometry.n_frames; ++f) {
        VideoFrame frame;
        frame.width = geometry.width;
        frame.height = geometry.height;
        frame.channels = geometry.channels;
        frame.frame_index = f;
        frame.pixels = previous; // concealment baseline

        for (size_t idx : by_frame[f]) {
            const auto& p = payloads[idx];
            uint32_t fi;
            uint16_t ci;
            decode_chunk_prefix(p.data(), fi, ci);
            size_t off = static_cast<size_t>(ci) * chunk_data;
            size_t len = std::min(p.size() - kChunkPrefixBytes, frame_bytes - off);
            std::memcpy(frame.pixels.data() + off, p.data() + kChunkPrefixBytes, len);
            ++result.chunks_written;
        }
        if (!by_frame[f].empty())
            result.present[f] = 1;
        else
            ++result.frames_absent;

        previous = frame.pixels;
        result.stream.frames.push_back(std::move(frame));
    }
    return result;
}

double psnr(const VideoFrame& reference, const VideoFrame& test) {
    if (reference.width != test.width || reference.height != test.height ||
        reference.channels != test.channels)
        throw std::invalid_argument("psnr: frame geometry mismatch");
    reference.validate();
    test.validate();

    double sse = 0.0;
    for (size_t i = 0; i < reference.pixels.size(); ++i) {
        double d = static_cast<double>(reference.pixels[i]) - test.pixels[i];
        sse += d * d;
    }
    if (sse == 0.0)
        return kPsnrCap;
    double count = static_cast<double>(reference.pixels.size());
    double v = 10.0 * std::log10(255.0 * 255.0 * count / sse);
    return std::min(v, kPsnrCap);
}

std::vector<PsnrPoint> psnr_series(const FrameStream& reference, const FrameStream& test,
                                   const std::vector<uint8_t>* test_present) {
    if (test_present && test_present->size() != test.frames.size())
        throw std::invalid_argument("present flags length mismatch");

    std::vector<PsnrPoint> series;
    size_t ri = 0;
    for (size_t ti = 0; ti < test.frames.size(); ++ti) {
        uint32_t want = test.frames[ti].frame_index;
        while (ri < reference.frames.size() && reference.frames[ri].frame_index < want)
            ++ri;
        if (ri >= reference.frames.size())
            break;
        if (reference.frames[ri].frame_index != want)
            continue;

        PsnrPoint pt;
        pt.frame_index = want;
        pt.present = !test_present || (*test_present)[ti] != 0;
        pt.psnr_db = pt.present ? psnr(reference.frames[ri], test.frames[ti]) : 0.0;
        series.push_back(pt);
    }
    return series;
}

double apsnr(const FrameStream& reference, const FrameStream& test,
             const std::vector<uint8_t>* test_present) {
    auto series = psnr_series(reference, test, test_present);
    double acc = 0.0;
    uint64_t n = 0;
    for (const auto& pt : series) {
        if (!pt.present) continue;
        acc += pt.psnr_db;
        ++n;
    }
    if (n == 0)
        throw std::domain_error("apsnr: no overlapping present frames");
    return acc / static_cast<double>(n);
}

// --- files --------------------------------------------------------------

void write_frame_file(const std::filesystem::path& path, const FrameStream& stream,
                      const std::vector<uint8_t>* present) {
    stream.validate();
    if (stream.frames.empty())
        throw std::invalid_argument("refusing to write an empty frame stream");
    if (present && present->size() != stream.frames.size())
        throw std::invalid_argument("present flags length mismatch");

    std::ofstream data(path, std::ios::binary | std::ios::trunc);
    if (!data)
        throw std::runtime_error("cannot open for write: " + path.string());
    for (const auto& frame : stream.frames)
        data.write(reinterpret_cast<const char*>(frame.pixels.data()),
                   static_cast<std::streamsize>(frame.pixels.size()));
    if (!data)
        throw std::runtime_error("short write: " + path.string());

    std::filesystem::path meta = path;
    meta += ".meta";
    std::ofstream side(meta, std::ios::trunc);
    if (!side)
        throw std::runtime_error("cannot open for write: " + meta.string());
    const auto& f0 = stream.frames.front();
    side << "width = " << f0.width << "\n";
    side << "height = " << f0.height << "\n";
    side << "channels = " << f0.channels << "\n";
    side << "frame_rate = " << format_double(stream.frame_rate) << "\n";
    side << "frames = " << stream.frames.size() << "\n";
    if (present) {
        side << "present =";
        for (uint8_t p : *present) side << " " << (p ? 1 : 0);
        side << "\n";
    }
    if (!side)
        throw std::runtime_error("short write: " + meta.string());
}

FrameStream read_frame_file(const std::filesystem::path& path, std::vector<uint8_t>* present) {
    std::filesystem::path meta = path;
    meta += ".meta";
    std::ifstream side(meta);
    if (!side)
        throw std::runtime_error("cannot open sidecar: " + meta.string());

    int width = 0, height = 0, channels = 0;
    double frame_rate = 0.0;
    size_t n_frames = 0;
    std::vector<uint8_t> present_flags;

    std::string line;
    while (std::getline(side, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::istringstream key_in(line.substr(0, eq));
        std::string key;
        key_in >> key;
        std::istringstream val(line.substr(eq + 1));
        if (key == "width") val >> width;
        else if (key == "height") val >> height;
        else if (key == "channels") val >> channels;
        else if (key == "frame_rate") val >> frame_rate;
        else if (key == "frames") val >> n_frames;
        else if (key == "present") {
            int flag;
            while (val >> flag) present_flags.push_back(flag ? 1 : 0);
        } else {
            throw std::runtime_error("unknown sidecar key '" + key + "' in " + meta.string());
        }
    }
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3) || n_frames == 0 ||
        frame_rate <= 0.0)
        throw std::runtime_error("incomplete sidecar: " + meta.string());
    if (!present_flags.empty() && present_flags.size() != n_frames)
        throw std::runtime_error("present flags length mismatch in " + meta.string());

    size_t frame_bytes = static_cast<size_t>(width) * height * channels;
    std::ifstream data(path, std::ios::binary);
    if (!data)
        throw std::runtime_error("cannot open: " + path.string());

    FrameStream stream;
    stream.frame_rate = frame_rate;
    for (size_t f = 0; f < n_frames; ++f) {
        VideoFrame frame;
        frame.width = width;
        frame.height = height;
        frame.channels = channels;
        frame.frame_index = static_cast<uint32_t>(f);
        frame.pixels.resize(frame_bytes);
        data.read(reinterpret_cast<char*>(frame.pixels.data()),
                  static_cast<std::streamsize>(frame_bytes));
        if (static_cast<size_t>(data.gcount()) != frame_bytes)
            throw std::runtime_error("short read: " + path.string());
        stream.frames.push_back(std::move(frame));
    }
    if (present) {
        if (present_flags.empty())
            present->assign(n_frames, 1);
        else
            *present = std::move(present_flags);
    }
    return stream;
}

void write_psnr_csv(const std::filesystem::path& path, std::span<const PsnrPoint> series) {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for write: " + path.string());
    f << "frame_index,psnr_db,present\n";
    for (const auto& pt : series)
        f << pt.frame_index << "," << format_double(pt.psnr_db) << "," << (pt.present ? 1 : 0)
          << "\n";
    if (!f)
        throw std::runtime_error("short write: " + path.string());
}

} // namespace nlink::video
