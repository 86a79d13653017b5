#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nlink::video {

// Returned for zero error; computed values are also capped here so the
// scale stays comparable across frame sizes.
inline constexpr double kPsnrCap = 100.0;

struct VideoFrame {
    int width = 320;
    int height = 240;
    int channels = 1; // 1 grayscale, 3 color (stored planar)
    uint32_t frame_index = 0;
    std::vector<uint8_t> pixels; // width*height*channels bytes

    static constexpr int bit_depth = 8;
    void validate() const; // throws std::invalid_argument
};

struct FrameStream {
    double frame_rate = 15.0;
    std::vector<VideoFrame> frames; // frame_index strictly increasing

    void validate() const;
};

enum class Pattern { gradient, checker, moving_box, noise };

Pattern pattern_from_string(const std::string& name); // throws on unknown
const char* pattern_name(Pattern p);

// Deterministic synthetic source. gradient: linear ramp over the pixel
// index. checker: 16 px cells. moving_box: bright box bouncing 1 px per
// frame over a dark background. noise: uniform bytes, derived per frame
// from (seed, frame_index) so a frame's content does not depend on how
// many frames are generated.
FrameStream generate_test_pattern(Pattern kind, int width, int height, int channels,
                                  uint32_t n_frames, double frame_rate = 15.0,
                                  uint64_t seed = 0);

/*
 * Chunk payload layout (lossless, no padding; the last chunk of a frame
 * is short):
 *
 *   0           4           6
 *   +-----------+-----------+------------------+
 *   | frame u32 | chunk u16 |   pixel bytes    |
 *   +-----------+-----------+------------------+
 *   both prefix fields big-endian
 */
inline constexpr size_t kChunkPrefixBytes = 6;

std::vector<std::vector<uint8_t>> packetize(const FrameStream& stream, size_t payload_size);

void encode_chunk_prefix(uint32_t frame_index, uint16_t chunk_index, uint8_t* out6);
void decode_chunk_prefix(const uint8_t* in6, uint32_t& frame_index, uint16_t& chunk_index);

struct StreamGeometry {
    int width = 320;
    int height = 240;
    int channels = 1;
    uint32_t n_frames = 0;
    double frame_rate = 15.0;
    size_t payload_size = 1024; // fixes the chunk grid for placement
};

struct ReconstructResult {
    FrameStream stream;           // always n_frames entries
    std::vector<uint8_t> present; // 1 if the frame had at least one chunk
    uint32_t frames_absent = 0;
    uint64_t chunks_written = 0;
    uint64_t chunks_rejected = 0; // unparseable or out-of-range prefix
};

// Rebuild frames from whatever chunks made it across. Missing regions are
// concealed with the co-located bytes of the previous reconstructed frame
// (mid-gray 128 before the first frame). Corrupted chunk bodies land in
// the picture as-is; that is the point.
ReconstructResult reconstruct(std::span<const std::vector<uint8_t>> payloads,
                              const StreamGeometry& geometry);

// Eq.-style peak signal-to-noise ratio over all pixel bytes:
// 10*log10(255^2 * w*h*channels / sum((X-Y)^2)), capped at kPsnrCap.
// Throws std::invalid_argument on geometry mismatch.
double psnr(const VideoFrame& reference, const VideoFrame& test);

struct PsnrPoint {
    uint32_t frame_index = 0;
    double psnr_db = 0.0;
    bool present = true;
};

// Per-frame PSNR for frames that exist in both streams; frames flagged
// not-present in test_present are carried through with present = false
// and no PSNR contribution.
std::vector<PsnrPoint> psnr_series(const FrameStream& reference, const FrameStream& test,
                                   const std::vector<uint8_t>* test_present = nullptr);

// Arithmetic mean of the present-frame PSNRs. Throws std::domain_error
// when no frame overlaps.
double apsnr(const FrameStream& reference, const FrameStream& test,
             const std::vector<uint8_t>* test_present = nullptr);

/*
 * Frame file: raw planar frames back to back, geometry in a text sidecar
 * at <path>.meta:
 *
 *   width = 320
 *   height = 240
 *   channels = 1
 *   frame_rate = 15
 *   frames = 17
 *   present = 1 1 0 1 ...   (optional)
 */
void write_frame_file(const std::filesystem::path& path, const FrameStream& stream,
                      const std::vector<uint8_t>* present = nullptr);
FrameStream read_frame_file(const std::filesystem::path& path,
                            std::vector<uint8_t>* present = nullptr);

void write_psnr_csv(const std::filesystem::path& path, std::span<const PsnrPoint> series);

} // namespace nlink::video
