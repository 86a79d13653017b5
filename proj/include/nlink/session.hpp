#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nlink/channel.hpp"
#include "nlink/framing.hpp"
#include "nlink/metrics.hpp"
#include "nlink/modem.hpp"
#include "nlink/video.hpp"

namespace nlink::session {

struct VideoSourceSpec {
    video::Pattern pattern = video::Pattern::moving_box;
    int width = 320;
    int height = 240;
    int channels = 1;
    uint32_t n_frames = 15;
    double frame_rate = 15.0;
    std::filesystem::path frames_file; // non-empty: read this instead of generating
};

struct SessionConfig {
    std::string session_id = "session";
    uint64_t seed = 1;
    double sample_rate = 500000.0;
    size_t payload_size = 1024;
    double video_bit_rate_bps = 500000.0; // offered-load accounting only

    VideoSourceSpec source;
    modem::ModemConfig modem;
    framing::FramingConfig framing;

    // Stages applied between tx and rx. When the model's own rng_seed is 0
    // the session derives one from `seed`, so --seed reruns re-roll noise.
    channel::ChannelModel channel;

    // >= 0 switches to the direct-injection path: the modem is bypassed
    // and payload data bits (not the 6-byte chunk prefix) flip with this
    // probability. Gives exact, cheap control of BER for the PSNR curve.
    double flip_rate = -1.0;

    bool genie_sync = false; // demod with known frequency/phase/timing
    bool save_iq = false;    // channel output capture, can be large
    std::filesystem::path out_dir = "out";

    void validate() const; // throws std::invalid_argument
};

// Flat key=value file, '#' comments. Unknown keys are errors. Relative
// frames_file/channel_file paths resolve against the config's directory.
SessionConfig load_session_config(const std::filesystem::path& path);

struct SessionArtifacts {
    std::filesystem::path report_csv;
    std::filesystem::path psnr_csv;
    std::filesystem::path tx_log;
    std::filesystem::path rx_log;
    std::filesystem::path ref_frames;
    std::filesystem::path rx_frames;
    std::filesystem::path iq_file; // empty unless save_iq
};

struct SessionResult {
    metrics::LinkReport report;
    SessionArtifacts artifacts;
    modem::RxDiagnostics rx_diag; // modem path only
    bool rx_diag_valid = false;
};

// Full pipeline: source -> packetize -> frame -> modulate -> channel ->
// demodulate -> deframe -> match/BER -> reconstruct -> PSNR -> report,
// with every intermediate persisted under out_dir. Deterministic given
// (config, seed). Poor link quality is a result, not an error.
SessionResult run_simulate(const SessionConfig& config);

// Retune the first AWGN stage to this Eb/N0, appending one when the
// model has none. Used by the sweep axis and the --ebn0-db shortcut.
void tune_awgn_db(SessionConfig& config, double ebn0_db);

enum class SweepAxis { ebn0_db, flip_rate };
SweepAxis sweep_axis_from_string(const std::string& name);
const char* sweep_axis_name(SweepAxis axis);

struct SweepPoint {
    double value = 0.0;
    bool failed = false;
    std::string error;
    metrics::LinkReport report;
};

// One run_simulate per value, artifacts under out_dir/point_NNN. ebn0_db
// retunes the first AWGN stage (appending one if the model has none);
// flip_rate switches to the injection path. A failed point is recorded
// and the sweep continues.
std::vector<SweepPoint> run_sweep(const SessionConfig& base, SweepAxis axis,
                                  std::span<const double> values);

void write_sweep_csv(const std::filesystem::path& path, SweepAxis axis,
                     std::span<const SweepPoint> points);

// Offline recomputation from persisted artifacts; produces the same
// report run_simulate did for the same files.
metrics::LinkReport run_analyze(const std::filesystem::path& tx_log,
                                const std::filesystem::path& rx_log,
                                const std::filesystem::path& ref_frames,
                                const std::filesystem::path& rx_frames,
                                const std::string& session_id);

} // namespace nlink::session
