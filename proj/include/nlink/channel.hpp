#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "nlink/iq.hpp"

namespace nlink::channel {

// Impairment stages, applied in list order. Everything random is driven
// by ChannelModel::rng_seed with one derived stream per stage, so a model
// is a pure function of (input, seed).

struct IdealStage {};

struct AwgnStage {
    enum class Mode { ebn0, snr };
    Mode mode = Mode::ebn0;
    double value_db = 10.0;
    // Needed to translate Eb/N0 into per-sample noise. snr mode ignores
    // them (snr_db compares signal power to total complex noise power).
    int bits_per_symbol = 1;
    int samples_per_symbol = 4;
};

struct CfoStage {
    double offset_hz = 0.0;
    double initial_phase_rad = 0.0;
};

struct MultipathTap {
    int delay_samples = 0;
    std::complex<float> gain{1.0f, 0.0f};
};

struct MultipathStage {
    std::vector<MultipathTap> taps; // taps[0] at delay 0, delays non-decreasing
};

struct BurstDropStage {
    struct Interval {
        uint64_t start = 0, end = 0; // [start, end) in samples
    };
    std::vector<Interval> intervals; // sorted, non-overlapping
};

using Stage = std::variant<IdealStage, AwgnStage, CfoStage, MultipathStage, BurstDropStage>;

struct ChannelModel {
    std::vector<Stage> stages;
    uint64_t rng_seed = 0;

    void validate() const; // throws std::invalid_argument
};

// Per-sample complex noise variance for a requested Eb/N0:
// sigma^2 = P * sps / (bps * 10^(db/10)). Throws on zero-power input.
double calibrate_awgn(const IqBuffer& iq, double ebn0_db, int bits_per_symbol,
                      int samples_per_symbol);

// One-shot application. AWGN stages calibrate against the measured power
// of their own input. Output length = input length + total multipath delay.
IqBuffer apply(const ChannelModel& model, const IqBuffer& iq);

/*
 * Block-streaming variant. Noise calibration cannot look at the whole
 * signal here, so AWGN stages scale off reference_power (the nominal mean
 * power entering the chain; for unit-energy-per-symbol shaping that is
 * 1/sps), adjusted by the power gain of any multipath stage before them.
 */
class ChannelStream {
public:
    ChannelStream(const ChannelModel& model, double sample_rate, double reference_power);
    ~ChannelStream();
    ChannelStream(ChannelStream&&) noexcept;
    ChannelStream& operator=(ChannelStream&&) noexcept;

    std::vector<std::complex<float>> push(std::span<const std::complex<float>> samples);
    std::vector<std::complex<float>> finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/*
 * Channel description file: line-oriented, '#' comments, a top-level
 * "seed = N", then one "[stage]" section per stage in order:
 *
 *   seed = 42
 *   [cfo]
 *   offset_hz = 50
 *   initial_phase_rad = 0.25
 *   [awgn]
 *   ebn0_db = 6
 *   samples_per_symbol = 4
 *   [multipath]
 *   tap = 0 1.0 0.0
 *   tap = 3 0.2 -0.1
 *   [burst_drop]
 *   interval = 100000 150000
 *   [ideal]
 */
ChannelModel load_channel_file(const std::filesystem::path& path);
void save_channel_file(const std::filesystem::path& path, const ChannelModel& model);

} // namespace nlink::channel
