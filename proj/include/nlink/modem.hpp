#pragma once

#include <cstdint>
#include <vector>

#include "nlink/bits.hpp"
#include "nlink/iq.hpp"

namespace nlink::modem {

struct ModemConfig {
    int samples_per_symbol = 4;
    double rrc_rolloff = 0.35;
    int rrc_span_symbols = 12;     // even; filter length = span*sps + 1
    double timing_loop_bw = 0.01;  // normalized to symbol rate
    double carrier_loop_bw = 0.005;
    // Idle symbols prepended by tx so the receive loops have something to
    // chew on before the first packet. Alternating +1/-1, strong timing
    // content. The timing loop needs ~450 updates to settle at the default
    // bandwidth, and live data feeds it less often than the ramp does, so
    // anything shorter leaks the tail of the acquisition transient into the
    // first packet. Keep >= 200 unless the receiver is genie-aided.
    int ramp_symbols = 512;

    void validate() const; // throws std::invalid_argument
};

struct RxDiagnostics {
    double freq_offset_hz = 0.0;    // coarse squaring estimate + PLL residual
    double residual_phase_var = 0.0;
    double timing_err_rms = 0.0;    // Gardner error rms at transition updates
    bool timing_locked = false;
    bool carrier_locked = false;
    uint64_t symbols_out = 0;
};

struct RxResult {
    BitVec bits;
    RxDiagnostics diag;
};

// 0 -> -1.0, 1 -> +1.0
std::vector<float> bits_to_symbols(std::span<const uint8_t> bits);

// Root raised cosine, unit energy, length span*sps + 1, symmetric. TX and
// RX each apply one copy; the cascade is (close to) Nyquist at the symbol
// spacing, truncation leaves a small residual.
std::vector<float> rrc_taps(const ModemConfig& config);

// Ideal coherent BPSK bit error probability, 0.5*erfc(sqrt(Eb/N0)).
double ber_vs_ebn0_reference(double ebn0_db);

// Frequency of the strongest squared-carrier line, halved. Works on raw
// (pre-matched-filter) samples; good to a fraction of an FFT bin.
double estimate_cfo_hz(const IqBuffer& iq);

// |FFT|^2 with a Hann window, for spectral checks. n_fft must be a power
// of two; input is truncated or zero-padded to fit.
std::vector<double> power_spectrum(std::span<const std::complex<float>> x, size_t n_fft);

/*
 * Streaming transmitter. push_bits may be called any number of times;
 * every call returns the samples that became available. finish() flushes
 * the shaping filter tail. Sample count over a whole stream is
 * (ramp_symbols + total_bits)*sps + span*sps, identical to the one-shot
 * tx_chain on the concatenated bits.
 */
class TxStream {
public:
    TxStream(const ModemConfig& config, double sample_rate);

    IqBuffer push_bits(std::span<const uint8_t> bits);
    IqBuffer finish();

private:
    IqBuffer shape(std::span<const float> symbols, bool flush);

    ModemConfig cfg_;
    double sample_rate_;
    std::vector<float> taps_;
    std::vector<std::complex<float>> carry_;
    bool ramp_sent_ = false;
    bool finished_ = false;
};

/*
 * Streaming receiver: squaring-based frequency estimate, derotation,
 * matched filter, Gardner timing loop with piecewise-parabolic
 * interpolation, decision-directed carrier phase loop, hard slicing.
 *
 * The frequency estimator needs a lead-in, so push() buffers until it has
 * ~2^17 samples (or finish() is called) and output lags input by that
 * much. Bits may come back 180 degrees inverted; framing resolves it.
 */
class RxStream {
public:
    RxStream(const ModemConfig& config, double sample_rate);

    BitVec push(std::span<const std::complex<float>> samples);
    BitVec finish();
    const RxDiagnostics& diagnostics() const { return diag_; }

private:
    BitVec process(std::span<const std::complex<float>> samples);
    BitVec run_loops();

    ModemConfig cfg_;
    double sample_rate_;
    std::vector<float> taps_;

    std::vector<std::complex<float>> pending_; // pre-estimate backlog
    bool estimated_ = false;

    double freq_hz_ = 0.0;   // derotator
    double rot_phase_ = 0.0;

    std::vector<std::complex<float>> fir_carry_;

    std::vector<std::complex<float>> win_; // matched-filter output window
    uint64_t win_base_ = 0;               // absolute index of win_[0]
    double pos_ = 0.0;                    // interpolant position, absolute
    double rate_ = 0.0;                   // samples per symbol, adapted
    double pw_ = 1.0;                     // symbol power tracker
    std::complex<float> prev_strobe_{0.0f, 0.0f};
    double ted_kp_ = 0.0, ted_ki_ = 0.0;
    uint64_t ted_updates_ = 0;  // transition-gated loop updates so far
    bool rate_runaway_ = false; // acquisition ended far off the nominal rate

    double pll_phase_ = 0.0, pll_freq_ = 0.0;
    double pll_kp_ = 0.0, pll_ki_ = 0.0;

    uint64_t n_symbols_ = 0;
    double ted_err_acc_ = 0.0, pll_err_acc_ = 0.0, pll_freq_acc_ = 0.0;
    double re_mag_acc_ = 0.0, im_mag_acc_ = 0.0;
    uint64_t stat_symbols_ = 0, ted_stat_updates_ = 0;

    bool finished_ = false;
    RxDiagnostics diag_;
};

IqBuffer tx_chain(std::span<const uint8_t> bits, const ModemConfig& config, double sample_rate);
RxResult rx_chain(const IqBuffer& iq, const ModemConfig& config);

// Perfect-synchronization demod: derotate by the known offset, sample the
// matched filter at the known instants. Isolates detector performance
// from acquisition, for BER-vs-theory measurements.
struct GenieSync {
    double freq_offset_hz = 0.0;
    double phase_rad = 0.0;
};
RxResult rx_chain_genie(const IqBuffer& iq, const ModemConfig& config, const GenieSync& sync);

} // namespace nlink::modem
