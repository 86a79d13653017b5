#include "nlink/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nlink/rng.hpp"

namespace nlink::channel {

namespace {

constexpr double kPi = std::numbers::pi;

double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }

double tap_power(const MultipathStage& mp) {
    double p = 0.0;
    for (const auto& t : mp.taps) p += std::norm(t.gain);
    return p;
}

double wrap_pi(double x) {
    while (x > kPi) x -= 2.0 * kPi;
    while (x < -kPi) x += 2.0 * kPi;
    return x;
}

// Total complex noise variance, then split evenly across I and Q. For
// ebn0 mode: Eb = P*sps/bps per unit sample power, N0 = Eb/10^(db/10),
// and a unit-bandwidth complex stream carries variance N0.
double sigma_for(const AwgnStage& st, double power) {
    double lin = db_to_lin(st.value_db);
    double var;
    if (st.mode == AwgnStage::Mode::ebn0)
        var = power * st.samples_per_symbol / (st.bits_per_symbol * lin);
    else
        var = power / lin;
    return std::sqrt(var / 2.0); // per component
}

struct StageState {
    Stage def;
    Rng rng{0};
    double sigma = 0.0; // awgn, per component
    double phase = 0.0; // cfo
    uint64_t counter = 0;
    size_t cursor = 0;                        // burst interval index
    std::vector<std::complex<float>> history; // multipath
};

StageState make_state(const Stage& stage, uint64_t seed, size_t index) {
    StageState ss;
    ss.def = stage;
    ss.rng = Rng::derive(seed, index);
    if (const auto* cfo = std::get_if<CfoStage>(&ss.def))
        ss.phase = cfo->initial_phase_rad;
    else if (const auto* mp = std::get_if<MultipathStage>(&ss.def))
        ss.history.assign(static_cast<size_t>(mp->taps.back().delay_samples), {0.0f, 0.0f});
    return ss;
}

std::vector<std::complex<float>> run_stage(StageState& ss, double sample_rate,
                                           std::span<const std::complex<float>> in) {
    std::vector<std::complex<float>> out(in.begin(), in.end());

    if (std::holds_alternative<IdealStage>(ss.def)) {
        return out;
    }
    if (std::holds_alternative<AwgnStage>(ss.def)) {
        float sig = static_cast<float>(ss.sigma);
        for (auto& s : out)
            s += std::complex<float>(sig * static_cast<float>(ss.rng.gaussian()),
                                     sig * static_cast<float>(ss.rng.gaussian()));
        return out;
    }
    if (const auto* cfo = std::get_if<CfoStage>(&ss.def)) {
        double w = 2.0 * kPi * cfo->offset_hz / sample_rate;
        for (auto& s : out) {
            auto r = std::polar(1.0, ss.phase);
            s = std::complex<float>(
                static_cast<float>(s.real() * r.real() - s.imag() * r.imag()),
                static_cast<float>(s.real() * r.imag() + s.imag() * r.real()));
            ss.phase = wrap_pi(ss.phase + w);
        }
        return out;
    }
    if (const auto* mp = std::get_if<MultipathStage>(&ss.def)) {
        size_t d_max = ss.history.size();
        std::vector<std::complex<float>> ext;
        ext.reserve(d_max + in.size());
        ext.insert(ext.end(), ss.history.begin(), ss.history.end());
        ext.insert(ext.end(), in.begin(), in.end());

        for (size_t n = 0; n < in.size(); ++n) {
            std::complex<float> acc{0.0f, 0.0f};
            for (const auto& t : mp->taps)
                acc += t.gain * ext[n + d_max - static_cast<size_t>(t.delay_samples)];
            out[n] = acc;
        }
        if (d_max > 0)
            ss.history.assign(ext.end() - static_cast<long>(d_max), ext.end());
        return out;
    }
    if (const auto* bd = std::get_if<BurstDropStage>(&ss.def)) {
        for (size_t n = 0; n < in.size(); ++n) {
            uint64_t idx = ss.counter + n;
            while (ss.cursor < bd->intervals.size() && bd->intervals[ss.cursor].end <= idx)
                ++ss.cursor;
            if (ss.cursor < bd->intervals.size() && idx >= bd->intervals[ss.cursor].start)
                out[n] = {0.0f, 0.0f};
        }
        ss.counter += in.size();
        return out;
    }
    return out;
}

std::vector<std::complex<float>> flush_stage(StageState& ss, double sample_rate) {
    if (const auto* mp = std::get_if<MultipathStage>(&ss.def)) {
        size_t tail = static_cast<size_t>(mp->taps.back().delay_samples);
        if (tail == 0) return {};
        std::vector<std::complex<float>> zeros(tail, {0.0f, 0.0f});
        return run_stage(ss, sample_rate, zeros);
    }
    return {};
}

} // namespace

void ChannelModel::validate() const {
    for (const auto& stage : stages) {
        if (const auto* mp = std::get_if<MultipathStage>(&stage)) {
            if (mp->taps.empty())
                throw std::invalid_argument("multipath stage needs at least one tap");
            if (mp->taps.front().delay_samples != 0)
                throw std::invalid_argument("first multipath tap must be at delay 0");
            for (size_t i = 0; i < mp->taps.size(); ++i) {
                if (mp->taps[i].delay_samples < 0)
                    throw std::invalid_argument("multipath delays must be non-negative");
                if (i > 0 && mp->taps[i].delay_samples < mp->taps[i - 1].delay_samples)
                    throw std::invalid_argument("multipath delays must be non-decreasing");
            }
            if (tap_power(*mp) <= 0.0)
                throw std::invalid_argument("multipath total tap power must be positive");
        } else if (const auto* bd = std::get_if<BurstDropStage>(&stage)) {
            for (size_t i = 0; i < bd->intervals.size(); ++i) {
                if (bd->intervals[i].start >= bd->intervals[i].end)
                    throw std::invalid_argument("burst_drop interval must have start < end");
                if (i > 0 && bd->intervals[i].start < bd->intervals[i - 1].end)
                    throw std::invalid_argument("burst_drop intervals must be sorted and disjoint");
            }
        } else if (const auto* awgn = std::get_if<AwgnStage>(&stage)) {
            if (awgn->bits_per_symbol < 1 || awgn->samples_per_symbol < 1)
                throw std::invalid_argument("awgn bits_per_symbol and samples_per_symbol must be >= 1");
        }
    }
}

double calibrate_awgn(const IqBuffer& iq, double ebn0_db, int bits_per_symbol,
                      int samples_per_symbol) {
    double p = mean_power(iq.samples);
    if (p <= 0.0)
        throw std::invalid_argument("cannot calibrate noise against a zero-power signal");
    return p * samples_per_symbol / (bits_per_symbol * db_to_lin(ebn0_db));
}

struct ChannelStream::Impl {
    std::vector<StageState> states;
    double sample_rate = 0.0;
    bool finished = false;
};

ChannelStream::ChannelStream(const ChannelModel& model, double sample_rate,
                             double reference_power)
    : impl_(std::make_unique<Impl>()) {
    model.validate();
    if (sample_rate <= 0.0)
        throw std::invalid_argument("sample_rate must be positive");
    if (reference_power <= 0.0)
        throw std::invalid_argument("reference_power must be positive");
    impl_->sample_rate = sample_rate;

    double power = reference_power;
    for (size_t i = 0; i < model.stages.size(); ++i) {
        auto ss = make_state(model.stages[i], model.rng_seed, i);
        if (const auto* awgn = std::get_if<AwgnStage>(&ss.def))
            ss.sigma = sigma_for(*awgn, power);
        else if (const auto* mp = std::get_if<MultipathStage>(&ss.def))
            power *= tap_power(*mp);
        impl_->states.push_back(std::move(ss));
    }
}

ChannelStream::~ChannelStream() = default;
ChannelStream::ChannelStream(ChannelStream&&) noexcept = default;
ChannelStream& ChannelStream::operator=(ChannelStream&&) noexcept = default;

std::vector<std::complex<float>> ChannelStream::push(std::span<const std::complex<float>> samples) {
    if (impl_->finished)
        throw std::logic_error("push after finish");
    std::vector<std::complex<float>> cur(samples.begin(), samples.end());
    for (auto& ss : impl_->states)
        cur = run_stage(ss, impl_->sample_rate, cur);
    return cur;
}

std::vector<std::complex<float>> ChannelStream::finish() {
    if (impl_->finished)
        throw std::logic_error("finish called twice");
    impl_->finished = true;
    // each stage's own tail must still pass through everything after it
    std::vector<std::complex<float>> cur;
    for (auto& ss : impl_->states) {
        auto through = run_stage(ss, impl_->sample_rate, cur);
        auto tail = flush_stage(ss, impl_->sample_rate);
        through.insert(through.end(), tail.begin(), tail.end());
        cur = std::move(through);
    }
    return cur;
}

IqBuffer apply(const ChannelModel& model, const IqBuffer& iq) {
    model.validate();
    if (iq.sample_rate <= 0.0)
        throw std::invalid_argument("iq.sample_rate must be positive");

    std::vector<std::complex<float>> cur = iq.samples;
    for (size_t i = 0; i < model.stages.size(); ++i) {
        auto ss = make_state(model.stages[i], model.rng_seed, i);
        if (const auto* awgn = std::get_if<AwgnStage>(&ss.def)) {
            double p = mean_power(cur);
            if (p <= 0.0)
                throw std::invalid_argument("awgn stage input has zero power");
            ss.sigma = sigma_for(*awgn, p);
        }
        auto through = run_stage(ss, iq.sample_rate, cur);
        auto tail = flush_stage(ss, iq.sample_rate);
        through.insert(through.end(), tail.begin(), tail.end());
        cur = std::move(through);
    }
    return IqBuffer{std::move(cur), iq.sample_rate};
}

// --- description files -------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line, const std::string& msg) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + msg);
}

} // namespace

ChannelModel load_channel_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open channel file: " + path.string());

    ChannelModel model;
    Stage* current = nullptr;
    std::string raw;
    int lineno = 0;

    while (std::getline(f, raw)) {
        ++lineno;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                parse_fail(path, lineno, "unterminated section header");
            std::string name = trim(line.substr(1, line.size() - 2));
            if (name == "ideal")
                model.stages.emplace_back(IdealStage{});
            else if (name == "awgn")
                model.stages.emplace_back(AwgnStage{});
            else if (name == "cfo")
                model.stages.emplace_back(CfoStage{});
            else if (name == "multipath")
                model.stages.emplace_back(MultipathStage{});
            else if (name == "burst_drop")
                model.stages.emplace_back(BurstDropStage{});
            else
                parse_fail(path, lineno, "unknown stage '" + name + "'");
            current = &model.stages.back();
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string::npos)
            parse_fail(path, lineno, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));

        try {
            if (!current) {
                if (key == "seed")
                    model.rng_seed = std::stoull(value);
                else
                    parse_fail(path, lineno, "unknown top-level key '" + key + "'");
            } else if (auto* awgn = std::get_if<AwgnStage>(current)) {
                if (key == "ebn0_db") {
                    awgn->mode = AwgnStage::Mode::ebn0;
                    awgn->value_db = std::stod(value);
                } else if (key == "snr_db") {
                    awgn->mode = AwgnStage::Mode::snr;
                    awgn->value_db = std::stod(value);
                } else if (key == "bits_per_symbol") {
                    awgn->bits_per_symbol = std::stoi(value);
                } else if (key == "samples_per_symbol") {
                    awgn->samples_per_symbol = std::stoi(value);
                } else {
                    parse_fail(path, lineno, "unknown awgn key '" + key + "'");
                }
            } else if (auto* cfo = std::get_if<CfoStage>(current)) {
                if (key == "offset_hz")
                    cfo->offset_hz = std::stod(value);
                else if (key == "initial_phase_rad")
                    cfo->initial_phase_rad = std::stod(value);
                else
                    parse_fail(path, lineno, "unknown cfo key '" + key + "'");
            } else if (auto* mp = std::get_if<MultipathStage>(current)) {
                if (key == "tap") {
                    std::istringstream iss(value);
                    int delay;
                    float re, im;
                    if (!(iss >> delay >> re >> im))
                        parse_fail(path, lineno, "tap wants 'DELAY RE IM'");
                    mp->taps.push_back({delay, {re, im}});
                } else {
                    parse_fail(path, lineno, "unknown multipath key '" + key + "'");
                }
            } else if (auto* bd = std::get_if<BurstDropStage>(current)) {
                if (key == "interval") {
                    std::istringstream iss(value);
                    uint64_t a, b;
                    if (!(iss >> a >> b))
                        parse_fail(path, lineno, "interval wants 'START END'");
                    bd->intervals.push_back({a, b});
                } else {
                    parse_fail(path, lineno, "unknown burst_drop key '" + key + "'");
                }
            } else {
                parse_fail(path, lineno, "stage takes no keys");
            }
        } catch (const std::invalid_argument&) {
            parse_fail(path, lineno, "bad number '" + value + "'");
        } catch (const std::out_of_range&) {
            parse_fail(path, lineno, "number out of range '" + value + "'");
        }
    }

    model.validate();
    return model;
}

void save_channel_file(const std::filesystem::path& path, const ChannelModel& model) {
    model.validate();
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for write: " + path.string());

    f << "seed = " << model.rng_seed << "\n";
    for (const auto& stage : model.stages) {
        if (std::holds_alternative<IdealStage>(stage)) {
            f << "\n[ideal]\n";
        } else if (const auto* awgn = std::get_if<AwgnStage>(&stage)) {
            f << "\n[awgn]\n";
            f << (awgn->mode == AwgnStage::Mode::ebn0 ? "ebn0_db = " : "snr_db = ")
              << awgn->value_db << "\n";
            f << "bits_per_symbol = " << awgn->bits_per_symbol << "\n";
            f << "samples_per_symbol = " << awgn->samples_per_symbol << "\n";
        } else if (const auto* cfo = std::get_if<CfoStage>(&stage)) {
            f << "\n[cfo]\n";
            f << "offset_hz = " << cfo->offset_hz << "\n";
            f << "initial_phase_rad = " << cfo->initial_phase_rad << "\n";
        } else if (const auto* mp = std::get_if<MultipathStage>(&stage)) {
            f << "\n[multipath]\n";
            for (const auto& t : mp->taps)
                f << "tap = " << t.delay_samples << " " << t.gain.real() << " " << t.gain.imag()
                  << "\n";
        } else if (const auto* bd = std::get_if<BurstDropStage>(&stage)) {
            f << "\n[burst_drop]\n";
            for (const auto& iv : bd->intervals)
                f << "interval = " << iv.start << " " << iv.end << "\n";
        }
    }
    if (!f)
        throw std::runtime_error("short write: " + path.string());
}

} // namespace nlink::channel
