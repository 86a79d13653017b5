#include "nlink/session.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "nlink/bits.hpp"
#include "nlink/iq.hpp"
#include "nlink/packet_log.hpp"
#include "nlink/rng.hpp"
#include "nlink/textio.hpp"

namespace nlink::session {

namespace fs = std::filesystem;

namespace {

// rng stream ids, one per independent randomness consumer
constexpr uint64_t kChannelSeedStream = 11;
constexpr uint64_t kFlipStream = 12;

} // namespace

void SessionConfig::validate() const {
    if (session_id.empty())
        throw std::invalid_argument("session_id must not be empty");
    if (sample_rate <= 0.0)
        throw std::invalid_argument("sample_rate must be positive");
    if (payload_size <= video::kChunkPrefixBytes)
        throw std::invalid_argument("payload_size must exceed the 6-byte chunk prefix");
    if (payload_size > framing.max_payload_bytes)
        throw std::invalid_argument("payload_size exceeds framing max_payload_bytes");
    if (video_bit_rate_bps <= 0.0)
        throw std::invalid_argument("video_bit_rate must be positive");
    if (flip_rate > 1.0)
        throw std::invalid_argument("flip_rate must be <= 1");
    if (flip_rate >= 0.0 && genie_sync)
        throw std::invalid_argument("genie_sync has no meaning on the flip-injection path");
    modem.validate();
    channel.validate();
    if (source.frames_file.empty()) {
        if (source.width <= 0 || source.height <= 0)
            throw std::invalid_argument("source dimensions must be positive");
        if (source.channels != 1 && source.channels != 3)
            throw std::invalid_argument("source channels must be 1 or 3");
        if (source.n_frames == 0)
            throw std::invalid_argument("source needs at least one frame");
        if (source.frame_rate <= 0.0)
            throw std::invalid_argument("frame_rate must be positive");
    }
}

SessionConfig load_session_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open config: " + path.string());

    SessionConfig cfg;
    fs::path base = path.parent_path();
    auto resolve = [&base](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q : base / q;
    };

    std::string raw;
    int lineno = 0;
    while (std::getline(f, raw)) {
        ++lineno;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r\n");
        line = line.substr(first, last - first + 1);

        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected 'key = value'");
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));

        try {
            if (key == "session_id") cfg.session_id = value;
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "sample_rate") cfg.sample_rate = std::stod(value);
            else if (key == "payload_size") cfg.payload_size = std::stoull(value);
            else if (key == "video_bit_rate") cfg.video_bit_rate_bps = std::stod(value);
            else if (key == "pattern") cfg.source.pattern = video::pattern_from_string(value);
            else if (key == "width") cfg.source.width = std::stoi(value);
            else if (key == "height") cfg.source.height = std::stoi(value);
            else if (key == "channels") cfg.source.channels = std::stoi(value);
            else if (key == "frames") cfg.source.n_frames = static_cast<uint32_t>(std::stoul(value));
            else if (key == "frame_rate") cfg.source.frame_rate = std::stod(value);
            else if (key == "frames_file") cfg.source.frames_file = resolve(value);
            else if (key == "channel_file") cfg.channel = channel::load_channel_file(resolve(value));
            else if (key == "flip_rate") cfg.flip_rate = std::stod(value);
            else if (key == "genie_sync") cfg.genie_sync = std::stoi(value) != 0;
            else if (key == "save_iq") cfg.save_iq = std::stoi(value) != 0;
            else if (key == "out_dir") cfg.out_dir = value;
            else if (key == "sps") cfg.modem.samples_per_symbol = std::stoi(value);
            else if (key == "rolloff") cfg.modem.rrc_rolloff = std::stod(value);
            else if (key == "span") cfg.modem.rrc_span_symbols = std::stoi(value);
            else if (key == "timing_loop_bw") cfg.modem.timing_loop_bw = std::stod(value);
            else if (key == "carrier_loop_bw") cfg.modem.carrier_loop_bw = std::stod(value);
            else if (key == "ramp_symbols") cfg.modem.ramp_symbols = std::stoi(value);
            else if (key == "max_payload") cfg.framing.max_payload_bytes = static_cast<uint16_t>(std::stoul(value));
            else if (key == "detect_threshold") cfg.framing.detect_threshold = std::stoi(value);
            else
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                         ": unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::out_of_range&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": value out of range '" + value + "'");
        }
    }
    return cfg;
}

namespace {

video::FrameStream make_source(const SessionConfig& cfg) {
    if (!cfg.source.frames_file.empty())
        return video::read_frame_file(cfg.source.frames_file);
    return video::generate_test_pattern(cfg.source.pattern, cfg.source.width, cfg.source.height,
                                        cfg.source.channels, cfg.source.n_frames,
                                        cfg.source.frame_rate, cfg.seed);
}

modem::GenieSync genie_from_channel(const channel::ChannelModel& model) {
    modem::GenieSync sync;
    for (const auto& stage : model.stages) {
        if (const auto* cfo = std::get_if<channel::CfoStage>(&stage)) {
            sync.freq_offset_hz += cfo->offset_hz;
            sync.phase_rad += cfo->initial_phase_rad;
        }
    }
    return sync;
}

} // namespace

SessionResult run_simulate(const SessionConfig& config) {
    config.validate();
    fs::create_directories(config.out_dir);

    video::FrameStream ref = make_source(config);
    if (ref.frames.empty())
        throw std::invalid_argument("video source produced no frames");

    auto payloads = video::packetize(ref, config.payload_size);
    if (payloads.size() > metrics::kMaxSessionPackets)
        throw std::invalid_argument("session exceeds one seq-wrap segment (2^16 packets)");

    PacketLog tx_log;
    tx_log.reserve(payloads.size());
    for (size_t i = 0; i < payloads.size(); ++i)
        tx_log.push_back({static_cast<uint16_t>(i), std::move(payloads[i])});

    SessionResult result;
    PacketLog rx_log;
    uint32_t malformed = 0;

    if (config.flip_rate >= 0.0) {
        Rng rng = Rng::derive(config.seed, kFlipStream);
        rx_log = tx_log;
        for (auto& entry : rx_log)
            for (size_t b = video::kChunkPrefixBytes; b < entry.payload.size(); ++b)
                for (int k = 0; k < 8; ++k)
                    if (rng.uniform() < config.flip_rate)
                        entry.payload[b] ^= static_cast<uint8_t>(1u << k);
    } else {
        auto chan_model = config.channel;
        if (chan_model.rng_seed == 0) {
            Rng seed_rng = Rng::derive(config.seed, kChannelSeedStream);
            chan_model.rng_seed = seed_rng.next_u64();
        }

        modem::TxStream tx(config.modem, config.sample_rate);
        double ref_power = 1.0 / config.modem.samples_per_symbol;
        channel::ChannelStream chan(chan_model, config.sample_rate, ref_power);

        std::optional<IqFileWriter> iq_out;
        if (config.save_iq) {
            result.artifacts.iq_file = config.out_dir / "channel.nliq";
            iq_out.emplace(result.artifacts.iq_file, config.sample_rate);
        }

        std::optional<modem::RxStream> rx;
        std::vector<std::complex<float>> genie_buf;
        if (!config.genie_sync)
            rx.emplace(config.modem, config.sample_rate);

        BitVec rx_bits;
        auto feed = [&](std::vector<std::complex<float>>&& block) {
            if (iq_out) iq_out->append(block);
            if (config.genie_sync) {
                genie_buf.insert(genie_buf.end(), block.begin(), block.end());
            } else {
                auto bits = rx->push(block);
                rx_bits.insert(rx_bits.end(), bits.begin(), bits.end());
            }
        };

        for (const auto& entry : tx_log) {
            auto pkt = framing::build_packet(entry.payload, entry.seq_num, 1, config.framing);
            auto bits = bytes_to_bits(pkt);
            feed(chan.push(tx.push_bits(bits).samples));
        }
        feed(chan.push(tx.finish().samples));
        feed(chan.finish());

        if (config.genie_sync) {
            IqBuffer buf{std::move(genie_buf), config.sample_rate};
            auto res = modem::rx_chain_genie(buf, config.modem, genie_from_channel(chan_model));
            rx_bits = std::move(res.bits);
            result.rx_diag = res.diag;
        } else {
            auto bits = rx->finish();
            rx_bits.insert(rx_bits.end(), bits.begin(), bits.end());
            result.rx_diag = rx->diagnostics();
        }
        result.rx_diag_valid = true;
        if (iq_out) iq_out->close();

        auto extract = framing::extract_packets(rx_bits, config.framing);
        malformed = static_cast<uint32_t>(extract.stats.dropped_bad_header +
                                          extract.stats.dropped_truncated);
        rx_log.reserve(extract.packets.size());
        for (auto& pkt : extract.packets)
            rx_log.push_back({pkt.header.seq_num, std::move(pkt.payload)});
    }

    auto match = metrics::match_packets(tx_log, rx_log);
    auto ber = metrics::compute_ber(match, tx_log, rx_log);

    video::StreamGeometry geom;
    geom.width = ref.frames.front().width;
    geom.height = ref.frames.front().height;
    geom.channels = ref.frames.front().channels;
    geom.n_frames = static_cast<uint32_t>(ref.frames.size());
    geom.frame_rate = ref.frame_rate;
    geom.payload_size = config.payload_size;

    std::vector<std::vector<uint8_t>> rx_payloads;
    rx_payloads.reserve(rx_log.size());
    for (const auto& entry : rx_log)
        rx_payloads.push_back(entry.payload);
    auto recon = video::reconstruct(rx_payloads, geom);
    auto series = video::psnr_series(ref, recon.stream, &recon.present);

    result.report = metrics::build_report(config.session_id, match, ber, series,
                                          recon.frames_absent, malformed);

    auto& art = result.artifacts;
    art.tx_log = config.out_dir / "tx_packets.nlpl";
    art.rx_log = config.out_dir / "rx_packets.nlpl";
    art.ref_frames = config.out_dir / "ref_frames.raw";
    art.rx_frames = config.out_dir / "rx_frames.raw";
    art.psnr_csv = config.out_dir / "psnr.csv";
    art.report_csv = config.out_dir / "report.csv";

    write_packet_log(art.tx_log, tx_log, 0);
    write_packet_log(art.rx_log, rx_log, malformed);
    video::write_frame_file(art.ref_frames, ref);
    video::write_frame_file(art.rx_frames, recon.stream, &recon.present);
    video::write_psnr_csv(art.psnr_csv, result.report.psnr_series);
    metrics::write_report_csv(art.report_csv, {&result.report, 1});

    return result;
}

void tune_awgn_db(SessionConfig& config, double ebn0_db) {
    for (auto& stage : config.channel.stages) {
        if (auto* awgn = std::get_if<channel::AwgnStage>(&stage)) {
            awgn->mode = channel::AwgnStage::Mode::ebn0;
            awgn->value_db = ebn0_db;
            return;
        }
    }
    channel::AwgnStage awgn;
    awgn.mode = channel::AwgnStage::Mode::ebn0;
    awgn.value_db = ebn0_db;
    awgn.bits_per_symbol = 1;
    awgn.samples_per_symbol = config.modem.samples_per_symbol;
    config.channel.stages.emplace_back(awgn);
}

SweepAxis sweep_axis_from_string(const std::string& name) {
    if (name == "ebn0_db" || name == "ebn0") return SweepAxis::ebn0_db;
    if (name == "flip_rate" || name == "flip") return SweepAxis::flip_rate;
    throw std::invalid_argument("unknown sweep axis '" + name + "'");
}

const char* sweep_axis_name(SweepAxis axis) {
    return axis == SweepAxis::ebn0_db ? "ebn0_db" : "flip_rate";
}

std::vector<SweepPoint> run_sweep(const SessionConfig& base, SweepAxis axis,
                                  std::span<const double> values) {
    if (values.empty())
        throw std::invalid_argument("sweep needs at least one value");

    std::vector<SweepPoint> points;
    for (size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        SessionConfig cfg = base;
        char dir[32];
        std::snprintf(dir, sizeof(dir), "point_%03zu", i);
        cfg.out_dir = base.out_dir / dir;
        cfg.session_id = base.session_id + "_" + sweep_axis_name(axis) + "_" + format_double(v);

        if (axis == SweepAxis::flip_rate) {
            cfg.flip_rate = v;
            cfg.genie_sync = false;
        } else {
            tune_awgn_db(cfg, v);
        }

        SweepPoint pt;
        pt.value = v;
        try {
            pt.report = run_simulate(cfg).report;
        } catch (const std::exception& e) {
            pt.failed = true;
            pt.error = e.what();
            for (char& c : pt.error)
                if (c == ',' || c == '\n' || c == '\r') c = ';';
        }
        points.push_back(std::move(pt));
    }
    return points;
}

void write_sweep_csv(const fs::path& path, SweepAxis axis, std::span<const SweepPoint> points) {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for write: " + path.string());
    f << "# sweep v1\n";
    f << "axis,value,ber,apsnr_db,acceptable_flag,status\n";
    for (const auto& pt : points) {
        f << sweep_axis_name(axis) << "," << format_double(pt.value) << ",";
        if (!pt.failed && pt.report.ber_defined) f << format_double(pt.report.ber);
        f << ",";
        if (!pt.failed && pt.report.apsnr_defined) f << format_double(pt.report.apsnr_db);
        f << ",";
        f << ((!pt.failed && pt.report.acceptable) ? 1 : 0) << ",";
        f << (pt.failed ? "failed: " + pt.error : "ok") << "\n";
    }
    if (!f)
        throw std::runtime_error("short write: " + path.string());
}

metrics::LinkReport run_analyze(const fs::path& tx_log_path, const fs::path& rx_log_path,
                                const fs::path& ref_frames_path, const fs::path& rx_frames_path,
                                const std::string& session_id) {
    auto tx_log = read_packet_log(tx_log_path);
    uint32_t malformed = 0;
    auto rx_log = read_packet_log(rx_log_path, &malformed);

    auto ref = video::read_frame_file(ref_frames_path);
    std::vector<uint8_t> present;
    auto rx_frames = video::read_frame_file(rx_frames_path, &present);

    auto match = metrics::match_packets(tx_log, rx_log);
    auto ber = metrics::compute_ber(match, tx_log, rx_log);
    auto series = video::psnr_series(ref, rx_frames, &present);

    uint32_t frames_absent = 0;
    for (uint8_t p : present)
        if (!p) ++frames_absent;

    return metrics::build_report(session_id, match, ber, series, frames_absent, malformed);
}

} // namespace nlink::session
