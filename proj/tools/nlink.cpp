#include <CLI11.hpp>

#include <cstring>
#include <fstream>
#include <iostream>

#include "nlink/channel.hpp"
#include "nlink/iq.hpp"
#include "nlink/metrics.hpp"
#include "nlink/packet_log.hpp"
#include "nlink/session.hpp"
#include "nlink/textio.hpp"
#include "nlink/video.hpp"

namespace {

using namespace nlink;

void print_report(const metrics::LinkReport& r) {
    std::cout << "session " << r.session_id << "\n";
    if (r.ber_defined)
        std::cout << "  ber: " << format_double(r.ber) << " (" << r.bit_errors << " errors / "
                  << r.bits_compared << " bits)\n";
    else
        std::cout << "  ber: undefined (no comparable packets)\n";
    std::cout << "  packets: tx " << r.packets_tx << ", rx " << r.packets_rx << ", dropped "
              << r.packets_dropped << ", malformed " << r.packets_malformed << ", duplicates "
              << r.duplicates << ", phantom " << r.rx_only << "\n";
    if (r.apsnr_defined && !r.psnr_series.empty())
        std::cout << "  apsnr: " << format_double(r.apsnr_db) << " dB over "
                  << r.psnr_series.size() << " frames, " << r.frames_absent << " absent\n";
    else if (r.apsnr_defined)
        std::cout << "  apsnr: " << format_double(r.apsnr_db) << " dB, " << r.frames_absent
                  << " frames absent\n";
    else
        std::cout << "  apsnr: undefined, " << r.frames_absent << " frames absent\n";
    std::cout << "  acceptable: " << (r.acceptable ? "yes" : "no") << "\n";
}

void print_diag(const modem::RxDiagnostics& d) {
    std::cout << "  rx sync: freq " << d.freq_offset_hz << " Hz, timing "
              << (d.timing_locked ? "locked" : "UNLOCKED") << " (err rms " << d.timing_err_rms
              << "), carrier " << (d.carrier_locked ? "locked" : "UNLOCKED") << " (phase var "
              << d.residual_phase_var << "), " << d.symbols_out << " symbols\n";
}

// Shared session flags. Only flags the user actually passed override the
// config file, so defaults never clobber file values.
struct CommonOpts {
    std::string config_path, session_id, channel_path, pattern, frames_file, out_dir;
    uint64_t seed = 0;
    double sample_rate = 0, ebn0_db = 0, flip_rate = 0, frame_rate = 0, rolloff = 0;
    double timing_bw = 0, carrier_bw = 0, video_bit_rate = 0;
    size_t payload_size = 0;
    int width = 0, height = 0, channels = 0, sps = 0, span = 0, ramp = 0, threshold = 0;
    uint32_t frames = 0;
    bool genie = false, save_iq = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "session config file");
        cmd->add_option("--session-id", session_id, "label stamped into reports");
        cmd->add_option("--seed", seed, "master seed for noise, patterns and flips");
        cmd->add_option("--out-dir", out_dir, "artifact directory");
        cmd->add_option("--channel", channel_path, "channel description file");
        cmd->add_option("--ebn0-db", ebn0_db, "retune (or add) an AWGN stage to this Eb/N0");
        cmd->add_option("--flip-rate", flip_rate,
                        "bypass the modem, flip payload data bits at this rate");
        cmd->add_option("--pattern", pattern, "test pattern: gradient|checker|moving-box|noise");
        cmd->add_option("--width", width, "frame width");
        cmd->add_option("--height", height, "frame height");
        cmd->add_option("--channels", channels, "1 grayscale or 3 color");
        cmd->add_option("--frames", frames, "frame count");
        cmd->add_option("--frame-rate", frame_rate, "frames per second");
        cmd->add_option("--frames-file", frames_file, "use this frame file instead of a pattern");
        cmd->add_option("--payload-size", payload_size, "packet payload bytes");
        cmd->add_option("--sample-rate", sample_rate, "samples per second");
        cmd->add_option("--video-bit-rate", video_bit_rate, "target source bit rate, accounting");
        cmd->add_option("--sps", sps, "samples per symbol");
        cmd->add_option("--rolloff", rolloff, "RRC roll-off");
        cmd->add_option("--span", span, "RRC span in symbols");
        cmd->add_option("--timing-bw", timing_bw, "timing loop bandwidth");
        cmd->add_option("--carrier-bw", carrier_bw, "carrier loop bandwidth");
        cmd->add_option("--ramp-symbols", ramp, "idle symbols sent before data");
        cmd->add_option("--detect-threshold", threshold, "preamble correlation threshold");
        cmd->add_flag("--genie", genie, "demodulate with known sync instead of live loops");
        cmd->add_flag("--save-iq", save_iq, "persist the channel output capture");
    }

    session::SessionConfig resolve(CLI::App* cmd) const {
        session::SessionConfig cfg;
        if (cmd->count("--config")) cfg = session::load_session_config(config_path);
        if (cmd->count("--session-id")) cfg.session_id = session_id;
        if (cmd->count("--seed")) cfg.seed = seed;
        if (cmd->count("--out-dir")) cfg.out_dir = out_dir;
        if (cmd->count("--channel")) cfg.channel = channel::load_channel_file(channel_path);
        if (cmd->count("--flip-rate")) cfg.flip_rate = flip_rate;
        if (cmd->count("--pattern")) cfg.source.pattern = video::pattern_from_string(pattern);
        if (cmd->count("--width")) cfg.source.width = width;
        if (cmd->count("--height")) cfg.source.height = height;
        if (cmd->count("--channels")) cfg.source.channels = channels;
        if (cmd->count("--frames")) cfg.source.n_frames = frames;
        if (cmd->count("--frame-rate")) cfg.source.frame_rate = frame_rate;
        if (cmd->count("--frames-file")) cfg.source.frames_file = frames_file;
        if (cmd->count("--payload-size")) cfg.payload_size = payload_size;
        if (cmd->count("--sample-rate")) cfg.sample_rate = sample_rate;
        if (cmd->count("--video-bit-rate")) cfg.video_bit_rate_bps = video_bit_rate;
        if (cmd->count("--sps")) cfg.modem.samples_per_symbol = sps;
        if (cmd->count("--rolloff")) cfg.modem.rrc_rolloff = rolloff;
        if (cmd->count("--span")) cfg.modem.rrc_span_symbols = span;
        if (cmd->count("--timing-bw")) cfg.modem.timing_loop_bw = timing_bw;
        if (cmd->count("--carrier-bw")) cfg.modem.carrier_loop_bw = carrier_bw;
        if (cmd->count("--ramp-symbols")) cfg.modem.ramp_symbols = ramp;
        if (cmd->count("--detect-threshold")) cfg.framing.detect_threshold = threshold;
        if (genie) cfg.genie_sync = true;
        if (save_iq) cfg.save_iq = true;
        // --ebn0-db applies after --channel so it can retune a loaded model
        if (cmd->count("--ebn0-db")) session::tune_awgn_db(cfg, ebn0_db);
        return cfg;
    }
};

int cmd_simulate(CLI::App* cmd, const CommonOpts& opts) {
    auto cfg = opts.resolve(cmd);
    auto result = session::run_simulate(cfg);

    print_report(result.report);
    if (result.rx_diag_valid) print_diag(result.rx_diag);

    if (cfg.source.frames_file.empty()) {
        double frame_bits = 8.0 * cfg.source.width * cfg.source.height * cfg.source.channels;
        double offered = frame_bits * cfg.source.frame_rate;
        std::cout << "  offered source rate: " << offered / 1000.0 << " kbps (target "
                  << cfg.video_bit_rate_bps / 1000.0 << " kbps)\n";
    }
    std::cout << "  artifacts: " << cfg.out_dir.string() << "\n";
    return 0;
}

int cmd_sweep(CLI::App* cmd, const CommonOpts& opts, const std::string& axis_name,
              const std::vector<double>& values) {
    auto cfg = opts.resolve(cmd);
    auto axis = session::sweep_axis_from_string(axis_name);
    auto points = session::run_sweep(cfg, axis, values);

    auto csv = cfg.out_dir / "sweep.csv";
    session::write_sweep_csv(csv, axis, points);

    std::cout << session::sweep_axis_name(axis) << "  ber  apsnr_db  acceptable\n";
    bool any_failed = false;
    for (const auto& pt : points) {
        std::cout << format_double(pt.value) << "  ";
        if (pt.failed) {
            std::cout << "FAILED: " << pt.error << "\n";
            any_failed = true;
            continue;
        }
        std::cout << (pt.report.ber_defined ? format_double(pt.report.ber) : "undefined") << "  "
                  << (pt.report.apsnr_defined ? format_double(pt.report.apsnr_db) : "undefined")
                  << "  " << (pt.report.acceptable ? "yes" : "no") << "\n";
    }
    std::cout << "sweep csv: " << csv.string() << "\n";
    return any_failed ? 1 : 0;
}

int cmd_analyze(const std::string& tx_log, const std::string& rx_log, const std::string& ref,
                const std::string& rx_frames, const std::string& session_id,
                const std::string& out_csv) {
    auto report = session::run_analyze(tx_log, rx_log, ref, rx_frames, session_id);
    print_report(report);
    if (!out_csv.empty()) {
        metrics::write_report_csv(out_csv, {&report, 1});
        std::cout << "  report csv: " << out_csv << "\n";
    }
    return 0;
}

int cmd_gen_pattern(const std::string& pattern, int width, int height, int channels,
                    uint32_t frames, double frame_rate, uint64_t seed, const std::string& out) {
    auto stream = video::generate_test_pattern(video::pattern_from_string(pattern), width, height,
                                               channels, frames, frame_rate, seed);
    video::write_frame_file(out, stream);
    std::cout << "wrote " << frames << " " << width << "x" << height << " frame(s) to " << out
              << " (+ .meta)\n";
    return 0;
}

int info_one(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        std::cerr << path.string() << ": cannot open\n";
        return 1;
    }
    char magic[4] = {};
    f.read(magic, 4);

    if (std::memcmp(magic, "NLIQ", 4) == 0) {
        char rest[28];
        f.read(rest, 28);
        uint32_t version;
        double rate;
        std::memcpy(&version, rest, 4);
        std::memcpy(&rate, rest + 4, 8);
        auto bytes = std::filesystem::file_size(path);
        auto count = (bytes - 32) / 8;
        std::cout << path.string() << ": iq capture v" << version << ", " << count
                  << " samples at " << rate << " S/s (" << (rate > 0 ? count / rate : 0.0)
                  << " s)\n";
        return 0;
    }
    if (std::memcmp(magic, "NLPL", 4) == 0) {
        uint32_t malformed = 0;
        auto log = read_packet_log(path, &malformed);
        uint64_t bytes = 0;
        for (const auto& e : log) bytes += e.payload.size();
        std::cout << path.string() << ": packet log, " << log.size() << " packets, " << bytes
                  << " payload bytes, " << malformed << " malformed on capture\n";
        return 0;
    }

    // text formats
    f.close();
    std::ifstream t(path);
    std::string first;
    std::getline(t, first);
    if (first == "# link_report v1") {
        auto reports = metrics::read_report_csv(path);
        std::cout << path.string() << ": link report, " << reports.size() << " session(s)\n";
        for (const auto& r : reports) print_report(r);
        return 0;
    }
    if (first == "# sweep v1") {
        size_t rows = 0;
        std::string line;
        std::getline(t, line); // header
        while (std::getline(t, line))
            if (!line.empty()) ++rows;
        std::cout << path.string() << ": sweep results, " << rows << " point(s)\n";
        return 0;
    }
    if (first == "frame_index,psnr_db,present") {
        size_t absent = 0;
        double acc = 0.0;
        uint64_t n = 0;
        std::string line;
        while (std::getline(t, line)) {
            if (line.empty()) continue;
            auto cells = split_fields(line);
            if (cells.size() != 3)
                throw std::runtime_error(path.string() + ": malformed psnr row");
            if (cells[2] == "0") {
                ++absent;
            } else {
                acc += parse_double(cells[1]);
                ++n;
            }
        }
        std::cout << path.string() << ": per-frame psnr, " << (n + absent) << " frame(s), "
                  << absent << " absent";
        if (n > 0) std::cout << ", mean " << format_double(acc / static_cast<double>(n)) << " dB";
        std::cout << "\n";
        return 0;
    }
    if (path.extension() == ".meta" || std::filesystem::exists(path.string() + ".meta")) {
        auto data = path.extension() == ".meta" ? path.parent_path() / path.stem() : path;
        std::vector<uint8_t> present;
        auto stream = video::read_frame_file(data, &present);
        size_t absent = 0;
        for (auto p : present)
            if (!p) ++absent;
        const auto& f0 = stream.frames.front();
        std::cout << data.string() << ": " << stream.frames.size() << " frame(s) " << f0.width
                  << "x" << f0.height << "x" << f0.channels << " at " << stream.frame_rate
                  << " fps, " << absent << " absent\n";
        return 0;
    }
    try {
        auto model = channel::load_channel_file(path);
        std::cout << path.string() << ": channel model, seed " << model.rng_seed << ", "
                  << model.stages.size() << " stage(s):";
        for (const auto& s : model.stages) {
            if (std::holds_alternative<channel::IdealStage>(s)) std::cout << " ideal";
            else if (auto* a = std::get_if<channel::AwgnStage>(&s))
                std::cout << " awgn("
                          << (a->mode == channel::AwgnStage::Mode::ebn0 ? "ebn0 " : "snr ")
                          << a->value_db << " dB)";
            else if (auto* c = std::get_if<channel::CfoStage>(&s))
                std::cout << " cfo(" << c->offset_hz << " Hz)";
            else if (auto* m = std::get_if<channel::MultipathStage>(&s))
                std::cout << " multipath(" << m->taps.size() << " taps)";
            else if (auto* b = std::get_if<channel::BurstDropStage>(&s))
                std::cout << " burst_drop(" << b->intervals.size() << " intervals)";
        }
        std::cout << "\n";
        return 0;
    } catch (const std::exception&) {
        std::cerr << path.string() << ": unrecognized format\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"BPSK video link simulator: modulate packetized frames, drag them through a "
                 "channel model, demodulate, and score BER against PSNR"};
    app.require_subcommand(1);

    CommonOpts sim_opts;
    auto* sim = app.add_subcommand("simulate", "run one end-to-end session");
    sim_opts.attach(sim);

    CommonOpts sweep_opts;
    std::string axis_name;
    std::vector<double> values;
    auto* sweep = app.add_subcommand("sweep", "run one session per axis value");
    sweep_opts.attach(sweep);
    sweep->add_option("--axis", axis_name, "ebn0_db or flip_rate")->required();
    sweep->add_option("--values", values, "axis values")->required()->expected(-1);

    std::string an_tx, an_rx, an_ref, an_frames, an_id = "analyze", an_out;
    auto* an = app.add_subcommand("analyze", "recompute a report from persisted artifacts");
    an->add_option("--tx-log", an_tx, "transmitted packet log")->required();
    an->add_option("--rx-log", an_rx, "received packet log")->required();
    an->add_option("--ref-frames", an_ref, "reference frame file")->required();
    an->add_option("--rx-frames", an_frames, "reconstructed frame file")->required();
    an->add_option("--session-id", an_id, "label for the report row");
    an->add_option("--out", an_out, "also write the report CSV here");

    std::string gp_pattern = "moving-box", gp_out;
    int gp_w = 320, gp_h = 240, gp_c = 1;
    uint32_t gp_n = 15;
    double gp_fps = 15.0;
    uint64_t gp_seed = 0;
    auto* gp = app.add_subcommand("gen-pattern", "write a deterministic test pattern");
    gp->add_option("--pattern", gp_pattern, "gradient|checker|moving-box|noise");
    gp->add_option("--width", gp_w, "frame width");
    gp->add_option("--height", gp_h, "frame height");
    gp->add_option("--channels", gp_c, "1 or 3");
    gp->add_option("--frames", gp_n, "frame count");
    gp->add_option("--frame-rate", gp_fps, "frames per second");
    gp->add_option("--seed", gp_seed, "noise pattern seed");
    gp->add_option("--out", gp_out, "output path")->required();

    std::vector<std::string> info_paths;
    auto* info = app.add_subcommand("info", "describe artifact files");
    info->add_option("files", info_paths, "paths to inspect")->required()->expected(-1);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim, sim_opts);
        if (sweep->parsed()) return cmd_sweep(sweep, sweep_opts, axis_name, values);
        if (an->parsed()) return cmd_analyze(an_tx, an_rx, an_ref, an_frames, an_id, an_out);
        if (gp->parsed())
            return cmd_gen_pattern(gp_pattern, gp_w, gp_h, gp_c, gp_n, gp_fps, gp_seed, gp_out);
        if (info->parsed()) {
            int rc = 0;
            for (const auto& p : info_paths)
                rc |= info_one(p);
            return rc;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
