// Acceptance gate: eight end-to-end criteria, one PASS/FAIL line each.
// Exits nonzero if any criterion fails. Expected wall time well under the
// stated budgets on desktop hardware.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "nlink/channel.hpp"
#include "nlink/framing.hpp"
#include "nlink/metrics.hpp"
#include "nlink/modem.hpp"
#include "nlink/rng.hpp"
#include "nlink/session.hpp"
#include "nlink/video.hpp"
#include "support/oracles.hpp"

using namespace nlink;

namespace {

int g_failures = 0;

void criterion(int n, const char* name, const std::function<std::string()>& body) {
    try {
        std::string evidence = body();
        std::printf("PASS  %d. %s: %s\n", n, name, evidence.c_str());
    } catch (const std::exception& e) {
        std::printf("FAIL  %d. %s: %s\n", n, name, e.what());
        ++g_failures;
    }
    std::fflush(stdout);
}

[[noreturn]] void fail(const std::string& why) { throw std::runtime_error(why); }

void expect(bool ok, const std::string& why) {
    if (!ok) fail(why);
}

std::filesystem::path work_dir(const char* leaf) {
    auto p = std::filesystem::temp_directory_path() / "nlink_acceptance" / leaf;
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) fail("cannot open " + p.string());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string fmt(const char* spec, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), spec, args...);
    return std::string(buf);
}

// ---------------------------------------------------------------------

std::string c1_loopback_baseline() {
    session::SessionConfig cfg;
    cfg.session_id = "acceptance_baseline";
    cfg.seed = 1;
    cfg.source.n_frames = 17; // 17 * 77256 bytes of payload > 1e7 bits
    cfg.out_dir = work_dir("baseline");

    auto t0 = std::chrono::steady_clock::now();
    auto res = session::run_simulate(cfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    expect(res.report.ber_defined, "BER undefined");
    expect(res.report.bits_compared >= 10000000, "only " +
           std::to_string(res.report.bits_compared) + " payload bits went through");
    expect(res.report.bit_errors == 0,
           std::to_string(res.report.bit_errors) + " bit errors over the ideal channel");
    expect(res.report.packets_dropped == 0, "packets dropped over the ideal channel");
    expect(res.report.apsnr_defined && res.report.apsnr_db == 100.0,
           "APSNR " + std::to_string(res.report.apsnr_db) + " != 100 dB");
    expect(res.report.frames_absent == 0, "frames went missing");
    expect(secs < 120.0, "took " + std::to_string(secs) + " s, budget is 120");

    std::filesystem::remove_all(cfg.out_dir);
    return fmt("%llu bits, 0 errors, APSNR 100 dB, live sync, %.1f s",
               static_cast<unsigned long long>(res.report.bits_compared), secs);
}

std::string c2_psnr_oracle() {
    Rng rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int w = 16 + static_cast<int>(rng.uniform_u64(300));
        int h = 16 + static_cast<int>(rng.uniform_u64(200));
        video::VideoFrame a, b;
        a.width = b.width = w;
        a.height = b.height = h;
        a.channels = b.channels = 1;
        a.pixels = rng.random_bytes(static_cast<size_t>(w) * h);
        // bias some pairs toward near-identical so tiny SSEs get exercised
        b.pixels = a.pixels;
        size_t flips = trial % 3 == 0 ? 1 + rng.uniform_u64(8)
                                      : rng.uniform_u64(a.pixels.size());
        for (size_t k = 0; k < flips; ++k)
            b.pixels[rng.uniform_u64(b.pixels.size())] ^=
                static_cast<uint8_t>(1 + rng.uniform_u64(255));
        double lib = video::psnr(a, b);
        double ora = oracle::psnr(a.pixels, b.pixels);
        worst = std::max(worst, std::abs(lib - ora));
    }
    expect(worst <= 1e-9, "worst deviation " + std::to_string(worst) + " dB");
    return fmt("100 random pairs, worst |delta| = %.2e dB", worst);
}

std::string c3_flip_sweep() {
    session::SessionConfig cfg;
    cfg.session_id = "acceptance_flip";
    cfg.seed = 3;
    cfg.source.n_frames = 17;
    cfg.flip_rate = 0.0;
    cfg.out_dir = work_dir("flip_sweep");

    std::vector<double> grid = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
    auto points = session::run_sweep(cfg, session::SweepAxis::flip_rate, grid);
    expect(points.size() == grid.size(), "sweep lost points");

    int last_ok_ber = -1, last_ok_apsnr = -1;
    double prev_apsnr = 1e9;
    std::string curve;
    for (size_t i = 0; i < points.size(); ++i) {
        const auto& r = points[i].report;
        expect(!points[i].failed, "point failed: " + points[i].error);
        expect(r.ber_defined && r.apsnr_defined, "metrics undefined");
        expect(r.apsnr_db <= prev_apsnr + 1e-9, "APSNR not monotone in flip rate");
        prev_apsnr = r.apsnr_db;
        if (r.ber <= 1e-3) last_ok_ber = static_cast<int>(i);
        if (r.apsnr_db >= 30.0) last_ok_apsnr = static_cast<int>(i);
        curve += fmt("%g->%.1fdB ", grid[i], r.apsnr_db);
    }
    expect(last_ok_ber >= 0 && last_ok_apsnr >= 0, "thresholds never met");
    expect(std::abs(last_ok_ber - last_ok_apsnr) <= 1,
           fmt("acceptability flips at step %d but BER<=1e-3 ends at step %d", last_ok_apsnr,
               last_ok_ber));

    double at_1e3 = points[4].report.apsnr_db;
    expect(std::abs(at_1e3 - 34.737) <= 0.5,
           fmt("APSNR at p=1e-3 is %.3f dB, expected 34.7 +- 0.5", at_1e3));

    std::filesystem::remove_all(cfg.out_dir);
    return fmt("boundary at p=1e-3 on both axes, APSNR(1e-3) = %.2f dB", at_1e3);
}

std::string c4_boundary_ber_roundtrip() {
    auto run_case = [](size_t n_pkts, size_t bytes_per, int flips, uint64_t stride, double want,
                       const char* id) {
        PacketLog tx, rx;
        for (size_t i = 0; i < n_pkts; ++i) {
            tx.push_back({static_cast<uint16_t>(i), std::vector<uint8_t>(bytes_per, 0x5A)});
            rx.push_back(tx.back());
        }
        for (int k = 0; k < flips; ++k) {
            // strided so every flip lands on a distinct bit
            uint64_t bit = static_cast<uint64_t>(k) * stride + 17;
            rx[bit / (bytes_per * 8)].payload[(bit / 8) % bytes_per] ^=
                static_cast<uint8_t>(1u << (bit % 8));
        }
        auto m = metrics::match_packets(tx, rx);
        auto b = metrics::compute_ber(m, tx, rx);
        expect(b.bit_errors == static_cast<uint64_t>(flips),
               "flip collision, constructed case is broken");
        auto rpt = metrics::build_report(id, m, b, {}, 0, 0);

        auto path = work_dir("ber_csv");
        std::filesystem::create_directories(path);
        auto csv = path / "r.csv";
        metrics::write_report_csv(csv, {&rpt, 1});
        auto back = metrics::read_report_csv(csv);
        expect(back.size() == 1, "row lost");
        expect(back[0].ber == want, fmt("ber after round trip %.17g != %.17g", back[0].ber, want));
        expect(back[0].ber == rpt.ber, "round trip changed the value");
        std::filesystem::remove_all(path);
    };

    run_case(500, 125000, 429, 1165501, 8.58e-7, "boundary_low"); // 428*stride+17 < 5e8
    run_case(5, 125, 16, 311, 3.2e-3, "boundary_high");           // 15*311+17 < 5000
    return "8.58e-07 and 3.2e-03 survive the CSV bit-exactly";
}

std::string c5_modem_validity() {
    modem::ModemConfig mcfg;
    const double fs = 500e3;
    std::string evidence;

    // genie-aided: detector alone against theory
    for (double db : {2.0, 4.0, 6.0}) {
        const size_t n = 1200000;
        Rng rng(500 + static_cast<uint64_t>(db));
        auto bits = rng.random_bits(n);
        auto iq = modem::tx_chain(bits, mcfg, fs);

        channel::ChannelModel chan;
        chan.rng_seed = 9000 + static_cast<uint64_t>(db);
        chan.stages.push_back(channel::AwgnStage{channel::AwgnStage::Mode::ebn0, db, 1,
                                                 mcfg.samples_per_symbol});
        auto noisy = channel::apply(chan, iq);

        auto rx = modem::rx_chain_genie(noisy, mcfg, {});
        expect(rx.bits.size() >= mcfg.ramp_symbols + n, "genie rx lost symbols");
        uint64_t errs = 0;
        for (size_t i = 0; i < n; ++i)
            errs += rx.bits[mcfg.ramp_symbols + i] != bits[i];

        double ber = static_cast<double>(errs) / static_cast<double>(n);
        double ideal = oracle::bpsk_ber(db);
        double sd = std::sqrt(ideal * (1.0 - ideal) / static_cast<double>(n));
        expect(std::abs(ber - ideal) <= 3.0 * sd,
               fmt("genie %.0f dB: ber %.3e vs theory %.3e exceeds 3 sigma (%.1e)", db, ber,
                   ideal, 3.0 * sd));
        evidence += fmt("%.0fdB %.2e/%.2e ", db, ber, ideal);
    }

    // live loops at 6 dB carrying framed traffic. BER is measured on the
    // aligned bit streams, not on matched packet logs: without a CRC a header
    // bit error can relabel a packet and poison log attribution, which is a
    // protocol property, not detector loss.
    {
        const double db = 6.0;
        const size_t n_pkts = 160, payload = 1024;
        Rng rng(77);

        modem::TxStream tx(mcfg, fs);
        channel::ChannelStream chan(
            channel::ChannelModel{{channel::AwgnStage{channel::AwgnStage::Mode::ebn0, db, 1,
                                                      mcfg.samples_per_symbol}},
                                  4242},
            fs, 1.0 / mcfg.samples_per_symbol);
        modem::RxStream rx(mcfg, fs);

        BitVec air_bits;
        BitVec rx_bits;
        auto feed = [&](const std::vector<std::complex<float>>& s) {
            auto out = rx.push(s);
            rx_bits.insert(rx_bits.end(), out.begin(), out.end());
        };
        for (size_t i = 0; i < n_pkts; ++i) {
            auto air = framing::build_packet(rng.random_bytes(payload),
                                             static_cast<uint16_t>(i));
            auto bits = bytes_to_bits(air);
            air_bits.insert(air_bits.end(), bits.begin(), bits.end());
            feed(chan.push(tx.push_bits(bits).samples));
        }
        feed(chan.push(tx.finish().samples));
        feed(chan.finish());
        auto tail = rx.finish();
        rx_bits.insert(rx_bits.end(), tail.begin(), tail.end());

        // anchor the streams: rx bit k sits near air bit k - ramp_symbols
        const size_t probe_off = 2000, probe_len = 4096;
        expect(rx_bits.size() > probe_off + probe_len, "live rx produced too few bits");
        const long expected = static_cast<long>(probe_off) - mcfg.ramp_symbols;
        long best_shift = 0;
        size_t best_mm = probe_len;
        int polarity = 0;
        for (long s = expected - 64; s <= expected + 64; ++s) {
            if (s < 0 || static_cast<size_t>(s) + probe_len > air_bits.size()) continue;
            size_t mm = 0;
            for (size_t i = 0; i < probe_len; ++i)
                mm += rx_bits[probe_off + i] != air_bits[static_cast<size_t>(s) + i];
            size_t dir = std::min(mm, probe_len - mm);
            if (dir < best_mm) {
                best_mm = dir;
                best_shift = s;
                polarity = mm > probe_len / 2;
            }
        }
        expect(best_mm < probe_len / 8, "live rx stream failed to align with tx");

        uint64_t errs = 0, n = 0;
        for (size_t i = probe_off;; ++i) {
            long a = static_cast<long>(i) + best_shift - static_cast<long>(probe_off);
            if (i >= rx_bits.size() || static_cast<size_t>(a) >= air_bits.size()) break;
            errs += (rx_bits[i] ^ polarity) != air_bits[static_cast<size_t>(a)];
            ++n;
        }
        expect(n >= 1000000, "live run compared fewer than 1e6 bits");

        double ber = static_cast<double>(errs) / static_cast<double>(n);
        double ideal = oracle::bpsk_ber(db);
        expect(ber <= 2.0 * ideal,
               fmt("live 6 dB ber %.3e worse than 2x theory %.3e", ber, ideal));
        expect(ber >= 0.5 * ideal,
               fmt("live 6 dB ber %.3e implausibly below theory %.3e", ber, ideal));
        evidence += fmt("| live 6dB %.2e (%.2fx theory, %llu bits)", ber, ber / ideal,
                        static_cast<unsigned long long>(n));
    }
    return evidence;
}

std::string c6_dead_zone() {
    session::SessionConfig cfg;
    cfg.session_id = "acceptance_deadzone";
    cfg.seed = 6;
    cfg.source.n_frames = 5;
    cfg.out_dir = work_dir("deadzone");

    // zero out exactly the air samples carrying frame 2. A frame is 75 full
    // chunks plus one short one, so the per-frame bit count is not a multiple
    // of the full packet size.
    const uint64_t frame_bytes = static_cast<uint64_t>(cfg.source.width) *
                                 cfg.source.height * cfg.source.channels;
    const uint64_t data_per_chunk = cfg.payload_size - video::kChunkPrefixBytes;
    const uint64_t full_chunks = frame_bytes / data_per_chunk;
    const uint64_t tail_data = frame_bytes % data_per_chunk;
    const uint64_t full_pkt_bits = (cfg.payload_size + framing::kOverheadBytes) * 8;
    const uint64_t tail_pkt_bits =
        tail_data == 0 ? 0 : (tail_data + video::kChunkPrefixBytes + framing::kOverheadBytes) * 8;
    const uint64_t frame_bits = full_chunks * full_pkt_bits + tail_pkt_bits;

    const uint64_t sps = static_cast<uint64_t>(cfg.modem.samples_per_symbol);
    const uint64_t ramp = static_cast<uint64_t>(cfg.modem.ramp_symbols);
    // pulse centers lag the symbol index by half the filter span
    const uint64_t delay = static_cast<uint64_t>(cfg.modem.rrc_span_symbols) / 2 * sps;
    channel::BurstDropStage burst;
    burst.intervals.push_back({(ramp + 2 * frame_bits) * sps + delay,
                               (ramp + 3 * frame_bits) * sps + delay});
    cfg.channel.stages.push_back(burst);

    auto res = session::run_simulate(cfg);
    const auto& r = res.report;

    expect(r.packets_tx == 380, "unexpected packet count " + std::to_string(r.packets_tx));
    expect(r.frames_absent >= 1, "no frame went absent");
    expect(r.packets_dropped >= 76, "erasure should cost at least one frame of packets");
    expect(r.packets_dropped <= 80,
           "erasure bled too far: " + std::to_string(r.packets_dropped) + " dropped");
    expect(r.packets_rx + r.packets_dropped == r.packets_tx, "packet accounting leaks");
    expect(r.psnr_series.size() == 5, "psnr series incomplete");
    expect(!r.psnr_series[2].present, "the erased frame still claims to be present");
    expect(r.psnr_series[0].present && r.psnr_series[4].present, "collateral frame loss");

    std::filesystem::remove_all(cfg.out_dir);
    return fmt("%llu/380 packets dropped, frame 2 absent, accounting closed",
               static_cast<unsigned long long>(r.packets_dropped));
}

std::string c7_framing_properties() {
    Rng rng(707);

    // round trip across sizes, exact payload identity
    BitVec stream = rng.random_bits(500);
    std::vector<std::vector<uint8_t>> sent;
    for (uint16_t s = 0; s < 50; ++s) {
        sent.push_back(rng.random_bytes(1 + rng.uniform_u64(1400)));
        auto bits = bytes_to_bits(framing::build_packet(sent.back(), s));
        stream.insert(stream.end(), bits.begin(), bits.end());
        auto gap = rng.random_bits(rng.uniform_u64(200));
        stream.insert(stream.end(), gap.begin(), gap.end());
    }
    auto fwd = framing::extract_packets(stream);
    expect(fwd.packets.size() == 50, "round trip lost packets");
    for (uint16_t s = 0; s < 50; ++s)
        expect(fwd.packets[s].header.seq_num == s && fwd.packets[s].payload == sent[s],
               "payload mismatch at seq " + std::to_string(s));

    // polarity invariance
    auto inv = framing::extract_packets(invert_bits(stream));
    expect(inv.packets.size() == 50, "inverted stream lost packets");
    for (size_t i = 0; i < 50; ++i)
        expect(inv.packets[i].payload == fwd.packets[i].payload &&
                   inv.packets[i].header.seq_num == fwd.packets[i].header.seq_num,
               "polarity changed packet content");

    // false alarms on 1e7 random bits, measured where the tail is testable
    const size_t n_bits = 10000063;
    auto noise = rng.random_bits(n_bits);
    const int t_meas = 28;
    double windows = static_cast<double>(n_bits - 63);
    double lambda = windows * oracle::preamble_false_alarm(t_meas);
    auto hits = framing::detect_preambles(noise, t_meas);
    expect(static_cast<double>(hits.size()) >= lambda / 2.0 &&
               static_cast<double>(hits.size()) <= lambda * 2.0,
           fmt("threshold %d: %zu hits vs predicted %.0f", t_meas, hits.size(), lambda));

    // at the operating threshold the prediction is ~5e-8 hits total
    auto op_hits = framing::detect_preambles(noise, 58);
    expect(op_hits.empty(),
           std::to_string(op_hits.size()) + " false alarms at the operating threshold");

    return fmt("50-packet round trip, polarity invariant, %zu/%.0f predicted alarms at t=%d, "
               "0 at t=58",
               hits.size(), lambda, t_meas);
}

std::string c8_determinism() {
    session::SessionConfig cfg;
    cfg.session_id = "acceptance_det";
    cfg.seed = 8;
    cfg.source.width = 96;
    cfg.source.height = 64;
    cfg.source.n_frames = 2;
    cfg.payload_size = 512;
    cfg.channel.stages.push_back(channel::CfoStage{30.0, 0.25});
    cfg.channel.stages.push_back(
        channel::AwgnStage{channel::AwgnStage::Mode::ebn0, 9.0, 1, 4});

    cfg.out_dir = work_dir("det_a");
    auto a = session::run_simulate(cfg);
    cfg.out_dir = work_dir("det_b");
    auto b = session::run_simulate(cfg);

    expect(slurp(a.artifacts.report_csv) == slurp(b.artifacts.report_csv),
           "report CSVs differ between identical runs");
    expect(slurp(a.artifacts.psnr_csv) == slurp(b.artifacts.psnr_csv),
           "psnr CSVs differ between identical runs");
    expect(slurp(a.artifacts.rx_log) == slurp(b.artifacts.rx_log),
           "rx packet logs differ between identical runs");

    std::filesystem::remove_all(a.artifacts.report_csv.parent_path());
    std::filesystem::remove_all(b.artifacts.report_csv.parent_path());
    return "noisy modem session twice: report, psnr and rx log byte-identical";
}

} // namespace

int main() {
    std::printf("acceptance: BPSK video link chain\n");
    criterion(1, "loopback zero-BER baseline", c1_loopback_baseline);
    criterion(2, "PSNR matches brute-force oracle", c2_psnr_oracle);
    criterion(3, "BER-PSNR threshold correlation", c3_flip_sweep);
    criterion(4, "boundary BER values round-trip", c4_boundary_ber_roundtrip);
    criterion(5, "modem BER against erfc theory", c5_modem_validity);
    criterion(6, "dead-zone burst erasure", c6_dead_zone);
    criterion(7, "framing round-trip and false alarms", c7_framing_properties);
    criterion(8, "seeded runs are byte-identical", c8_determinism);

    if (g_failures == 0) {
        std::printf("all 8 criteria passed\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", g_failures);
    return 1;
}
