#include "nlink/metrics.hpp"

#include <deque>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "nlink/bits.hpp"
#include "nlink/textio.hpp"

namespace nlink::metrics {

MatchResult match_packets(const PacketLog& tx, const PacketLog& rx) {
    if (tx.size() > kMaxSessionPackets || rx.size() > kMaxSessionPackets)
        throw std::invalid_argument("log exceeds one seq-wrap segment, split the session");

    std::unordered_map<uint16_t, std::deque<size_t>> rx_by_seq;
    for (size_t j = 0; j < rx.size(); ++j)
        rx_by_seq[rx[j].seq_num].push_back(j);

    MatchResult result;
    std::unordered_map<uint16_t, uint64_t> tx_seqs;
    for (size_t i = 0; i < tx.size(); ++i) {
        ++tx_seqs[tx[i].seq_num];
        auto it = rx_by_seq.find(tx[i].seq_num);
        if (it == rx_by_seq.end() || it->second.empty()) {
            ++result.tx_only;
            continue;
        }
        // several rx packets can claim one seq (a header bit error shadows a
        // neighbour): keep the closest payload, the rest become duplicates
        size_t best = 0;
        uint64_t best_score = UINT64_MAX;
        for (size_t k = 0; k < it->second.size(); ++k) {
            const auto& cand = rx[it->second[k]].payload;
            if (cand.size() != tx[i].payload.size())
                continue;
            uint64_t score = hamming_distance(cand, tx[i].payload);
            if (score < best_score) {
                best_score = score;
                best = k;
            }
        }
        result.pairs.emplace_back(i, it->second[best]);
        it->second.erase(it->second.begin() + static_cast<long>(best));
    }

    // leftover rx: repeats of a sent seq are duplicates, the rest phantom
    for (auto& [seq, queue] : rx_by_seq) {
        if (queue.empty()) continue;
        if (tx_seqs.count(seq))
            result.duplicates += queue.size();
        else
            result.rx_only += queue.size();
    }
    return result;
}

BerResult compute_ber(const MatchResult& match, const PacketLog& tx, const PacketLog& rx) {
    BerResult res;
    for (const auto& [ti, ri] : match.pairs) {
        const auto& a = tx[ti].payload;
        const auto& b = rx[ri].payload;
        if (a.size() != b.size()) {
            ++res.length_mismatches;
            continue;
        }
        res.bit_errors += hamming_distance(a, b);
        res.bits_compared += a.size() * 8;
    }
    if (res.bits_compared > 0) {
        res.defined = true;
        res.ber = static_cast<double>(res.bit_errors) / static_cast<double>(res.bits_compared);
    }
    return res;
}

LinkReport build_report(std::string session_id, const MatchResult& match, const BerResult& ber,
                        std::span<const video::PsnrPoint> psnr_series, uint32_t frames_absent,
                        uint64_t packets_malformed) {
    LinkReport rep;
    rep.session_id = std::move(session_id);
    for (char& c : rep.session_id)
        if (c == ',' || c == '\n' || c == '\r') c = '_';

    rep.ber_defined = ber.defined;
    rep.ber = ber.ber;
    rep.bit_errors = ber.bit_errors;
    rep.bits_compared = ber.bits_compared;
    rep.length_mismatches = ber.length_mismatches;

    rep.packets_tx = match.pairs.size() + match.tx_only;
    rep.packets_rx = match.pairs.size() + match.duplicates + match.rx_only;
    rep.packets_dropped = match.tx_only;
    rep.packets_malformed = packets_malformed;
    rep.duplicates = match.duplicates;
    rep.rx_only = match.rx_only;

    rep.psnr_series.assign(psnr_series.begin(), psnr_series.end());
    double acc = 0.0;
    uint64_t n = 0;
    for (const auto& pt : psnr_series) {
        if (!pt.present) continue;
        acc += pt.psnr_db;
        ++n;
    }
    if (n > 0) {
        rep.apsnr_defined = true;
        rep.apsnr_db = acc / static_cast<double>(n);
    }
    rep.frames_absent = frames_absent;
    rep.acceptable = rep.apsnr_defined && rep.apsnr_db >= kApsnrAcceptableDb;
    return rep;
}

namespace {
constexpr const char* kReportMagic = "# link_report v1";
constexpr const char* kReportHeader =
    "session_id,ber,bit_errors,bits_compared,packets_tx,packets_rx,packets_dropped,"
    "apsnr_db,frames_absent,acceptable_flag";
} // namespace

void write_report_csv(const std::filesystem::path& path, std::span<const LinkReport> reports) {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for write: " + path.string());
    f << kReportMagic << "\n" << kReportHeader << "\n";
    for (const auto& r : reports) {
        f << r.session_id << ",";
        if (r.ber_defined) f << format_double(r.ber);
        f << "," << r.bit_errors << "," << r.bits_compared << "," << r.packets_tx << ","
          << r.packets_rx << "," << r.packets_dropped << ",";
        if (r.apsnr_defined) f << format_double(r.apsnr_db);
        f << "," << r.frames_absent << "," << (r.acceptable ? 1 : 0) << "\n";
    }
    if (!f)
        throw std::runtime_error("short write: " + path.string());
}

std::vector<LinkReport> read_report_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open: " + path.string());

    std::string line;
    if (!std::getline(f, line) || line != kReportMagic)
        throw std::runtime_error(path.string() + ": not a link_report v1 file");
    if (!std::getline(f, line) || line != kReportHeader)
        throw std::runtime_error(path.string() + ": bad column header");

    std::vector<LinkReport> reports;
    int lineno = 2;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != 10)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected 10 fields, got " + std::to_string(fields.size()));
        LinkReport r;
        r.session_id = std::string(fields[0]);
        if (!fields[1].empty()) {
            r.ber_defined = true;
            r.ber = parse_double(fields[1]);
        }
        r.bit_errors = parse_u64(fields[2]);
        r.bits_compared = parse_u64(fields[3]);
        r.packets_tx = parse_u64(fields[4]);
        r.packets_rx = parse_u64(fields[5]);
        r.packets_dropped = parse_u64(fields[6]);
        if (!fields[7].empty()) {
            r.apsnr_defined = true;
            r.apsnr_db = parse_double(fields[7]);
        }
        r.frames_absent = static_cast<uint32_t>(parse_u64(fields[8]));
        r.acceptable = parse_u64(fields[9]) != 0;
        reports.push_back(std::move(r));
    }
    return reports;
}

} // namespace nlink::metrics
