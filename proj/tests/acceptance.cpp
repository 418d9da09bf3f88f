// Acceptance driver: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include "ingestbench/ingestbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

using namespace ingestbench;

namespace {

using WallClock = std::chrono::steady_clock;

double seconds_since(WallClock::time_point t0) { return std::chrono::duration<double>(WallClock::now() - t0).count(); }

struct Outcome {
    std::string label;
    RunResult result;
    double wall_s = 0;
    std::map<std::string, std::string> exports;
    std::map<std::string, std::vector<SeriesStore::Point>> series;
    bool log_ok = true;
    std::string log_detail;
};

std::vector<std::string> g_log_failures;

bool within(double v, double target, double rel) { return std::abs(v - target) <= rel * target; }

// Mean, min and max over the detection window [t_first + 120, t_last - 60].
struct WindowStats {
    double mean = 0, min = 0, max = 0;
};

WindowStats window(const std::vector<SeriesStore::Point>& s)
{
    WindowStats w{0, INFINITY, -INFINITY};
    if (s.empty()) {
        return w;
    }
    const auto lo = s.front().ts + 120;
    const auto hi = s.back().ts - 60;
    std::size_t n = 0;
    for (const auto& p : s) {
        if (p.ts >= lo && p.ts <= hi) {
            w.mean += p.value;
            w.min = std::min(w.min, p.value);
            w.max = std::max(w.max, p.value);
            ++n;
        }
    }
    w.mean /= static_cast<double>(std::max<std::size_t>(n, 1));
    return w;
}

bool check_log(const PartitionLog& log, std::string& detail)
{
    if (!log.offsets_dense()) {
        detail = "offsets not dense";
        return false;
    }
    const auto n = log.next_offset();
    std::vector<std::int64_t> probes{-1, 0, n / 3, n / 2, n - 1001, n - 2, n - 1, n};
    for (auto k : probes) {
        if (k < -1) {
            continue;
        }
        const std::size_t cap = 1000;
        const auto got = log.fetch(k, cap);
        const auto expect = static_cast<std::size_t>(std::clamp<std::int64_t>(n - 1 - k, 0, cap));
        if (got.size() != expect) {
            detail = "fetch(" + std::to_string(k) + ") size " + std::to_string(got.size());
            return false;
        }
        for (std::size_t i = 0; i < got.size(); ++i) {
            if (got[i].offset != k + 1 + static_cast<std::int64_t>(i)) {
                detail = "fetch(" + std::to_string(k) + ") offset gap";
                return false;
            }
        }
    }
    return true;
}

RunConfig base(const std::string& label, Acks acks = Acks::Acks1)
{
    RunConfig cfg;
    cfg.producer.acks = acks;
    cfg.run.duration_s = 600;
    cfg.run.label = label;
    return cfg;
}

SenderSpec sender(Nanos delay, bool ram = true, Locality loc = Locality::Local, std::string host = {})
{
    SenderSpec s;
    s.delay_ns = delay;
    s.duration_s = 600;
    s.read_in_ram = ram;
    s.locality = loc;
    s.host = std::move(host);
    return s;
}

Outcome run(const RunConfig& cfg, const std::vector<std::string>& keep_series = {})
{
    Outcome o;
    o.label = cfg.run.label;
    const auto t0 = WallClock::now();
    BenchRun br(cfg);
    o.result = br.execute();
    o.wall_s = seconds_since(t0);

    const auto t1 = cfg.run.epoch + o.result.end_time / kNanosPerSecond;
    for (const auto& path : br.store().paths()) {
        o.exports[path] = export_tsv(br.store(), path, cfg.run.epoch, t1);
    }
    for (const auto& path : keep_series) {
        o.series[path] = br.store().points(path);
    }

    if (!o.result.conserved()) {
        o.log_ok = false;
        o.log_detail = "sent " + std::to_string(o.result.records_sent) + " messages_in " +
                       std::to_string(o.result.messages_in) + " log " + std::to_string(o.result.log_records);
    }
    const auto counts = br.store().points(metric_path::kMessagesInCount);
    if (o.log_ok && static_cast<std::uint64_t>(counts.back().value) != o.result.messages_in) {
        o.log_ok = false;
        o.log_detail = "MessagesInPerSec.Count series ends below the counter";
    }
    for (int p = 0; o.log_ok && p < cfg.topic.partitions; ++p) {
        o.log_ok = check_log(br.cluster().log(br.topic(), p), o.log_detail);
    }
    if (!o.log_ok) {
        g_log_failures.push_back(o.label + ": " + o.log_detail);
    }
    std::fprintf(stderr, "  %-28s steady=%s rate=%.1f cv=%.4f wall=%.2fs events=%llu\n", o.label.c_str(),
                 o.result.summary.steady ? "yes" : "no", o.result.summary.steady_rate, o.result.rate_window.cv,
                 o.wall_s, static_cast<unsigned long long>(o.result.events));
    return o;
}

std::map<int, std::pair<bool, std::string>> g_verdicts;

void report(int n, bool pass, const std::string& detail)
{
    std::fprintf(stderr, "  criterion %d done\n", n);
    g_verdicts[n] = {pass, detail};
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// rate_k from the first instantaneous rate plus the weighted sum of the rest.
double closed_form(const std::vector<double>& inst)
{
    const double a = one_minute_alpha();
    const auto k = inst.size();
    double r = std::pow(1.0 - a, static_cast<double>(k - 1)) * inst[0];
    for (std::size_t j = 1; j < k; ++j) {
        r += a * std::pow(1.0 - a, static_cast<double>(k - 1 - j)) * inst[j];
    }
    return r;
}

} // namespace

int main()
{
    const auto suite_start = WallClock::now();
    const std::string eth0_b1 = metric_path::packets_rx("broker1", "eth0");
    const std::string load_b1 = metric_path::load("broker1");

    // 1. rate fidelity at 100K, and 4. acks equivalence (acks 1 vs all reuse these runs)
    {
        std::map<Acks, Outcome> runs;
        bool pass = true;
        std::string detail;
        for (Acks acks : {Acks::Acks0, Acks::Acks1, Acks::AcksAll}) {
            auto cfg = base("1local-100K-acks" + std::string(to_string(acks)), acks);
            cfg.senders = {sender(10'000)};
            auto o = run(cfg, {eth0_b1});
            const auto& s = o.result.summary;
            const bool ok = s.steady && within(s.steady_rate, 100'000, 0.02) && o.wall_s < 10.0;
            pass = pass && ok;
            detail += "acks" + std::string(to_string(acks)) + "=" +
                      fmt("%.1f", s.steady_rate) + (s.steady ? "" : "(unsteady)") + fmt(" %.2fs; ", o.wall_s);
            runs.emplace(acks, std::move(o));
        }
        report(1, pass, detail + "target 100000 +-2%, wall < 10 s");

        const auto& a1 = runs.at(Acks::Acks1).exports;
        const auto& aall = runs.at(Acks::AcksAll).exports;
        std::size_t differing = 0;
        for (const auto& [path, doc] : a1) {
            const auto it = aall.find(path);
            differing += (it == aall.end() || it->second != doc) ? 1 : 0;
        }
        differing += aall.size() != a1.size() ? 1 : 0;
        report(4, differing == 0,
               std::to_string(a1.size()) + " series compared, " + std::to_string(differing) + " differ");

        // local-only half of criterion 6 reuses the acks=1 run
        const auto w = window(runs.at(Acks::Acks1).series.at(eth0_b1));
        const bool local_ok = w.max < 100.0;
        // remote half
        auto cfg = base("1remote-250K-acks1");
        cfg.senders = {sender(4'000, true, Locality::Remote, "client1")};
        auto remote = run(cfg, {eth0_b1});
        const auto rw = window(remote.series.at(eth0_b1));
        report(6, local_ok && within(rw.mean, 30'000, 0.25),
               fmt("remote eth0 rx %.0f pkt/s (target 30000 +-25%%); local eth0 rx mean %.1f max %.1f pkt/s (< 100)",
                   rw.mean, w.mean, w.max));
    }

    // 2. iterator-mode cap
    {
        auto cfg = base("1local-250K-iter");
        cfg.senders = {sender(4'000, false)};
        const auto iter = run(cfg);
        cfg.run.label = "1local-250K-ram";
        cfg.senders = {sender(4'000, true)};
        const auto ram = run(cfg);
        const auto& si = iter.result.summary;
        const auto& sr = ram.result.summary;
        const bool pass = si.steady && si.steady_rate >= 205'000 && si.steady_rate <= 235'000 && sr.steady &&
                          within(sr.steady_rate, 250'000, 0.02);
        report(2, pass,
               fmt("iterator %.1f (target [205000, 235000]); in-RAM %.1f (target 250000 +-2%%)", si.steady_rate,
                   sr.steady_rate));
    }

    // 3. disk-bound saturation
    {
        auto cfg = base("1local-1000K");
        cfg.senders = {sender(1'000)};
        const auto o = run(cfg, {std::string(metric_path::kBytesInRate)});
        const auto& bytes = o.series.at(std::string(metric_path::kBytesInRate));
        double peak = 0;
        for (const auto& p : bytes) {
            peak = std::max(peak, p.value);
        }
        const double ceiling = cfg.resources.effective_disk_bw;
        const double steady_bytes = o.result.summary.steady_bytes;
        const bool pass = o.result.summary.steady_rate < 450'000 && within(steady_bytes, ceiling, 0.05) &&
                          peak <= 1.01 * ceiling;
        report(3, pass,
               fmt("rate %.1f (< 450000); bytes %.0f B/s (92e6 +-5%%); peak sample %.0f B/s (<= 1.01 x 92e6)",
                   o.result.summary.steady_rate, steady_bytes, peak));
    }

    // 5. two senders, remote vs local
    {
        auto cfg = base("2remote-250K-acks1");
        cfg.senders = {sender(4'000, true, Locality::Remote, "client1"),
                       sender(4'000, true, Locality::Remote, "client2")};
        const auto remote = run(cfg);
        cfg.run.label = "2local-250K-acks1";
        cfg.senders = {sender(4'000), sender(4'000)};
        const auto local = run(cfg, {load_b1});
        const auto lw = window(local.series.at(load_b1));
        const auto& rs = remote.result.summary;
        const auto& ls = local.result.summary;
        const bool remote_ok = rs.steady && rs.steady_rate >= 400'000 && rs.steady_rate <= 440'000;
        const bool local_ok = lw.min > 8.0 && (!ls.steady || ls.steady_rate < 400'000);
        report(5, remote_ok && local_ok,
               fmt("remote %.1f (target [400000, 440000]); local load min %.2f mean %.2f (> 8), ", rs.steady_rate,
                   lw.min, lw.mean) +
                   fmt("local rate %.1f cv %.4f (unsteady or < 400000)", ls.steady_rate, local.result.rate_window.cv));
    }

    // 7. meter correctness
    {
        std::mt19937_64 rng(2024);
        double worst = 0;
        for (int seq = 0; seq < 10'000; ++seq) {
            RateMeter m;
            std::vector<double> inst;
            const auto ticks = 1 + rng() % 120;
            const auto scale = std::uint64_t{1} << (rng() % 24);
            for (std::uint64_t t = 0; t < ticks; ++t) {
                const auto n = rng() % (scale + 1);
                if (n > 0) {
                    m.mark(static_cast<std::int64_t>(n));
                }
                m.tick();
                inst.push_back(static_cast<double>(n) / kMeterTickSeconds);
            }
            const double expect = closed_form(inst);
            const double got = m.one_minute_rate();
            const double err = expect == 0.0 ? std::abs(got) : std::abs(got - expect) / std::abs(expect);
            worst = std::max(worst, err);
        }
        RateMeter ramp;
        ramp.tick();
        const double R = 100'000;
        for (int t = 0; t < 12; ++t) {
            ramp.mark(static_cast<std::int64_t>(R * kMeterTickSeconds));
            ramp.tick();
        }
        const double target = (1.0 - std::exp(-1.0)) * R;
        const double ramp_err = std::abs(ramp.one_minute_rate() - target) / target;
        report(7, worst <= 1e-9 && ramp_err <= 1e-6,
               fmt("worst relative error %.3g over 10000 sequences (<= 1e-9); ramp at 60 s %.4f vs %.4f (<= 1e-6)",
                   worst, ramp.one_minute_rate(), target));
    }

    // 8. protocol and export determinism
    {
        std::mt19937_64 rng(8);
        int roundtrip_bad = 0;
        for (int i = 0; i < 1000; ++i) {
            std::string path = "bench";
            for (auto s = 1 + rng() % 6; s > 0; --s) {
                path += '.';
                path += static_cast<char>('a' + rng() % 26);
                path += std::to_string(rng() % 100'000);
            }
            const double value = std::ldexp(static_cast<double>(rng() >> 11), static_cast<int>(rng() % 100) - 70) *
                                 ((rng() & 1) ? -1.0 : 1.0);
            const MetricPoint p{path, value, static_cast<std::int64_t>(rng() % 4'102'444'800ULL)};
            try {
                roundtrip_bad += parse_line(encode_line(p)) == p ? 0 : 1;
            } catch (const Error&) {
                ++roundtrip_bad;
            }
        }

        SeriesStore fuzz_store;
        CarbonIngest ingest(fuzz_store);
        const std::string alphabet = "abz.09 -+eE\t\r\nxinfa";
        int crashed = 0;
        for (int i = 0; i < 10'000; ++i) {
            std::string line;
            for (auto len = rng() % 64; len > 0; --len) {
                line += alphabet[rng() % alphabet.size()];
            }
            line += '\n';
            try {
                ingest.feed(line);
            } catch (...) {
                ++crashed;
            }
        }

        auto golden = [](std::uint64_t seed) {
            auto cfg = base("golden-50K");
            cfg.run.duration_s = 300;
            cfg.run.seed = seed;
            auto s = sender(20'000);
            s.duration_s = 300;
            cfg.senders = {s};
            return run(cfg).exports;
        };
        const auto g1 = golden(1);
        const auto g1_again = golden(1);
        const auto g2 = golden(77);
        const bool golden_ok = g1 == g1_again && g1 == g2 && !g1.empty();
        report(8, roundtrip_bad == 0 && crashed == 0 && golden_ok,
               std::to_string(roundtrip_bad) + " round-trip mismatches of 1000; " + std::to_string(crashed) +
                   " ingest exceptions of 10000 fuzz lines (" + std::to_string(ingest.malformed()) +
                   " rejected); golden exports " + (golden_ok ? "identical" : "DIFFER") + " across repeats and seeds");
    }

    // 9. log and conservation over every run above
    {
        std::string detail = g_log_failures.empty() ? "all runs conserved, dense, fetch suffix exact" : "";
        for (const auto& f : g_log_failures) {
            detail += f + "; ";
        }
        report(9, g_log_failures.empty(), detail);
    }

    const double total = seconds_since(suite_start);
    report(10, total < 90.0, fmt("suite wall %.1f s (< 90 s)", total));

    int failures = 0;
    for (const auto& [n, v] : g_verdicts) {
        std::printf("criterion %d: %s  %s\n", n, v.first ? "PASS" : "FAIL", v.second.c_str());
        failures += v.first ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
