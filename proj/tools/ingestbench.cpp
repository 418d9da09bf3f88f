// ingestbench command line.
//
//   ingestbench run --config F --out D [--mode virtual|realtime] [--seed N] [--graphite host:port]
//   ingestbench report --runs D... [--tsv F]
//   ingestbench export --run D --metric PATH
//   ingestbench listen [--port 2003] --out D --seconds N
//
// Exit status: 0 ok, 2 configuration or usage error, 3 runtime error.

#include "ingestbench/ingestbench.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace ingestbench;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int cmd_run(const std::string& config_path, const std::string& out, const std::string& mode,
            std::optional<std::uint64_t> seed, const std::string& graphite)
{
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        if (mode == "realtime") {
            cfg.run.mode = ClockMode::RealTime;
        } else if (mode == "virtual") {
            cfg.run.mode = ClockMode::VirtualTime;
        }
        if (seed) {
            cfg.run.seed = *seed;
        }
        if (!out.empty()) {
            cfg.run.out_dir = out;
        }
        if (cfg.run.out_dir.empty()) {
            throw Error(ErrorCode::MissingSection, "no output directory (--out or [run] out_dir)");
        }
    } catch (const Error& e) {
        throw ConfigFailure(e.what());
    }

    std::unique_ptr<CarbonClient> client;
    std::function<void(const MetricPoint&)> sink;
    if (!graphite.empty()) {
        const auto colon = graphite.rfind(':');
        if (colon == std::string::npos) {
            throw ConfigFailure("--graphite expects host:port");
        }
        int port = 0;
        try {
            port = std::stoi(graphite.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigFailure("--graphite expects host:port");
        }
        client = std::make_unique<CarbonClient>(graphite.substr(0, colon), static_cast<std::uint16_t>(port));
        sink = [c = client.get()](const MetricPoint& p) { c->send(p); };
    }

    const auto wall0 = std::chrono::steady_clock::now();
    BenchRun run(cfg, sink);
    const auto& result = run.execute();
    run.write_outputs(cfg.run.out_dir);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

    std::cout << summarize({result.summary}).text;
    std::fprintf(stderr, "%llu events, %.2f s wall, output in %s\n",
                 static_cast<unsigned long long>(result.events), wall, cfg.run.out_dir.c_str());
    if (!result.conserved()) {
        std::fprintf(stderr, "conservation check failed: sent %llu, messages_in %llu, log %llu\n",
                     static_cast<unsigned long long>(result.records_sent),
                     static_cast<unsigned long long>(result.messages_in),
                     static_cast<unsigned long long>(result.log_records));
        return kExitRuntime;
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& tsv_path)
{
    std::vector<RunSummary> rows;
    for (const auto& d : dirs) {
        auto r = load_run_dir(d);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    const auto report = summarize(rows);
    std::cout << report.text;
    if (!tsv_path.empty()) {
        std::ofstream out(tsv_path, std::ios::binary | std::ios::trunc);
        out << report.tsv;
        if (!out) {
            throw Error(ErrorCode::IoError, "cannot write '" + tsv_path + "'");
        }
    }
    return 0;
}

int cmd_export(const std::string& dir, const std::string& metric)
{
    const auto path = fs::path(dir) / "series" / (metric + ".tsv");
    if (!fs::exists(path)) {
        throw Error(ErrorCode::UnknownSeries, metric);
    }
    std::ifstream in(path, std::ios::binary);
    std::cout << in.rdbuf();
    return 0;
}

int cmd_listen(int port, const std::string& out, int seconds)
{
    SeriesStore store;
    CarbonServer server(store, static_cast<std::uint16_t>(port), "0.0.0.0");
    std::fprintf(stderr, "listening on port %u for %d s\n", server.port(), seconds);
    std::this_thread::sleep_for(std::chrono::seconds(seconds));
    server.stop();
    fs::create_directories(fs::path(out) / "series");
    for (const auto& p : store.paths()) {
        const auto pts = store.points(p);
        std::ofstream f(fs::path(out) / "series" / (p + ".tsv"), std::ios::binary | std::ios::trunc);
        f << export_tsv(store, p, pts.front().ts, pts.back().ts);
    }
    std::fprintf(stderr, "%llu points accepted, %llu malformed lines dropped\n",
                 static_cast<unsigned long long>(server.accepted()),
                 static_cast<unsigned long long>(server.malformed()));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kafka ingestion-rate benchmark on a simulated cluster"};
    app.require_subcommand(1);

    std::string config_path, out, mode, graphite, tsv, run_dir, metric;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> runs;
    int port = kCarbonPort;
    int seconds = 60;

    auto* run = app.add_subcommand("run", "execute one benchmark run");
    run->add_option("--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory");
    run->add_option("--mode", mode, "clock mode")->check(CLI::IsMember({"virtual", "realtime"}));
    run->add_option("--seed", seed, "override [run] seed");
    run->add_option("--graphite", graphite, "also emit metrics to host:port");

    auto* report = app.add_subcommand("report", "summarize finished runs");
    report->add_option("--runs", runs, "run directories")->required()->expected(1, -1);
    report->add_option("--tsv", tsv, "also write the TSV report here");

    auto* exp = app.add_subcommand("export", "print one series of a run as TSV");
    exp->add_option("--run", run_dir, "run directory")->required();
    exp->add_option("--metric", metric, "metric path")->required();

    auto* listen = app.add_subcommand("listen", "accept Graphite plaintext metrics");
    listen->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
    listen->add_option("--out", out, "directory for received series")->required();
    listen->add_option("--seconds", seconds, "how long to listen")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            return cmd_run(config_path, out, mode, seed, graphite);
        }
        if (*report) {
            return cmd_report(runs, tsv);
        }
        if (*exp) {
            return cmd_export(run_dir, metric);
        }
        if (*listen) {
            return cmd_listen(port, out, seconds);
        }
    } catch (const ConfigFailure& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.is_config_error() ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
