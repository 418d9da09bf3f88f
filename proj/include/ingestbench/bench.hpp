#pragma once

// Run orchestration: config parsing, the ten-minute run, steady-rate
// detection, output directories and the summary report.

#include "ingestbench/cluster.hpp"
#include "ingestbench/core.hpp"
#include "ingestbench/metrics.hpp"
#include "ingestbench/producer.hpp"
#include "ingestbench/sender.hpp"
#include "ingestbench/sim.hpp"
#include "ingestbench/source.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ingestbench {

inline constexpr std::string_view kVersion = "1.0.0";

struct RunSettings {
    std::int64_t duration_s = 600;
    ClockMode mode = ClockMode::VirtualTime;
    std::uint64_t seed = 1;
    std::string out_dir;
    int brokers = 3;
    std::string label;
    std::int64_t epoch = 0;
    double ramp_skip_s = 120;
    double tail_skip_s = 60;
    double cv_max = 0.05;

    friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

struct RunConfig {
    TopicConfig topic;
    ProducerProps producer;
    std::string profile_name = "paper-hw";
    ResourceProfile resources;
    std::vector<SenderSpec> senders;
    RunSettings run;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

struct KeyValue {
    std::string key;
    std::string value;
    int line;
};

class ValueReader {
public:
    ValueReader(const KeyValue& kv, std::string_view section) : kv_(&kv), section_(section) {}

    [[noreturn]] void mismatch(std::string_view expected) const
    {
        throw Error(ErrorCode::TypeMismatch, "line " + std::to_string(kv_->line) + ": [" + std::string(section_) +
                                                 "] " + kv_->key + " = '" + kv_->value + "': expected " +
                                                 std::string(expected));
    }

    template <typename Int>
    Int integer(Int min_value = std::numeric_limits<Int>::min()) const
    {
        Int v{};
        const auto& s = kv_->value;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
            mismatch("an integer");
        }
        if (v < min_value) {
            mismatch("an integer >= " + std::to_string(min_value));
        }
        return v;
    }

    double real(bool positive = false) const
    {
        double v = 0;
        const auto& s = kv_->value;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
            mismatch("a number");
        }
        if (positive ? !(v > 0) : v < 0) {
            mismatch(positive ? "a positive number" : "a non-negative number");
        }
        return v;
    }

    bool boolean() const
    {
        const auto& s = kv_->value;
        if (s == "true" || s == "yes" || s == "1") {
            return true;
        }
        if (s == "false" || s == "no" || s == "0") {
            return false;
        }
        mismatch("true or false");
    }

    const std::string& text() const { return kv_->value; }

private:
    const KeyValue* kv_;
    std::string_view section_;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<KeyValue> entries;
};

inline std::vector<Section> split_sections(std::string_view text, bool sectionless = false)
{
    std::vector<Section> sections;
    if (sectionless) {
        sections.push_back({"", 0, {}});
    }
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        const auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#' || line.front() == ';') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']' || sectionless) {
                throw Error(ErrorCode::TypeMismatch, "line " + std::to_string(line_no) + ": malformed section header");
            }
            const auto name = std::string(trim(line.substr(1, line.size() - 2)));
            for (const auto& s : sections) {
                if (s.name == name) {
                    throw Error(ErrorCode::TypeMismatch,
                                "line " + std::to_string(line_no) + ": duplicate section [" + name + "]");
                }
            }
            sections.push_back({name, line_no, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::TypeMismatch, "line " + std::to_string(line_no) + ": expected key = value");
        }
        if (sections.empty()) {
            throw Error(ErrorCode::MissingSection,
                        "line " + std::to_string(line_no) + ": key outside of any [section]");
        }
        KeyValue kv{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
        for (const auto& prev : sections.back().entries) {
            if (prev.key == kv.key) {
                throw Error(ErrorCode::TypeMismatch, "line " + std::to_string(line_no) + ": duplicate key '" +
                                                         kv.key + "'");
            }
        }
        sections.back().entries.push_back(std::move(kv));
    }
    return sections;
}

[[noreturn]] inline void unknown_key(const KeyValue& kv, std::string_view section)
{
    throw Error(ErrorCode::UnknownKey, "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "' in [" +
                                           std::string(section) + "]");
}

/// Applies one resource key; false if the key is not a resource field.
inline bool apply_resource(ResourceProfile& r, const KeyValue& kv, std::string_view section)
{
    ValueReader v(kv, section);
    const auto& k = kv.key;
    if (k == "disk_write_bw") r.disk_write_bw = v.real(true);
    else if (k == "effective_disk_bw") r.effective_disk_bw = v.real(true);
    else if (k == "nic_bw") r.nic_bw = v.real(true);
    else if (k == "loopback_bw") r.loopback_bw = v.real(true);
    else if (k == "cores") r.cores = v.integer<int>(1);
    else if (k == "cpu_cost_per_msg_ns") r.cpu_cost_per_msg_ns = v.real();
    else if (k == "mtu_bytes") r.mtu_bytes = v.integer<std::uint64_t>(1);
    else if (k == "replication_delay_ns") r.replication_delay_ns = v.integer<Nanos>(0);
    else if (k == "read_latency_ns") r.read_latency_ns = v.integer<Nanos>(0);
    else if (k == "io_unit_bytes") r.io_unit_bytes = v.integer<std::uint64_t>(1);
    else if (k == "background_eth0_pps") r.background_eth0_pps = v.real();
    else if (k == "background_packet_bytes") r.background_packet_bytes = v.integer<std::uint64_t>(0);
    else if (k == "contention_run_mean_s") r.contention_run_mean_s = v.real(true);
    else if (k == "contention_stall_mean_s") r.contention_stall_mean_s = v.real(true);
    else if (k == "record_size_target") r.record_size_target = v.integer<std::uint64_t>(143);
    else return false;
    return true;
}

inline std::string render_resources(const ResourceProfile& r)
{
    std::string out;
    auto line = [&](std::string_view k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    line("disk_write_bw", format_value(r.disk_write_bw));
    line("effective_disk_bw", format_value(r.effective_disk_bw));
    line("nic_bw", format_value(r.nic_bw));
    line("loopback_bw", format_value(r.loopback_bw));
    line("cores", std::to_string(r.cores));
    line("cpu_cost_per_msg_ns", format_value(r.cpu_cost_per_msg_ns));
    line("mtu_bytes", std::to_string(r.mtu_bytes));
    line("replication_delay_ns", std::to_string(r.replication_delay_ns));
    line("read_latency_ns", std::to_string(r.read_latency_ns));
    line("io_unit_bytes", std::to_string(r.io_unit_bytes));
    line("background_eth0_pps", format_value(r.background_eth0_pps));
    line("background_packet_bytes", std::to_string(r.background_packet_bytes));
    line("contention_run_mean_s", format_value(r.contention_run_mean_s));
    line("contention_stall_mean_s", format_value(r.contention_stall_mean_s));
    line("record_size_target", std::to_string(r.record_size_target));
    return out;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace detail

/// Parses a profile file: sectionless `key = value` resource fields on top
/// of the paper-hw defaults.
inline ResourceProfile parse_profile(std::string_view text)
{
    ResourceProfile r = paper_hw_profile();
    const auto sections = detail::split_sections(text, true);
    for (const auto& kv : sections.front().entries) {
        if (!detail::apply_resource(r, kv, "profile")) {
            detail::unknown_key(kv, "profile");
        }
    }
    r.validate();
    return r;
}

/// Resolves a named profile. INGESTBENCH_PROFILE_DIR/<name>.profile wins;
/// "paper-hw" is also built in.
inline ResourceProfile load_profile(const std::string& name)
{
    if (const char* dir = std::getenv("INGESTBENCH_PROFILE_DIR"); dir && *dir) {
        const auto path = std::filesystem::path(dir) / (name + ".profile");
        if (std::filesystem::exists(path)) {
            return parse_profile(detail::read_file(path));
        }
    }
    if (name == "paper-hw") {
        return paper_hw_profile();
    }
    throw Error(ErrorCode::TypeMismatch, "unknown resource profile '" + name + "'");
}

inline RunConfig parse_config(std::string_view text)
{
    using detail::KeyValue;
    using detail::ValueReader;

    RunConfig cfg;
    const auto sections = detail::split_sections(text);

    const detail::Section* resources = nullptr;
    std::map<int, const detail::Section*> sender_sections;
    for (const auto& s : sections) {
        if (s.name == "topic") {
            for (const auto& kv : s.entries) {
                ValueReader v(kv, s.name);
                if (kv.key == "name") {
                    if (kv.value.empty()) {
                        v.mismatch("a non-empty name");
                    }
                    cfg.topic.name = kv.value;
                } else if (kv.key == "partitions") {
                    cfg.topic.partitions = v.integer<int>(1);
                } else if (kv.key == "replication_factor") {
                    cfg.topic.replication_factor = v.integer<int>(1);
                } else if (kv.key == "timestamp_type") {
                    if (kv.value == "CreateTime") {
                        cfg.topic.timestamp_type = TimestampType::CreateTime;
                    } else if (kv.value == "LogAppendTime") {
                        cfg.topic.timestamp_type = TimestampType::LogAppendTime;
                    } else {
                        v.mismatch("CreateTime or LogAppendTime");
                    }
                } else {
                    detail::unknown_key(kv, s.name);
                }
            }
        } else if (s.name == "producer") {
            for (const auto& kv : s.entries) {
                ValueReader v(kv, s.name);
                if (kv.key == "batch_size") {
                    cfg.producer.batch_size_bytes = v.integer<std::uint64_t>(1);
                } else if (kv.key == "buffer_memory") {
                    cfg.producer.buffer_memory_bytes = v.integer<std::uint64_t>(1);
                } else if (kv.key == "acks") {
                    if (kv.value == "0") {
                        cfg.producer.acks = Acks::Acks0;
                    } else if (kv.value == "1") {
                        cfg.producer.acks = Acks::Acks1;
                    } else if (kv.value == "all" || kv.value == "-1") {
                        cfg.producer.acks = Acks::AcksAll;
                    } else {
                        v.mismatch("0, 1 or all");
                    }
                } else if (kv.key == "min_insync_replicas") {
                    cfg.producer.min_insync_replicas = v.integer<int>(1);
                } else if (kv.key == "max_in_flight") {
                    cfg.producer.max_in_flight = v.integer<int>(1);
                } else {
                    detail::unknown_key(kv, s.name);
                }
            }
        } else if (s.name == "resources") {
            resources = &s;
        } else if (s.name == "run") {
            for (const auto& kv : s.entries) {
                ValueReader v(kv, s.name);
                auto& r = cfg.run;
                if (kv.key == "duration_s") {
                    r.duration_s = v.integer<std::int64_t>(1);
                } else if (kv.key == "mode") {
                    if (kv.value == "virtual") {
                        r.mode = ClockMode::VirtualTime;
                    } else if (kv.value == "realtime") {
                        r.mode = ClockMode::RealTime;
                    } else {
                        v.mismatch("virtual or realtime");
                    }
                } else if (kv.key == "seed") {
                    r.seed = v.integer<std::uint64_t>();
                } else if (kv.key == "out_dir") {
                    r.out_dir = kv.value;
                } else if (kv.key == "brokers") {
                    r.brokers = v.integer<int>(1);
                } else if (kv.key == "label") {
                    if (kv.value.find_first_of(" \t") != std::string::npos) {
                        v.mismatch("a label without whitespace");
                    }
                    r.label = kv.value;
                } else if (kv.key == "epoch") {
                    r.epoch = v.integer<std::int64_t>(0);
                } else if (kv.key == "ramp_skip_s") {
                    r.ramp_skip_s = v.real();
                } else if (kv.key == "tail_skip_s") {
                    r.tail_skip_s = v.real();
                } else if (kv.key == "cv_max") {
                    r.cv_max = v.real();
                } else {
                    detail::unknown_key(kv, s.name);
                }
            }
        } else if (s.name.rfind("senders.", 0) == 0) {
            const auto num = std::string_view(s.name).substr(8);
            int n = 0;
            auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), n);
            if (num.empty() || ec != std::errc{} || ptr != num.data() + num.size() || n < 1) {
                throw Error(ErrorCode::UnknownKey,
                            "line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");
            }
            sender_sections[n] = &s;
        } else {
            throw Error(ErrorCode::UnknownKey, "line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");
        }
    }

    if (resources) {
        for (const auto& kv : resources->entries) {
            if (kv.key == "profile") {
                cfg.profile_name = kv.value;
            }
        }
    }
    cfg.resources = load_profile(cfg.profile_name);
    if (resources) {
        for (const auto& kv : resources->entries) {
            if (kv.key != "profile" && !detail::apply_resource(cfg.resources, kv, "resources")) {
                detail::unknown_key(kv, "resources");
            }
        }
    }
    try {
        cfg.resources.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::TypeMismatch, std::string("[resources] ") + e.what());
    }

    if (sender_sections.empty()) {
        throw Error(ErrorCode::MissingSection, "no [senders.1] section");
    }
    int expected = 1;
    for (const auto& [n, s] : sender_sections) {
        if (n != expected) {
            throw Error(ErrorCode::MissingSection, "missing [senders." + std::to_string(expected) + "]");
        }
        ++expected;
        SenderSpec spec;
        spec.duration_s = cfg.run.duration_s;
        spec.producer = cfg.producer;
        spec.source.record_size_target = cfg.resources.record_size_target;
        bool have_rate = false;
        std::string source_kind = "synthetic";
        for (const auto& kv : s->entries) {
            ValueReader v(kv, s->name);
            if (kv.key == "delay_ns" || kv.key == "rate_mps") {
                if (have_rate) {
                    v.mismatch("only one of delay_ns and rate_mps");
                }
                have_rate = true;
                if (kv.key == "delay_ns") {
                    spec.delay_ns = v.integer<Nanos>(1);
                } else {
                    try {
                        spec.delay_ns = delay_for_rate(v.real(true));
                    } catch (const Error&) {
                        v.mismatch("a rate between 1e-9 and 1e9");
                    }
                }
            } else if (kv.key == "duration_s") {
                spec.duration_s = v.integer<std::int64_t>(1);
            } else if (kv.key == "read_in_ram") {
                spec.read_in_ram = v.boolean();
            } else if (kv.key == "locality") {
                if (kv.value == "local") {
                    spec.locality = Locality::Local;
                } else if (kv.value == "remote") {
                    spec.locality = Locality::Remote;
                } else {
                    v.mismatch("local or remote");
                }
            } else if (kv.key == "host") {
                spec.host = kv.value;
            } else if (kv.key == "source") {
                if (kv.value != "synthetic" && kv.value != "file") {
                    v.mismatch("synthetic or file");
                }
                source_kind = kv.value;
            } else if (kv.key == "path") {
                spec.source.path = kv.value;
            } else if (kv.key == "delimiter") {
                if (kv.value == "\\t" || kv.value == "tab") {
                    spec.source.delimiter = '\t';
                } else if (kv.value.size() == 1) {
                    spec.source.delimiter = kv.value[0];
                } else {
                    v.mismatch("a single character or \\t");
                }
            } else if (kv.key == "seed") {
                spec.source.seed = v.integer<std::uint64_t>();
            } else if (kv.key == "synthetic_records") {
                spec.source.synthetic_records = v.integer<std::size_t>(1);
            } else if (kv.key == "record_size_target") {
                spec.source.record_size_target = v.integer<std::uint64_t>(143);
            } else if (kv.key == "read_latency_ns") {
                spec.read_latency_ns = v.integer<Nanos>(0);
            } else {
                detail::unknown_key(kv, s->name);
            }
        }
        if (!have_rate) {
            throw Error(ErrorCode::TypeMismatch, "[" + s->name + "] needs delay_ns or rate_mps");
        }
        spec.source.kind =
            source_kind == "file" ? DataSourceSpec::Kind::DelimitedFile : DataSourceSpec::Kind::Synthetic;
        if (spec.source.kind == DataSourceSpec::Kind::DelimitedFile && spec.source.path.empty()) {
            throw Error(ErrorCode::TypeMismatch, "[" + s->name + "] source = file needs a path");
        }
        if (spec.locality == Locality::Local && !spec.host.empty()) {
            throw Error(ErrorCode::TypeMismatch, "[" + s->name + "] host applies to remote senders only");
        }
        cfg.senders.push_back(std::move(spec));
    }

    if (cfg.topic.replication_factor > cfg.run.brokers) {
        throw Error(ErrorCode::InvalidReplication, "replication_factor " +
                                                       std::to_string(cfg.topic.replication_factor) + " > brokers " +
                                                       std::to_string(cfg.run.brokers));
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::MissingSection, "cannot read config '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Canonical config text with every key spelled out; parse_config of the
/// result yields the same RunConfig.
inline std::string echo_config(const RunConfig& cfg)
{
    std::string out;
    auto line = [&](std::string_view k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    out += "[topic]\n";
    line("name", cfg.topic.name);
    line("partitions", std::to_string(cfg.topic.partitions));
    line("replication_factor", std::to_string(cfg.topic.replication_factor));
    line("timestamp_type", cfg.topic.timestamp_type == TimestampType::CreateTime ? "CreateTime" : "LogAppendTime");

    out += "\n[producer]\n";
    line("batch_size", std::to_string(cfg.producer.batch_size_bytes));
    line("buffer_memory", std::to_string(cfg.producer.buffer_memory_bytes));
    line("acks", std::string(to_string(cfg.producer.acks)));
    line("min_insync_replicas", std::to_string(cfg.producer.min_insync_replicas));
    line("max_in_flight", std::to_string(cfg.producer.max_in_flight));

    out += "\n[resources]\n";
    line("profile", cfg.profile_name);
    out += detail::render_resources(cfg.resources);

    for (std::size_t i = 0; i < cfg.senders.size(); ++i) {
        const auto& s = cfg.senders[i];
        out += "\n[senders." + std::to_string(i + 1) + "]\n";
        line("delay_ns", std::to_string(s.delay_ns));
        line("duration_s", std::to_string(s.duration_s));
        line("read_in_ram", s.read_in_ram ? "true" : "false");
        line("locality", std::string(to_string(s.locality)));
        if (!s.host.empty()) {
            line("host", s.host);
        }
        if (s.source.kind == DataSourceSpec::Kind::DelimitedFile) {
            line("source", "file");
            line("path", s.source.path);
            line("delimiter", s.source.delimiter == '\t' ? "\\t" : std::string(1, s.source.delimiter));
        } else {
            line("source", "synthetic");
            line("seed", std::to_string(s.source.seed));
            line("synthetic_records", std::to_string(s.source.synthetic_records));
        }
        line("record_size_target", std::to_string(s.source.record_size_target));
        if (s.read_latency_ns) {
            line("read_latency_ns", std::to_string(*s.read_latency_ns));
        }
    }

    out += "\n[run]\n";
    line("duration_s", std::to_string(cfg.run.duration_s));
    line("mode", cfg.run.mode == ClockMode::VirtualTime ? "virtual" : "realtime");
    line("seed", std::to_string(cfg.run.seed));
    if (!cfg.run.out_dir.empty()) {
        line("out_dir", cfg.run.out_dir);
    }
    line("brokers", std::to_string(cfg.run.brokers));
    if (!cfg.run.label.empty()) {
        line("label", cfg.run.label);
    }
    line("epoch", std::to_string(cfg.run.epoch));
    line("ramp_skip_s", format_value(cfg.run.ramp_skip_s));
    line("tail_skip_s", format_value(cfg.run.tail_skip_s));
    line("cv_max", format_value(cfg.run.cv_max));
    return out;
}

struct SteadyResult {
    bool steady = false;
    double rate = 0.0;
    double stdev = 0.0;
    double cv = 0.0;
    std::size_t samples = 0;
};

/// Mean and population stdev of the samples in [t_first + ramp_skip,
/// t_last - tail_skip]; steady when stdev / mean <= cv_max.
inline SteadyResult detect_steady(const std::vector<SeriesStore::Point>& series, double ramp_skip_s = 120,
                                  double tail_skip_s = 60, double cv_max = 0.05)
{
    if (series.size() < 2) {
        throw Error(ErrorCode::InsufficientData, "series has fewer than two points");
    }
    const double t_first = static_cast<double>(series.front().ts);
    const double t_last = static_cast<double>(series.back().ts);
    if (!(t_last - t_first > ramp_skip_s + tail_skip_s + 60.0)) {
        throw Error(ErrorCode::InsufficientData, "series spans " + format_value(t_last - t_first) +
                                                     " s, need more than " +
                                                     format_value(ramp_skip_s + tail_skip_s + 60.0));
    }
    const double lo = t_first + ramp_skip_s;
    const double hi = t_last - tail_skip_s;
    SteadyResult r;
    double sum = 0.0;
    for (const auto& p : series) {
        const auto t = static_cast<double>(p.ts);
        if (t >= lo && t <= hi) {
            sum += p.value;
            ++r.samples;
        }
    }
    r.rate = sum / static_cast<double>(r.samples);
    double sq = 0.0;
    for (const auto& p : series) {
        const auto t = static_cast<double>(p.ts);
        if (t >= lo && t <= hi) {
            sq += (p.value - r.rate) * (p.value - r.rate);
        }
    }
    r.stdev = std::sqrt(sq / static_cast<double>(r.samples));
    if (r.rate == 0.0) {
        r.cv = r.stdev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
        r.cv = r.stdev / std::abs(r.rate);
    }
    r.steady = r.cv <= cv_max;
    return r;
}

/// One report row.
struct RunSummary {
    std::string label;
    double configured_rate = 0.0;
    bool steady = false;
    double steady_rate = 0.0;
    double steady_bytes = 0.0;
    double peak_rate = 0.0;

    friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

struct Report {
    std::string text;
    std::string tsv;
};

inline constexpr std::string_view kSummaryHeader =
    "label\tconfigured_rate\tsteady\tsteady_rate\tsteady_bytes\tpeak_rate\n";

inline std::string summary_tsv_row(const RunSummary& r)
{
    return r.label + '\t' + format_value(r.configured_rate) + '\t' + (r.steady ? "yes" : "no") + '\t' +
           format_value(r.steady_rate) + '\t' + format_value(r.steady_bytes) + '\t' + format_value(r.peak_rate) +
           '\n';
}

inline Report summarize(std::vector<RunSummary> rows)
{
    if (rows.empty()) {
        throw std::invalid_argument("summarize needs at least one run");
    }
    std::stable_sort(rows.begin(), rows.end(), [](const RunSummary& a, const RunSummary& b) {
        if (a.steady_rate != b.steady_rate) {
            return a.steady_rate > b.steady_rate;
        }
        return a.label < b.label;
    });

    Report report;
    report.tsv = std::string(kSummaryHeader);
    for (const auto& r : rows) {
        report.tsv += summary_tsv_row(r);
    }

    auto fixed = [](double v, int prec) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", prec, v);
        return std::string(buf);
    };
    std::vector<std::array<std::string, 6>> cells;
    cells.push_back({"label", "configured MPS", "steady", "steady MPS", "steady MB/s", "peak MPS"});
    for (const auto& r : rows) {
        cells.push_back({r.label, fixed(r.configured_rate, 0), r.steady ? "yes" : "NO (unsteady)",
                         fixed(r.steady_rate, 0), fixed(r.steady_bytes / 1e6, 2), fixed(r.peak_rate, 0)});
    }
    std::array<std::size_t, 6> width{};
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    for (const auto& row : cells) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto pad = std::string(width[c] - row[c].size(), ' ');
            line += c == 0 ? row[c] + pad : pad + row[c];
            if (c + 1 < row.size()) {
                line += "  ";
            }
        }
        report.text += line + '\n';
    }
    return report;
}

/// Parses a summary.tsv document back into rows.
inline std::vector<RunSummary> parse_summary_tsv(std::string_view doc)
{
    std::vector<RunSummary> rows;
    std::size_t pos = 0;
    bool header = true;
    while (pos < doc.size()) {
        auto nl = doc.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = doc.size();
        }
        const auto line = doc.substr(pos, nl - pos);
        pos = nl + 1;
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> f;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            f.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
            if (tab == std::string_view::npos) {
                break;
            }
            start = tab + 1;
        }
        auto num = [&](std::string_view s) {
            double v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) {
                throw Error(ErrorCode::MalformedLine, "bad number in summary: '" + std::string(s) + "'");
            }
            return v;
        };
        if (f.size() != 6) {
            throw Error(ErrorCode::MalformedLine, "summary row needs 6 fields");
        }
        rows.push_back({std::string(f[0]), num(f[1]), f[2] == "yes", num(f[3]), num(f[4]), num(f[5])});
    }
    return rows;
}

inline std::vector<RunSummary> load_run_dir(const std::filesystem::path& dir)
{
    return parse_summary_tsv(detail::read_file(dir / "summary.tsv"));
}

/// Default label, e.g. "2remote-250K-acks1-b16384-ram".
inline std::string default_label(const RunConfig& cfg)
{
    const auto& s = cfg.senders.front();
    double rate = 0;
    for (const auto& sp : cfg.senders) {
        rate += sp.configured_rate();
    }
    const auto per_sender = rate / static_cast<double>(cfg.senders.size());
    char rate_buf[32];
    if (per_sender >= 1000 && std::fmod(per_sender, 1000.0) == 0.0) {
        std::snprintf(rate_buf, sizeof rate_buf, "%.0fK", per_sender / 1000);
    } else {
        std::snprintf(rate_buf, sizeof rate_buf, "%.0f", per_sender);
    }
    std::string acks(to_string(cfg.producer.acks));
    return std::to_string(cfg.senders.size()) + std::string(to_string(s.locality)) + "-" + rate_buf + "-acks" + acks +
           "-b" + std::to_string(cfg.producer.batch_size_bytes) + (s.read_in_ram ? "-ram" : "-iter");
}

struct RunResult {
    RunSummary summary;
    SteadyResult rate_window;
    SteadyResult bytes_window;
    std::uint64_t records_sent = 0;
    std::uint64_t messages_in = 0;
    std::uint64_t log_records = 0;
    std::uint64_t events = 0;
    Nanos end_time = 0;

    [[nodiscard]] bool conserved() const noexcept
    {
        return records_sent == messages_in && messages_in == log_records;
    }
};

/// One provisioned run. Keeps the cluster and series alive after execute()
/// so callers can inspect logs and counters.
class BenchRun {
public:
    explicit BenchRun(RunConfig config, std::function<void(const MetricPoint&)> sink = {})
        : config_(std::move(config)), sink_(std::move(sink)), sim_(config_.run.mode)
    {
        if (config_.senders.empty()) {
            throw Error(ErrorCode::MissingSection, "run needs at least one sender");
        }
        if (config_.run.label.empty()) {
            config_.run.label = default_label(config_);
        }
        cluster_ = std::make_unique<Cluster>(sim_, config_.resources, config_.run.brokers, config_.run.seed);
        topic_ = cluster_->create_topic(config_.topic);
        for (std::size_t i = 0; i < config_.senders.size(); ++i) {
            senders_.push_back(std::make_unique<Sender>(sim_, *cluster_, topic_, config_.senders[i],
                                                        static_cast<std::uint32_t>(i)));
        }
    }

    BenchRun(const BenchRun&) = delete;
    BenchRun& operator=(const BenchRun&) = delete;

    const RunResult& execute()
    {
        if (executed_) {
            throw std::logic_error("run already executed");
        }
        executed_ = true;
        const Nanos duration = config_.run.duration_s * kNanosPerSecond;
        for (auto& s : senders_) {
            s->start(0);
        }
        cluster_->start_metrics(
            &store_, config_.run.epoch,
            [this, duration](Nanos now) { return now < duration || !all_finished(); }, sink_);
        sim_.run();

        result_.summary.label = config_.run.label;
        for (const auto& s : senders_) {
            result_.summary.configured_rate += s->spec().configured_rate();
            result_.records_sent += s->stats().sent;
        }
        result_.messages_in = cluster_->messages_in();
        for (int p = 0; p < config_.topic.partitions; ++p) {
            result_.log_records += static_cast<std::uint64_t>(cluster_->log(topic_, p).next_offset());
        }
        result_.events = sim_.events_processed();
        result_.end_time = sim_.now();

        const auto rate_series = store_.points(metric_path::kMessagesInRate);
        const auto& r = config_.run;
        result_.rate_window = detect_steady(rate_series, r.ramp_skip_s, r.tail_skip_s, r.cv_max);
        result_.bytes_window =
            detect_steady(store_.points(metric_path::kBytesInRate), r.ramp_skip_s, r.tail_skip_s, r.cv_max);
        result_.summary.steady = result_.rate_window.steady;
        result_.summary.steady_rate = result_.rate_window.rate;
        result_.summary.steady_bytes = result_.bytes_window.rate;
        for (const auto& p : rate_series) {
            result_.summary.peak_rate = std::max(result_.summary.peak_rate, p.value);
        }
        return result_;
    }

    /// Writes series/<path>.tsv, summary.tsv, config.echo and run.meta into
    /// `dir`. On failure nothing new is left behind.
    void write_outputs(const std::filesystem::path& dir) const
    {
        namespace fs = std::filesystem;
        if (!executed_) {
            throw std::logic_error("write_outputs before execute");
        }
        const bool existed = fs::exists(dir);
        const auto staging = dir / ".partial";
        try {
            fs::remove_all(staging);
            fs::create_directories(staging / "series");
            const auto t0 = config_.run.epoch;
            const auto t1 = config_.run.epoch + result_.end_time / kNanosPerSecond;
            for (const auto& path : store_.paths()) {
                write_file(staging / "series" / (path + ".tsv"), export_tsv(store_, path, t0, t1));
            }
            write_file(staging / "summary.tsv", std::string(kSummaryHeader) + summary_tsv_row(result_.summary));
            write_file(staging / "config.echo", echo_config(config_));
            write_file(staging / "run.meta", run_meta());

            fs::remove_all(dir / "series");
            for (const auto& entry : fs::directory_iterator(staging)) {
                fs::rename(entry.path(), dir / entry.path().filename());
            }
            fs::remove_all(staging);
        } catch (const fs::filesystem_error& e) {
            std::error_code ec;
            fs::remove_all(existed ? staging : dir, ec);
            throw Error(ErrorCode::IoError, e.what());
        } catch (...) {
            std::error_code ec;
            fs::remove_all(existed ? staging : dir, ec);
            throw;
        }
    }

    [[nodiscard]] std::string run_meta() const
    {
        std::string meta;
        meta += "version\t" + std::string(kVersion) + "\n";
        meta += "label\t" + config_.run.label + "\n";
        meta += "seed\t" + std::to_string(config_.run.seed) + "\n";
        meta += std::string("mode\t") + (config_.run.mode == ClockMode::VirtualTime ? "virtual" : "realtime") + "\n";
        meta += "duration_s\t" + std::to_string(config_.run.duration_s) + "\n";
        meta += "end_time_ns\t" + std::to_string(result_.end_time) + "\n";
        meta += "events\t" + std::to_string(result_.events) + "\n";
        meta += "records_sent\t" + std::to_string(result_.records_sent) + "\n";
        meta += "messages_in\t" + std::to_string(result_.messages_in) + "\n";
        meta += "log_records\t" + std::to_string(result_.log_records) + "\n";
        meta += "steady_cv\t" + format_value(result_.rate_window.cv) + "\n";
        for (std::size_t i = 0; i < senders_.size(); ++i) {
            const auto& st = senders_[i]->stats();
            const auto prefix = "sender." + std::to_string(i + 1) + ".";
            meta += prefix + "attempted\t" + std::to_string(st.attempted) + "\n";
            meta += prefix + "sent\t" + std::to_string(st.sent) + "\n";
            meta += prefix + "dropped\t" + std::to_string(st.dropped) + "\n";
            meta += prefix + "blocked_ns\t" + std::to_string(st.blocked_time_ns) + "\n";
        }
        return meta;
    }

    [[nodiscard]] const RunConfig& config() const noexcept { return config_; }
    [[nodiscard]] const RunResult& result() const noexcept { return result_; }
    [[nodiscard]] const SeriesStore& store() const noexcept { return store_; }
    [[nodiscard]] Cluster& cluster() noexcept { return *cluster_; }
    [[nodiscard]] const Cluster& cluster() const noexcept { return *cluster_; }
    [[nodiscard]] TopicHandle topic() const noexcept { return topic_; }
    [[nodiscard]] const Sender& sender(std::size_t i) const { return *senders_.at(i); }
    [[nodiscard]] std::size_t sender_count() const noexcept { return senders_.size(); }

private:
    [[nodiscard]] bool all_finished() const
    {
        return std::all_of(senders_.begin(), senders_.end(), [](const auto& s) { return s->finished(); });
    }

    static void write_file(const std::filesystem::path& path, const std::string& content)
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) {
            throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
        }
    }

    RunConfig config_;
    std::function<void(const MetricPoint&)> sink_;
    Simulation sim_;
    std::unique_ptr<Cluster> cluster_;
    TopicHandle topic_;
    std::vector<std::unique_ptr<Sender>> senders_;
    SeriesStore store_;
    RunResult result_;
    bool executed_ = false;
};

/// Provisions and runs `config`, writing outputs when out_dir is set.
inline RunResult execute(const RunConfig& config, std::function<void(const MetricPoint&)> sink = {})
{
    BenchRun run(config, std::move(sink));
    run.execute();
    if (!config.run.out_dir.empty()) {
        run.write_outputs(config.run.out_dir);
    }
    return run.result();
}

} // namespace ingestbench
