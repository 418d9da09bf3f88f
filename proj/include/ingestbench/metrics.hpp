#pragma once

// Monitoring pipeline: EWMA one-minute-rate meters, cumulative counters,
// the Graphite plaintext line protocol, a fixed-resolution series store and
// the two-column TSV export.

#include "ingestbench/core.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ingestbench {

inline constexpr Nanos kMeterTickNanos = 5 * kNanosPerSecond;
inline constexpr double kMeterTickSeconds = 5.0;

/// Smoothing constant of the one-minute rate: 1 - e^(-5/60).
inline double one_minute_alpha() { return 1.0 - std::exp(-kMeterTickSeconds / 60.0); }

/// Shortest decimal that parses back to exactly `value`, never in exponent form.
inline std::string format_value(double value)
{
    char buf[512];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed);
    if (ec != std::errc{}) {
        throw std::logic_error("value does not fit the format buffer");
    }
    return std::string(buf, end);
}

/// Exponentially weighted one-minute rate, ticked every 5 s. Marks may come
/// from several threads; tick() has exactly one caller.
class RateMeter {
public:
    void mark(std::int64_t n = 1)
    {
        if (n <= 0) {
            throw Error(ErrorCode::InvalidMark, "mark count must be >= 1, got " + std::to_string(n));
        }
        count_.fetch_add(static_cast<std::uint64_t>(n), std::memory_order_relaxed);
    }

    double tick()
    {
        const double instant = static_cast<double>(count_.exchange(0, std::memory_order_relaxed)) /
                               kMeterTickSeconds;
        if (initialized_) {
            rate_ += alpha_ * (instant - rate_);
        } else {
            rate_ = instant;
            initialized_ = true;
        }
        return rate_;
    }

    [[nodiscard]] double one_minute_rate() const noexcept { return rate_; }
    [[nodiscard]] bool initialized() const noexcept { return initialized_; }
    [[nodiscard]] std::uint64_t count_since_tick() const noexcept
    {
        return count_.load(std::memory_order_relaxed);
    }

private:
    std::atomic<std::uint64_t> count_{0};
    double rate_ = 0.0;
    bool initialized_ = false;
    double alpha_ = one_minute_alpha();
};

class Counter {
public:
    void add(std::uint64_t n) noexcept { value_.fetch_add(n, std::memory_order_relaxed); }
    [[nodiscard]] std::uint64_t value() const noexcept { return value_.load(std::memory_order_relaxed); }

private:
    std::atomic<std::uint64_t> value_{0};
};

/// Exponentially smoothed gauge sampled on the tick grid (system load).
class LoadAverage {
public:
    double sample(double demand)
    {
        load_ = load_ * decay_ + demand * (1.0 - decay_);
        return load_;
    }
    [[nodiscard]] double value() const noexcept { return load_; }

private:
    double load_ = 0.0;
    double decay_ = std::exp(-kMeterTickSeconds / 60.0);
};

struct MetricPoint {
    std::string path;
    double value = 0.0;
    std::int64_t ts = 0;

    friend bool operator==(const MetricPoint&, const MetricPoint&) = default;
};

inline bool valid_metric_path(std::string_view path) noexcept
{
    if (path.empty()) {
        return false;
    }
    return std::all_of(path.begin(), path.end(), [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return u > 0x20 && u < 0x7f;
    });
}

/// `<path> <value> <ts>\n`
inline std::string encode_line(const MetricPoint& point)
{
    if (!valid_metric_path(point.path) || !std::isfinite(point.value)) {
        throw Error(ErrorCode::MalformedLine, "cannot encode invalid metric point '" + point.path + "'");
    }
    std::string line = point.path;
    line += ' ';
    line += format_value(point.value);
    line += ' ';
    line += std::to_string(point.ts);
    line += '\n';
    return line;
}

inline MetricPoint parse_line(std::string_view text)
{
    if (!text.empty() && text.back() == '\n') {
        text.remove_suffix(1);
    }
    auto malformed = [&](const char* why) {
        return Error(ErrorCode::MalformedLine, std::string(why) + ": '" + std::string(text.substr(0, 80)) + "'");
    };

    std::string_view fields[3];
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
        const auto space = text.find(' ', start);
        const auto field = text.substr(start, space == std::string_view::npos ? std::string_view::npos : space - start);
        if (count == 3) {
            throw malformed("expected 3 fields");
        }
        fields[count++] = field;
        if (space == std::string_view::npos) {
            break;
        }
        start = space + 1;
    }
    if (count != 3) {
        throw malformed("expected 3 fields");
    }
    if (!valid_metric_path(fields[0])) {
        throw malformed("invalid path");
    }

    MetricPoint point;
    point.path = std::string(fields[0]);
    {
        const auto* first = fields[1].data();
        const auto* last = first + fields[1].size();
        auto [ptr, ec] = std::from_chars(first, last, point.value);
        if (fields[1].empty() || ec != std::errc{} || ptr != last || !std::isfinite(point.value)) {
            throw malformed("non-numeric value");
        }
    }
    {
        const auto* first = fields[2].data();
        const auto* last = first + fields[2].size();
        auto [ptr, ec] = std::from_chars(first, last, point.ts);
        if (fields[2].empty() || ec != std::errc{} || ptr != last) {
            throw malformed("non-numeric timestamp");
        }
    }
    return point;
}

/// Whisper-style store: per path, points on a fixed 5 s grid with bounded
/// retention. Writing to an occupied slot overwrites it.
class SeriesStore {
public:
    static constexpr std::int64_t kResolution = 5;
    static constexpr std::size_t kDefaultRetention = 17'280;

    struct Point {
        std::int64_t ts;
        double value;
        friend bool operator==(const Point&, const Point&) = default;
    };

    explicit SeriesStore(std::size_t retention = kDefaultRetention) : retention_(retention) {}

    SeriesStore(SeriesStore&& other) noexcept
        : retention_(other.retention_), series_(std::move(other.series_))
    {
    }

    void ingest(const MetricPoint& point)
    {
        if (!valid_metric_path(point.path) || !std::isfinite(point.value)) {
            throw Error(ErrorCode::MalformedLine, "invalid metric point for '" + point.path + "'");
        }
        const std::int64_t slot = point.ts - floor_mod(point.ts, kResolution);
        std::lock_guard lock(mutex_);
        auto& points = series_[point.path];
        if (points.empty() || slot > points.back().ts) {
            points.push_back({slot, point.value});
            if (points.size() > retention_) {
                points.pop_front();
            }
            return;
        }
        auto it = std::lower_bound(points.begin(), points.end(), slot,
                                   [](const Point& p, std::int64_t ts) { return p.ts < ts; });
        if (it != points.end() && it->ts == slot) {
            it->value = point.value;
        } else if (points.size() < retention_ || it != points.begin()) {
            points.insert(it, {slot, point.value});
            if (points.size() > retention_) {
                points.pop_front();
            }
        }
    }

    [[nodiscard]] bool contains(std::string_view path) const
    {
        std::lock_guard lock(mutex_);
        return series_.find(std::string(path)) != series_.end();
    }

    [[nodiscard]] std::vector<Point> points(std::string_view path) const
    {
        std::lock_guard lock(mutex_);
        auto it = series_.find(std::string(path));
        if (it == series_.end()) {
            throw Error(ErrorCode::UnknownSeries, std::string(path));
        }
        return {it->second.begin(), it->second.end()};
    }

    [[nodiscard]] std::vector<std::string> paths() const
    {
        std::lock_guard lock(mutex_);
        std::vector<std::string> out;
        out.reserve(series_.size());
        for (const auto& [path, _] : series_) {
            out.push_back(path);
        }
        return out;
    }

private:
    static std::int64_t floor_mod(std::int64_t a, std::int64_t b)
    {
        const auto r = a % b;
        return r < 0 ? r + b : r;
    }

    std::size_t retention_;
    mutable std::mutex mutex_;
    std::map<std::string, std::deque<Point>, std::less<>> series_;
};

/// Two-column, tab-separated export of one series over [t0, t1]; Time is
/// seconds relative to t0.
inline std::string export_tsv(const SeriesStore& store, std::string_view path, std::int64_t t0, std::int64_t t1)
{
    std::string doc = "Time\tValue\n";
    for (const auto& p : store.points(path)) {
        if (p.ts < t0 || p.ts > t1) {
            continue;
        }
        doc += std::to_string(p.ts - t0);
        doc += '\t';
        doc += format_value(p.value);
        doc += '\n';
    }
    return doc;
}

/// Reassembles newline-delimited Graphite lines from arbitrary chunks and
/// stores the valid ones. Malformed lines are dropped and counted.
class CarbonIngest {
public:
    static constexpr std::size_t kMaxLineBytes = 4096;

    explicit CarbonIngest(SeriesStore& store) : store_(&store) {}

    void feed(std::string_view chunk)
    {
        for (char c : chunk) {
            if (c == '\n') {
                finish_line();
                continue;
            }
            if (pending_.size() >= kMaxLineBytes) {
                overlong_ = true;
                continue;
            }
            pending_ += c;
        }
    }

    /// Treat a trailing partial line at connection close as malformed.
    void close()
    {
        if (!pending_.empty() || overlong_) {
            ++malformed_;
        }
        pending_.clear();
        overlong_ = false;
    }

    [[nodiscard]] std::uint64_t accepted() const noexcept { return accepted_; }
    [[nodiscard]] std::uint64_t malformed() const noexcept { return malformed_; }

private:
    void finish_line()
    {
        if (overlong_) {
            ++malformed_;
        } else {
            try {
                store_->ingest(parse_line(pending_));
                ++accepted_;
            } catch (const Error&) {
                ++malformed_;
            }
        }
        pending_.clear();
        overlong_ = false;
    }

    SeriesStore* store_;
    std::string pending_;
    bool overlong_ = false;
    std::uint64_t accepted_ = 0;
    std::uint64_t malformed_ = 0;
};

namespace metric_path {

inline constexpr std::string_view kMessagesInRate = "kafka.server.BrokerTopicMetrics.MessagesInPerSec.OneMinuteRate";
inline constexpr std::string_view kBytesInRate = "kafka.server.BrokerTopicMetrics.BytesInPerSec.OneMinuteRate";
inline constexpr std::string_view kMessagesInCount = "kafka.server.BrokerTopicMetrics.MessagesInPerSec.Count";
inline constexpr std::string_view kBytesInCount = "kafka.server.BrokerTopicMetrics.BytesInPerSec.Count";

inline std::string load(std::string_view host)
{
    return "collectd." + std::string(host) + ".load.load.shortterm";
}

inline std::string packets_rx(std::string_view host, std::string_view iface)
{
    return "collectd." + std::string(host) + ".interface-" + std::string(iface) + ".if_packets.rx";
}

inline std::string octets_rx(std::string_view host, std::string_view iface)
{
    return "collectd." + std::string(host) + ".interface-" + std::string(iface) + ".if_octets.rx";
}

} // namespace metric_path

} // namespace ingestbench
