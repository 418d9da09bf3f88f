#pragma once

// Shared domain types for the ingestion benchmark: records, topic and
// producer configuration, the hardware resource profile and the clock.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace ingestbench {

/// Simulation timestamps: integer nanoseconds since run start.
using Nanos = std::int64_t;

inline constexpr Nanos kNanosPerSecond = 1'000'000'000;

enum class ErrorCode {
    InvalidRecord,
    TopicExists,
    InvalidReplication,
    InvalidOffset,
    NotEnoughReplicas,
    ProducerClosed,
    InvalidDelay,
    SourceError,
    InvalidMark,
    MalformedLine,
    UnknownSeries,
    UnknownKey,
    MissingSection,
    TypeMismatch,
    InsufficientData,
    IoError,
};

inline constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::TopicExists: return "TopicExists";
    case ErrorCode::InvalidReplication: return "InvalidReplication";
    case ErrorCode::InvalidOffset: return "InvalidOffset";
    case ErrorCode::NotEnoughReplicas: return "NotEnoughReplicas";
    case ErrorCode::ProducerClosed: return "ProducerClosed";
    case ErrorCode::InvalidDelay: return "InvalidDelay";
    case ErrorCode::SourceError: return "SourceError";
    case ErrorCode::InvalidMark: return "InvalidMark";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::UnknownSeries: return "UnknownSeries";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

    /// Configuration problems map to CLI exit code 2, everything else to 3.
    [[nodiscard]] bool is_config_error() const noexcept
    {
        return code_ == ErrorCode::UnknownKey || code_ == ErrorCode::MissingSection ||
               code_ == ErrorCode::TypeMismatch;
    }

private:
    ErrorCode code_;
};

/// Record size is raw key bytes plus raw payload bytes. Framing overhead is
/// accounted for at the network layer, not here.
inline std::uint64_t serialized_size(const std::optional<std::string>& key, std::string_view payload)
{
    if (payload.empty()) {
        throw Error(ErrorCode::InvalidRecord, "payload must not be empty");
    }
    return (key ? key->size() : 0) + payload.size();
}

/// One message. Immutable after construction.
class Record {
public:
    Record(std::optional<std::string> key, std::string payload, Nanos create_ts)
        : size_bytes_(serialized_size(key, payload)), key_(std::move(key)), payload_(std::move(payload)),
          create_ts_(create_ts)
    {
    }

    [[nodiscard]] const std::optional<std::string>& key() const noexcept { return key_; }
    [[nodiscard]] const std::string& payload() const noexcept { return payload_; }
    [[nodiscard]] Nanos create_ts() const noexcept { return create_ts_; }
    [[nodiscard]] std::uint64_t size_bytes() const noexcept { return size_bytes_; }

    friend bool operator==(const Record&, const Record&) = default;

private:
    std::uint64_t size_bytes_;
    std::optional<std::string> key_;
    std::string payload_;
    Nanos create_ts_;
};

enum class TimestampType { CreateTime, LogAppendTime };

struct TopicConfig {
    std::string name = "ingest";
    int partitions = 1;
    int replication_factor = 1;
    TimestampType timestamp_type = TimestampType::CreateTime;

    friend bool operator==(const TopicConfig&, const TopicConfig&) = default;
};

enum class Acks { Acks0, Acks1, AcksAll };

inline constexpr std::string_view to_string(Acks acks) noexcept
{
    switch (acks) {
    case Acks::Acks0: return "0";
    case Acks::Acks1: return "1";
    case Acks::AcksAll: return "all";
    }
    return "?";
}

/// Producer properties. Defaults are the stock Kafka producer values the
/// benchmark used; max_in_flight mirrors max.in.flight.requests.per.connection.
struct ProducerProps {
    std::uint64_t batch_size_bytes = 16'384;
    std::uint64_t buffer_memory_bytes = 33'554'432;
    Acks acks = Acks::Acks0;
    int min_insync_replicas = 1;
    int max_in_flight = 3;

    friend bool operator==(const ProducerProps&, const ProducerProps&) = default;
};

/// Calibrated hardware model of one broker node. Bandwidths in bytes/s.
///
/// The "paper-hw" defaults come from the measured node characteristics
/// (70 MB/s dd write, 117.5 MB/s between nodes, 908 MB/s loopback, 8 cores).
/// effective_disk_bw is the broker's observed sustained append rate, which
/// exceeds the raw dd figure. read_latency_ns, cpu_cost_per_msg_ns and the
/// contention dwell times are calibrated, not measured.
struct ResourceProfile {
    double disk_write_bw = 70.0e6;
    double effective_disk_bw = 92.0e6;
    double nic_bw = 117.5e6;
    double loopback_bw = 908.0e6;
    int cores = 8;
    double cpu_cost_per_msg_ns = 6'000.0;
    std::uint64_t mtu_bytes = 1'500;
    Nanos replication_delay_ns = 200'000;
    Nanos read_latency_ns = 4'500;
    std::uint64_t io_unit_bytes = 16'384;
    double background_eth0_pps = 40.0;
    std::uint64_t background_packet_bytes = 120;
    double contention_run_mean_s = 30.0;
    double contention_stall_mean_s = 30.0;
    std::uint64_t record_size_target = 215;

    friend bool operator==(const ResourceProfile&, const ResourceProfile&) = default;

    void validate() const
    {
        if (!(disk_write_bw > 0 && effective_disk_bw > 0 && nic_bw > 0 && loopback_bw > 0)) {
            throw Error(ErrorCode::TypeMismatch, "resource bandwidths must be positive");
        }
        if (cores < 1 || mtu_bytes < 1 || io_unit_bytes < 1 || record_size_target < 143) {
            throw Error(ErrorCode::TypeMismatch, "cores, mtu, io_unit must be >= 1 and record_size_target >= 143");
        }
        if (cpu_cost_per_msg_ns < 0 || replication_delay_ns < 0 || read_latency_ns < 0 ||
            background_eth0_pps < 0 || !(contention_run_mean_s > 0) || !(contention_stall_mean_s > 0)) {
            throw Error(ErrorCode::TypeMismatch, "resource costs must be non-negative, dwell times positive");
        }
    }
};

inline ResourceProfile paper_hw_profile() { return ResourceProfile{}; }

enum class ClockMode { VirtualTime, RealTime };

/// Monotonic simulation clock. Exactly one driver advances it.
class Clock {
public:
    explicit Clock(ClockMode mode = ClockMode::VirtualTime) : mode_(mode) {}

    [[nodiscard]] Nanos now() const noexcept { return now_; }
    [[nodiscard]] ClockMode mode() const noexcept { return mode_; }

    void advance_to(Nanos t)
    {
        if (t < now_) {
            throw std::logic_error("clock moved backwards");
        }
        now_ = t;
    }

private:
    Nanos now_ = 0;
    ClockMode mode_;
};

} // namespace ingestbench
