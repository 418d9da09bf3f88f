#pragma once

// The data sender: a fixed-delay send schedule driving one producer.
//
// Slots are t_k = start + k * delay. A send takes read latency (iterator
// mode) before the record reaches the producer. When the sender is free
// again after one or more slots have passed, it runs the latest of them
// right away and drops the others; blocked time is never made up.

#include "ingestbench/cluster.hpp"
#include "ingestbench/core.hpp"
#include "ingestbench/producer.hpp"
#include "ingestbench/sim.hpp"
#include "ingestbench/source.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace ingestbench {

enum class Locality { Local, Remote };

inline std::string_view to_string(Locality l) noexcept { return l == Locality::Local ? "local" : "remote"; }

inline double rate_from_delay(Nanos delay_ns)
{
    if (delay_ns <= 0) {
        throw Error(ErrorCode::InvalidDelay, "delay must be >= 1 ns, got " + std::to_string(delay_ns));
    }
    return 1e9 / static_cast<double>(delay_ns);
}

/// Inverse of rate_from_delay; exact when the rate divides 10^9.
inline Nanos delay_for_rate(double mps)
{
    if (!(mps > 0) || !std::isfinite(mps)) {
        throw Error(ErrorCode::InvalidDelay, "rate must be positive");
    }
    const auto delay = static_cast<Nanos>(std::llround(1e9 / mps));
    if (delay < 1) {
        throw Error(ErrorCode::InvalidDelay, "rate above 1e9 messages/s");
    }
    return delay;
}

struct SenderSpec {
    Nanos delay_ns = 10'000;
    std::int64_t duration_s = 600;
    bool read_in_ram = true;
    Locality locality = Locality::Local;
    std::string host; // remote placement; empty picks a dedicated client host
    ProducerProps producer;
    DataSourceSpec source;
    std::optional<Nanos> read_latency_ns; // unset: the resource profile's value

    [[nodiscard]] double configured_rate() const { return rate_from_delay(delay_ns); }

    friend bool operator==(const SenderSpec&, const SenderSpec&) = default;
};

struct SenderStats {
    std::uint64_t attempted = 0;
    std::uint64_t sent = 0;
    std::uint64_t dropped = 0;
    Nanos blocked_time_ns = 0;
};

class Sender {
public:
    Sender(Simulation& sim, Cluster& cluster, TopicHandle topic, SenderSpec spec, std::uint32_t index,
           std::shared_ptr<const RecordSource> source = nullptr)
        : sim_(&sim), cluster_(&cluster), spec_(std::move(spec)), index_(index), lane_(Lane::sender(index))
    {
        rate_from_delay(spec_.delay_ns);
        if (spec_.duration_s < 0) {
            throw Error(ErrorCode::TypeMismatch, "duration_s must be >= 0");
        }
        source_ = source ? std::move(source) : open_source(spec_.source, spec_.read_in_ram);
        latency_ = spec_.read_in_ram ? 0 : spec_.read_latency_ns.value_or(cluster.profile().read_latency_ns);
        if (latency_ < 0) {
            throw Error(ErrorCode::TypeMismatch, "read_latency_ns must be >= 0");
        }
        if (spec_.locality == Locality::Local) {
            host_ = cluster.leader_host(topic, 0);
        } else {
            host_ = cluster.host(spec_.host.empty() ? "client" + std::to_string(index + 1) : spec_.host);
        }
        producer_ = std::make_unique<Producer>(sim, cluster, topic, spec_.producer, host_, lane_);
    }

    Sender(const Sender&) = delete;
    Sender& operator=(const Sender&) = delete;

    /// Schedules the first slot at `start`; on_done fires once the producer has drained.
    void start(Nanos start, std::function<void()> on_done = {})
    {
        start_ = start;
        end_ = start + spec_.duration_s * kNanosPerSecond;
        cursor_ = start;
        on_done_ = std::move(on_done);
        sim_->schedule(start, lane_, [this] {
            cluster_->sender_started(host_);
            running_ = true;
            resume();
        });
    }

    [[nodiscard]] const SenderStats& stats() const noexcept { return stats_; }
    [[nodiscard]] const SenderSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] HostId host() const noexcept { return host_; }
    [[nodiscard]] const Producer& producer() const noexcept { return *producer_; }
    [[nodiscard]] Producer& producer() noexcept { return *producer_; }
    [[nodiscard]] bool finished() const noexcept { return finished_; }
    [[nodiscard]] Nanos per_record_latency() const noexcept { return latency_; }
    [[nodiscard]] std::uint32_t index() const noexcept { return index_; }

private:
    [[nodiscard]] bool can_run_inline(Nanos t) const noexcept
    {
        const Nanos next = sim_->next_event_time();
        return t < next || (t == next && sim_->next_event_lane() > lane_);
    }

    // Invoked from an event at sim time == cursor_.
    void resume()
    {
        cursor_ = sim_->now();
        while (true) {
            const Nanos slot_t = start_ + static_cast<Nanos>(next_slot_) * spec_.delay_ns;
            if (slot_t >= end_) {
                sim_->schedule(cursor_, lane_, [this] { stop(); });
                return;
            }
            Nanos run_t = slot_t;
            std::uint64_t slot = next_slot_;
            if (slot_t < cursor_) {
                const auto last = static_cast<std::uint64_t>((end_ - start_ - 1) / spec_.delay_ns);
                slot = std::min(static_cast<std::uint64_t>((cursor_ - start_) / spec_.delay_ns), last);
                run_t = cursor_;
            }
            stats_.attempted += slot - next_slot_ + 1;
            stats_.dropped += slot - next_slot_;
            next_slot_ = slot + 1;

            const Nanos op_t = run_t + latency_;
            cursor_ = op_t;
            if (!can_run_inline(op_t)) {
                sim_->schedule(op_t, lane_, [this] {
                    cursor_ = sim_->now();
                    if (send_next()) {
                        resume();
                    }
                });
                return;
            }
            if (!send_next()) {
                return;
            }
        }
    }

    // Hands the next record to the producer at cursor_. False when the
    // sender yielded (batch sealed) or blocked.
    bool send_next()
    {
        const auto index = next_index_++;
        const auto size = source_->size_at(index);
        switch (producer_->offer(source_, index, size, cursor_)) {
        case OfferResult::Accepted:
            sent_one();
            return true;
        case OfferResult::Sealed:
            sent_one();
            sim_->schedule(cursor_, lane_, [this] { resume(); });
            return false;
        case OfferResult::NoSpace:
            block(index, size);
            return false;
        }
        return false;
    }

    void sent_one()
    {
        ++stats_.sent;
        cluster_->count_sends(host_, 1);
    }

    void block(std::uint64_t index, std::uint64_t size)
    {
        blocked_since_ = cursor_;
        producer_->wait_for_space(size, [this, index, size] {
            cursor_ = sim_->now();
            stats_.blocked_time_ns += cursor_ - blocked_since_;
            const auto result = producer_->offer(source_, index, size, cursor_);
            if (result == OfferResult::NoSpace) {
                block(index, size);
                return;
            }
            sent_one();
            if (result == OfferResult::Sealed) {
                sim_->schedule(cursor_, lane_, [this] { resume(); });
            } else {
                resume();
            }
        });
    }

    void stop()
    {
        if (!running_) {
            return;
        }
        running_ = false;
        cluster_->sender_stopped(host_);
        producer_->close();
        producer_->on_drained([this] {
            finished_ = true;
            if (on_done_) {
                on_done_();
            }
        });
    }

    Simulation* sim_;
    Cluster* cluster_;
    SenderSpec spec_;
    std::uint32_t index_;
    std::uint32_t lane_;
    std::shared_ptr<const RecordSource> source_;
    Nanos latency_ = 0;
    HostId host_ = 0;
    std::unique_ptr<Producer> producer_;

    Nanos start_ = 0;
    Nanos end_ = 0;
    Nanos cursor_ = 0;
    std::uint64_t next_slot_ = 0;
    std::uint64_t next_index_ = 0;
    Nanos blocked_since_ = 0;
    bool running_ = false;
    bool finished_ = false;
    SenderStats stats_;
    std::function<void()> on_done_;
};

/// Runs one sender from t = now until its producer has drained.
inline SenderStats run_sender(Simulation& sim, Cluster& cluster, TopicHandle topic, const SenderSpec& spec,
                              std::uint32_t index = 0)
{
    Sender sender(sim, cluster, topic, spec, index);
    sender.start(sim.now());
    while (!sender.finished() && sim.step()) {
    }
    return sender.stats();
}

} // namespace ingestbench
