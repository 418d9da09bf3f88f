#pragma once

// Discrete-event model of a Kafka-like broker cluster and its hosts.
//
// Each host has a loopback link, an uplink and an eth0 receive link, all
// FIFO at fixed bandwidth. Brokers additionally own a single FIFO disk
// queue; one produce request is one disk job served at
// effective_disk_bw. Metrics are sampled on a 5 s grid: broker meters,
// per-interface packet/octet rates and the one-minute system load.
//
// Load accounting: every active sender contributes one runnable task plus
// cpu_cost_per_msg * send rate core-equivalents to its host; every queued
// disk write request (a job split into io_unit pieces) contributes one
// task waiting for I/O.
//
// Contention: while a broker's load exceeds its core count, a seeded
// two-state telegraph switches its appender between full bandwidth and
// cores / load of it.

#include "ingestbench/batch.hpp"
#include "ingestbench/core.hpp"
#include "ingestbench/log.hpp"
#include "ingestbench/metrics.hpp"
#include "ingestbench/sim.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ingestbench {

using HostId = std::uint32_t;

struct InterfaceCounters {
    std::uint64_t bytes_rx = 0;
    std::uint64_t packets_rx = 0;
};

struct ReplicaSet {
    int leader = 1;
    std::vector<int> followers;
    std::vector<int> in_sync;
};

/// Receives completion notifications for produce requests.
class RequestListener {
public:
    virtual ~RequestListener() = default;
    virtual void on_leader_done(BatchState& state) = 0;
    virtual void on_all_done(BatchState& state) = 0;
};

/// FIFO link at fixed bandwidth.
class Link {
public:
    explicit Link(double bytes_per_second = 1.0) : bw_(bytes_per_second) {}

    /// Queues `bytes` at `now`; returns when the last byte has arrived.
    Nanos transmit(Nanos now, std::uint64_t bytes)
    {
        const Nanos start = std::max(now, free_at_);
        free_at_ = start + transfer_time(bytes, bw_);
        return free_at_;
    }

    [[nodiscard]] Nanos free_at() const noexcept { return free_at_; }

    static Nanos transfer_time(std::uint64_t bytes, double bw)
    {
        return static_cast<Nanos>(std::ceil(static_cast<double>(bytes) * 1e9 / bw));
    }

private:
    double bw_;
    Nanos free_at_ = 0;
};

class Cluster {
public:
    Cluster(Simulation& sim, ResourceProfile profile, int brokers = 3, std::uint64_t seed = 1)
        : sim_(&sim), profile_(profile), brokers_(brokers), rng_(seed ^ 0x9e3779b97f4a7c15ULL)
    {
        profile_.validate();
        if (brokers < 1) {
            throw Error(ErrorCode::TypeMismatch, "cluster needs at least one broker");
        }
        for (int b = 1; b <= brokers; ++b) {
            add_host("broker" + std::to_string(b), b);
        }
    }

    Cluster(const Cluster&) = delete;
    Cluster& operator=(const Cluster&) = delete;

    [[nodiscard]] int broker_count() const noexcept { return brokers_; }
    [[nodiscard]] const ResourceProfile& profile() const noexcept { return profile_; }
    [[nodiscard]] Simulation& simulation() const noexcept { return *sim_; }

    [[nodiscard]] HostId broker_host(int broker_id) const
    {
        if (broker_id < 1 || broker_id > brokers_) {
            throw std::out_of_range("no broker " + std::to_string(broker_id));
        }
        return static_cast<HostId>(broker_id - 1);
    }

    /// Finds a host by name, creating an external (non-broker) host on first use.
    HostId host(std::string_view name)
    {
        for (HostId h = 0; h < hosts_.size(); ++h) {
            if (hosts_[h]->name == name) {
                return h;
            }
        }
        return add_host(std::string(name), 0);
    }

    [[nodiscard]] const std::string& host_name(HostId h) const { return hosts_.at(h)->name; }
    [[nodiscard]] std::size_t host_count() const noexcept { return hosts_.size(); }

    TopicHandle create_topic(const TopicConfig& config)
    {
        for (const auto& t : topics_) {
            if (t.config.name == config.name) {
                throw Error(ErrorCode::TopicExists, config.name);
            }
        }
        if (config.partitions < 1) {
            throw Error(ErrorCode::TypeMismatch, "partitions must be >= 1");
        }
        if (config.replication_factor < 1 || config.replication_factor > brokers_) {
            throw Error(ErrorCode::InvalidReplication, "replication factor " +
                                                           std::to_string(config.replication_factor) + " with " +
                                                           std::to_string(brokers_) + " brokers");
        }
        Topic topic;
        topic.config = config;
        for (int p = 0; p < config.partitions; ++p) {
            Partition part;
            part.replicas.leader = (p % brokers_) + 1;
            part.replicas.in_sync.push_back(part.replicas.leader);
            for (int r = 1; r < config.replication_factor; ++r) {
                const int follower = ((p + r) % brokers_) + 1;
                part.replicas.followers.push_back(follower);
                part.replicas.in_sync.push_back(follower);
            }
            for (int r = 0; r < config.replication_factor; ++r) {
                part.logs.push_back(std::make_unique<PartitionLog>(config.name, p, config.timestamp_type));
            }
            topic.partitions.push_back(std::move(part));
        }
        topics_.push_back(std::move(topic));
        return TopicHandle{static_cast<std::uint32_t>(topics_.size() - 1)};
    }

    [[nodiscard]] const TopicConfig& topic_config(TopicHandle t) const { return topics_.at(t.id).config; }
    [[nodiscard]] std::size_t topic_count() const noexcept { return topics_.size(); }

    [[nodiscard]] const ReplicaSet& replicas(TopicHandle t, int partition) const
    {
        return topics_.at(t.id).partitions.at(static_cast<std::size_t>(partition)).replicas;
    }

    /// Leader replica's log.
    [[nodiscard]] PartitionLog& log(TopicHandle t, int partition)
    {
        return *topics_.at(t.id).partitions.at(static_cast<std::size_t>(partition)).logs.front();
    }

    [[nodiscard]] const PartitionLog& replica_log(TopicHandle t, int partition, int broker_id) const
    {
        const auto& part = topics_.at(t.id).partitions.at(static_cast<std::size_t>(partition));
        if (broker_id == part.replicas.leader) {
            return *part.logs.front();
        }
        for (std::size_t i = 0; i < part.replicas.followers.size(); ++i) {
            if (part.replicas.followers[i] == broker_id) {
                return *part.logs[i + 1];
            }
        }
        throw std::out_of_range("broker " + std::to_string(broker_id) + " holds no replica");
    }

    [[nodiscard]] HostId leader_host(TopicHandle t, int partition) const
    {
        return broker_host(replicas(t, partition).leader);
    }

    /// Moves `bytes` from one host to another and calls on_arrival once the
    /// last byte is in. Same host: loopback. Otherwise: the sender's uplink,
    /// then the receiver's eth0, both FIFO; concurrent remote traffic to a
    /// broker shares its eth0.
    void deliver(std::uint64_t bytes, HostId from, HostId to, std::function<void()> on_arrival)
    {
        if (bytes == 0) {
            throw std::invalid_argument("deliver needs at least one byte");
        }
        if (from == to) {
            auto& h = *hosts_.at(to);
            const Nanos done = h.loopback.transmit(sim_->now(), bytes);
            sim_->schedule(done, [this, to, bytes, cb = std::move(on_arrival)] {
                count_rx(*hosts_[to], Iface::Loopback, bytes);
                cb();
            });
            return;
        }
        const Nanos up = hosts_.at(from)->uplink.transmit(sim_->now(), bytes);
        sim_->schedule(up, [this, to, bytes, cb = std::move(on_arrival)]() mutable {
            const Nanos done = hosts_[to]->eth0_rx.transmit(sim_->now(), bytes);
            sim_->schedule(done, [this, to, bytes, cb = std::move(cb)] {
                count_rx(*hosts_[to], Iface::Eth0, bytes);
                cb();
            });
        });
    }

    [[nodiscard]] std::uint64_t packets_for(std::uint64_t bytes) const noexcept
    {
        return (bytes + profile_.mtu_bytes - 1) / profile_.mtu_bytes;
    }

    /// Sends a dispatched batch from `from` to the partition leader. The
    /// listener hears about the leader write and full replication.
    void produce(std::shared_ptr<BatchState> state, HostId from, RequestListener* listener)
    {
        const auto& target = state->batch.target();
        const HostId leader = leader_host(target.topic, target.partition);
        const auto bytes = state->batch.bytes();
        deliver(bytes, from, leader, [this, leader, state = std::move(state), listener]() mutable {
            disk_arrive(leader, DiskJob{std::move(state), listener, 0, 0});
        });
    }

    void sender_started(HostId h) { ++hosts_.at(h)->active_senders; }
    void sender_stopped(HostId h) { --hosts_.at(h)->active_senders; }
    void count_sends(HostId h, std::uint64_t n) noexcept { hosts_[h]->sends_in_window += n; }

    /// Samples every metric at t = 0 and then every 5 s for as long as
    /// keep_ticking(now) holds. Points go to `store` (may be null) and to the
    /// optional sink.
    void start_metrics(SeriesStore* store, std::int64_t epoch_base, std::function<bool(Nanos)> keep_ticking,
                       std::function<void(const MetricPoint&)> sink = {})
    {
        store_ = store;
        epoch_base_ = epoch_base;
        keep_ticking_ = std::move(keep_ticking);
        sink_ = std::move(sink);
        sim_->schedule(sim_->now(), Lane::kTick, [this] { tick_and_reschedule(); });
    }

    /// One metrics sample at the current time.
    void tick()
    {
        const double window_s = kMeterTickSeconds;
        const std::int64_t ts = epoch_base_ + sim_->now() / kNanosPerSecond;

        for (auto& hp : hosts_) {
            auto& h = *hp;
            background_traffic(h, window_s);

            const double cpu = profile_.cpu_cost_per_msg_ns * static_cast<double>(h.sends_in_window) / window_s / 1e9;
            h.sends_in_window = 0;
            h.runnable = static_cast<double>(h.active_senders) + cpu;
            const double demand = h.runnable + static_cast<double>(h.io_units_queued);
            const double load = h.load.sample(demand);
            if (h.broker_id > 0) {
                update_contention(h, load);
            }

            emit(metric_path::load(h.name), load, ts);
            emit(metric_path::packets_rx(h.name, "eth0"), h.eth0_packets.tick(), ts);
            emit(metric_path::octets_rx(h.name, "eth0"), h.eth0_octets.tick(), ts);
            emit(metric_path::packets_rx(h.name, "lo"), h.lo_packets.tick(), ts);
            emit(metric_path::octets_rx(h.name, "lo"), h.lo_octets.tick(), ts);
        }
        emit(metric_path::kMessagesInRate, messages_in_meter_.tick(), ts);
        emit(metric_path::kBytesInRate, bytes_in_meter_.tick(), ts);
        emit(metric_path::kMessagesInCount, static_cast<double>(messages_in_.value()), ts);
        emit(metric_path::kBytesInCount, static_cast<double>(bytes_in_.value()), ts);
    }

    [[nodiscard]] std::uint64_t messages_in() const noexcept { return messages_in_.value(); }
    [[nodiscard]] std::uint64_t bytes_in() const noexcept { return bytes_in_.value(); }
    [[nodiscard]] const RateMeter& messages_in_meter() const noexcept { return messages_in_meter_; }
    [[nodiscard]] const RateMeter& bytes_in_meter() const noexcept { return bytes_in_meter_; }

    [[nodiscard]] InterfaceCounters eth0(HostId h) const { return hosts_.at(h)->eth0; }
    [[nodiscard]] InterfaceCounters loopback(HostId h) const { return hosts_.at(h)->lo; }
    [[nodiscard]] double load(HostId h) const { return hosts_.at(h)->load.value(); }
    [[nodiscard]] double runnable_tasks(HostId h) const { return hosts_.at(h)->runnable; }
    [[nodiscard]] std::uint64_t io_waiting_tasks(HostId h) const { return hosts_.at(h)->io_units_queued; }
    [[nodiscard]] std::size_t disk_queue_depth(HostId h) const { return hosts_.at(h)->disk.size(); }
    [[nodiscard]] double appender_share(HostId h) const { return hosts_.at(h)->share; }
    [[nodiscard]] bool is_broker(HostId h) const { return hosts_.at(h)->broker_id > 0; }

    /// Time at which the eth0 receive link drains its queue.
    [[nodiscard]] Nanos eth0_free_at(HostId h) const { return hosts_.at(h)->eth0_rx.free_at(); }

private:
    enum class Iface { Eth0, Loopback };

    struct DiskJob {
        std::shared_ptr<BatchState> state;
        RequestListener* listener;
        int replica; // 0 = leader, otherwise follower broker id
        std::uint64_t io_units;
    };

    struct Host {
        std::string name;
        int broker_id = 0;
        Link loopback;
        Link uplink;
        Link eth0_rx;
        InterfaceCounters eth0;
        InterfaceCounters lo;
        RateMeter eth0_packets;
        RateMeter eth0_octets;
        RateMeter lo_packets;
        RateMeter lo_octets;
        LoadAverage load;
        double runnable = 0.0;
        int active_senders = 0;
        std::uint64_t sends_in_window = 0;
        double background_carry = 0.0;
        std::deque<DiskJob> disk;
        bool disk_busy = false;
        std::uint64_t io_units_queued = 0;
        bool stalled = false;
        double share = 1.0;
    };

    struct Partition {
        ReplicaSet replicas;
        std::vector<std::unique_ptr<PartitionLog>> logs; // [0] leader, then followers in order
    };

    struct Topic {
        TopicConfig config;
        std::vector<Partition> partitions;
    };

    HostId add_host(std::string name, int broker_id)
    {
        auto h = std::make_unique<Host>();
        h->name = std::move(name);
        h->broker_id = broker_id;
        h->loopback = Link(profile_.loopback_bw);
        h->uplink = Link(profile_.nic_bw);
        h->eth0_rx = Link(profile_.nic_bw);
        hosts_.push_back(std::move(h));
        return static_cast<HostId>(hosts_.size() - 1);
    }

    void count_rx(Host& h, Iface iface, std::uint64_t bytes)
    {
        const auto packets = packets_for(bytes);
        if (iface == Iface::Eth0) {
            h.eth0.bytes_rx += bytes;
            h.eth0.packets_rx += packets;
            h.eth0_octets.mark(static_cast<std::int64_t>(bytes));
            h.eth0_packets.mark(static_cast<std::int64_t>(packets));
        } else {
            h.lo.bytes_rx += bytes;
            h.lo.packets_rx += packets;
            h.lo_octets.mark(static_cast<std::int64_t>(bytes));
            h.lo_packets.mark(static_cast<std::int64_t>(packets));
        }
    }

    void background_traffic(Host& h, double window_s)
    {
        h.background_carry += profile_.background_eth0_pps * window_s;
        const auto packets = static_cast<std::uint64_t>(h.background_carry);
        h.background_carry -= static_cast<double>(packets);
        if (packets == 0) {
            return;
        }
        const auto bytes = packets * profile_.background_packet_bytes;
        h.eth0.packets_rx += packets;
        h.eth0.bytes_rx += bytes;
        h.eth0_packets.mark(static_cast<std::int64_t>(packets));
        if (bytes > 0) {
            h.eth0_octets.mark(static_cast<std::int64_t>(bytes));
        }
    }

    void update_contention(Host& h, double load)
    {
        const double cores = profile_.cores;
        if (load <= cores) {
            h.stalled = false;
            h.share = 1.0;
            return;
        }
        const double p_stall = 1.0 - std::exp(-kMeterTickSeconds / profile_.contention_run_mean_s);
        const double p_recover = 1.0 - std::exp(-kMeterTickSeconds / profile_.contention_stall_mean_s);
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        if (h.stalled) {
            h.stalled = !(u < p_recover);
        } else {
            h.stalled = u < p_stall;
        }
        h.share = h.stalled ? cores / load : 1.0;
    }

    void emit(std::string_view path, double value, std::int64_t ts)
    {
        if (!store_ && !sink_) {
            return;
        }
        MetricPoint point{std::string(path), value, ts};
        if (store_) {
            store_->ingest(point);
        }
        if (sink_) {
            sink_(point);
        }
    }

    void tick_and_reschedule()
    {
        tick();
        if (keep_ticking_ && keep_ticking_(sim_->now())) {
            sim_->schedule(sim_->now() + kMeterTickNanos, Lane::kTick, [this] { tick_and_reschedule(); });
        }
    }

    void disk_arrive(HostId h, DiskJob job)
    {
        auto& host = *hosts_[h];
        job.io_units = (job.state->batch.bytes() + profile_.io_unit_bytes - 1) / profile_.io_unit_bytes;
        host.io_units_queued += job.io_units;
        host.disk.push_back(std::move(job));
        if (!host.disk_busy) {
            disk_start(h);
        }
    }

    void disk_start(HostId h)
    {
        auto& host = *hosts_[h];
        host.disk_busy = true;
        const auto bytes = host.disk.front().state->batch.bytes();
        const Nanos service = Link::transfer_time(bytes, profile_.effective_disk_bw * host.share);
        sim_->schedule(sim_->now() + service, [this, h] { disk_complete(h); });
    }

    void disk_complete(HostId h)
    {
        auto& host = *hosts_[h];
        DiskJob job = std::move(host.disk.front());
        host.disk.pop_front();
        host.io_units_queued -= job.io_units;
        host.disk_busy = false;
        if (!host.disk.empty()) {
            disk_start(h);
        }
        if (job.replica == 0) {
            leader_written(std::move(job));
        } else {
            follower_written(std::move(job));
        }
    }

    void append_to(PartitionLog& log, const Batch& batch)
    {
        if (batch.source_backed()) {
            log.append_span(batch.span(), batch.create_ts_runs(), batch.bytes(), sim_->now());
        } else {
            log.append_records(batch.explicit_records(), sim_->now());
        }
    }

    void leader_written(DiskJob job)
    {
        auto& state = *job.state;
        const auto& batch = state.batch;
        const auto& target = batch.target();
        auto& part = topics_[target.topic.id].partitions[static_cast<std::size_t>(target.partition)];
        auto& log = *part.logs.front();
        state.base_offset = log.next_offset();
        append_to(log, batch);
        state.timeline.leader_done = sim_->now();

        messages_in_.add(batch.count());
        bytes_in_.add(batch.bytes());
        messages_in_meter_.mark(batch.count());
        bytes_in_meter_.mark(static_cast<std::int64_t>(batch.bytes()));

        state.followers_pending = static_cast<int>(part.replicas.followers.size());
        for (int follower : part.replicas.followers) {
            const HostId fh = broker_host(follower);
            sim_->schedule(sim_->now() + profile_.replication_delay_ns,
                           [this, fh, follower, job]() mutable {
                               count_rx(*hosts_[fh], Iface::Eth0, job.state->batch.bytes());
                               job.replica = follower;
                               disk_arrive(fh, std::move(job));
                           });
        }
        if (job.listener) {
            job.listener->on_leader_done(state);
        }
        if (state.followers_pending == 0) {
            state.all_done = true;
            if (job.listener) {
                job.listener->on_all_done(state);
            }
        }
    }

    void follower_written(DiskJob job)
    {
        auto& state = *job.state;
        const auto& target = state.batch.target();
        auto& part = topics_[target.topic.id].partitions[static_cast<std::size_t>(target.partition)];
        for (std::size_t i = 0; i < part.replicas.followers.size(); ++i) {
            if (part.replicas.followers[i] == job.replica) {
                append_to(*part.logs[i + 1], state.batch);
            }
        }
        state.timeline.follower_done.push_back(sim_->now());
        if (--state.followers_pending == 0) {
            state.all_done = true;
            if (job.listener) {
                job.listener->on_all_done(state);
            }
        }
    }

    Simulation* sim_;
    ResourceProfile profile_;
    int brokers_;
    std::mt19937_64 rng_;
    std::vector<std::unique_ptr<Host>> hosts_;
    std::vector<Topic> topics_;

    Counter messages_in_;
    Counter bytes_in_;
    RateMeter messages_in_meter_;
    RateMeter bytes_in_meter_;

    SeriesStore* store_ = nullptr;
    std::int64_t epoch_base_ = 0;
    std::function<bool(Nanos)> keep_ticking_;
    std::function<void(const MetricPoint&)> sink_;
};

} // namespace ingestbench
