#pragma once

// Client-side producer: per-partition open batches, a bounded buffer with
// blocking backpressure, and an in-flight request window.
//
// Buffer bytes are released when the batch meets its acks condition:
// acks=0 at dispatch, acks=1 at the leader write, acks=all once every
// replica has written. A dispatched request keeps its in-flight slot until
// the leader has appended it, whatever the acks level.

#include "ingestbench/batch.hpp"
#include "ingestbench/cluster.hpp"
#include "ingestbench/core.hpp"
#include "ingestbench/sim.hpp"
#include "ingestbench/source.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

namespace ingestbench {

enum class OfferResult { Accepted, Sealed, NoSpace };

class Producer final : private RequestListener {
public:
    Producer(Simulation& sim, Cluster& cluster, TopicHandle topic, ProducerProps props, HostId host,
             std::uint32_t lane = Lane::kSystem)
        : sim_(&sim), cluster_(&cluster), topic_(topic), props_(props), host_(host), lane_(lane),
          buffer_(props.buffer_memory_bytes)
    {
        if (props.batch_size_bytes < 1 || props.buffer_memory_bytes < 1 || props.min_insync_replicas < 1 ||
            props.max_in_flight < 1) {
            throw Error(ErrorCode::TypeMismatch, "producer sizes and limits must be >= 1");
        }
        const auto& config = cluster.topic_config(topic);
        partitions_ = config.partitions;
        in_sync_ = static_cast<int>(cluster.replicas(topic, 0).in_sync.size());
        if (props.acks == Acks::AcksAll && in_sync_ < props.min_insync_replicas) {
            throw Error(ErrorCode::NotEnoughReplicas, "topic '" + config.name + "' has " + std::to_string(in_sync_) +
                                                          " in-sync replicas, min.insync.replicas is " +
                                                          std::to_string(props.min_insync_replicas));
        }
        open_.resize(static_cast<std::size_t>(partitions_));
    }

    Producer(const Producer&) = delete;
    Producer& operator=(const Producer&) = delete;

    [[nodiscard]] const ProducerProps& props() const noexcept { return props_; }
    [[nodiscard]] const BufferAccount& buffer() const noexcept { return buffer_; }
    [[nodiscard]] HostId host() const noexcept { return host_; }
    [[nodiscard]] bool closed() const noexcept { return closed_; }
    [[nodiscard]] int in_flight() const noexcept { return in_flight_; }
    [[nodiscard]] std::size_t queued_batches() const noexcept { return ready_.size(); }
    [[nodiscard]] std::uint64_t records_accepted() const noexcept { return accepted_; }
    [[nodiscard]] std::uint64_t records_appended() const noexcept { return appended_; }
    [[nodiscard]] std::uint64_t batches_dispatched() const noexcept { return dispatched_; }

    /// True when nothing is buffered, queued or in flight.
    [[nodiscard]] bool drained() const noexcept
    {
        return buffer_.in_use() == 0 && ready_.empty() && in_flight_ == 0 && all_pending_ == 0 && open_empty();
    }

    /// Hot path for source-backed records. `at` is the sender's current
    /// time (>= now); no other event may be due before it.
    OfferResult offer(const std::shared_ptr<const RecordSource>& source, std::uint64_t index, std::uint64_t size,
                      Nanos at)
    {
        check_open();
        if (size > buffer_.capacity()) {
            throw Error(ErrorCode::InvalidRecord, "record of " + std::to_string(size) +
                                                      " bytes exceeds buffer.memory");
        }
        if (!buffer_.try_reserve(size)) {
            return OfferResult::NoSpace;
        }
        ++accepted_;
        const int p = next_partition();
        auto& slot = open_[static_cast<std::size_t>(p)];
        bool sealed = false;
        if (!slot) {
            slot = std::make_shared<BatchState>(PartitionTarget{topic_, p}, props_.batch_size_bytes);
        }
        const auto stride = static_cast<std::uint32_t>(partitions_);
        if (slot->batch.try_add(source, index, stride, size, at) == AddResult::Sealed) {
            seal_slot(slot);
            slot = std::make_shared<BatchState>(PartitionTarget{topic_, p}, props_.batch_size_bytes);
            slot->batch.try_add(source, index, stride, size, at);
            sealed = true;
        }
        if (slot->batch.sealed()) {
            seal_slot(slot);
            slot.reset();
            sealed = true;
        }
        if (sealed) {
            pump_at(at);
            return OfferResult::Sealed;
        }
        return OfferResult::Accepted;
    }

    /// Non-blocking send of an explicit record; nullopt when the buffer is full.
    std::optional<DeliveryReceipt> try_send(const Record& record, Nanos at)
    {
        check_open();
        if (record.size_bytes() > buffer_.capacity()) {
            throw Error(ErrorCode::InvalidRecord, "record of " + std::to_string(record.size_bytes()) +
                                                      " bytes exceeds buffer.memory");
        }
        if (!buffer_.try_reserve(record.size_bytes())) {
            return std::nullopt;
        }
        ++accepted_;
        const int p = next_partition();
        auto& slot = open_[static_cast<std::size_t>(p)];
        bool sealed = false;
        if (!slot) {
            slot = std::make_shared<BatchState>(PartitionTarget{topic_, p}, props_.batch_size_bytes);
        }
        if (slot->batch.try_add(record) == AddResult::Sealed) {
            seal_slot(slot);
            slot = std::make_shared<BatchState>(PartitionTarget{topic_, p}, props_.batch_size_bytes);
            slot->batch.try_add(record);
            sealed = true;
        }
        auto state = slot;
        DeliveryReceipt receipt(state, state->batch.count() - 1, props_.acks, in_sync_, props_.min_insync_replicas);
        if (slot->batch.sealed()) {
            seal_slot(slot);
            slot.reset();
            sealed = true;
        }
        if (sealed) {
            pump_at(at);
        }
        return receipt;
    }

    /// Blocking send: drives the event loop until buffer space frees.
    DeliveryReceipt send(const Record& record)
    {
        while (true) {
            if (auto receipt = try_send(record, sim_->now())) {
                return *receipt;
            }
            if (!sim_->step()) {
                throw std::logic_error("producer buffer full with nothing in progress");
            }
        }
    }

    /// Seals every open batch and queues it for dispatch at `at`.
    void seal_all(Nanos at)
    {
        bool any = false;
        for (auto& slot : open_) {
            if (slot && !slot->batch.empty()) {
                slot->batch.seal();
                seal_slot(slot);
                any = true;
            }
            slot.reset();
        }
        if (any) {
            pump_at(at);
        }
    }

    /// Seals open batches and drives the event loop until every receipt has resolved.
    void flush()
    {
        seal_all(sim_->now());
        while (!drained()) {
            if (!sim_->step()) {
                throw std::logic_error("flush stalled with work outstanding");
            }
        }
    }

    /// Seals open batches; later sends throw ProducerClosed.
    void close()
    {
        if (!closed_) {
            seal_all(sim_->now());
            closed_ = true;
        }
    }

    /// Calls `cb` once `bytes` can be reserved. One waiter at a time.
    void wait_for_space(std::uint64_t bytes, std::function<void()> cb)
    {
        if (space_waiter_) {
            throw std::logic_error("buffer already has a blocked reserver");
        }
        if (buffer_.can_reserve(bytes)) {
            sim_->schedule(sim_->now(), lane_, std::move(cb));
            return;
        }
        waiting_bytes_ = bytes;
        space_waiter_ = std::move(cb);
    }

    /// Calls `cb` once the producer is drained (immediately scheduled if already).
    void on_drained(std::function<void()> cb)
    {
        if (drained()) {
            sim_->schedule(sim_->now(), lane_, std::move(cb));
            return;
        }
        drained_waiters_.push_back(std::move(cb));
    }

private:
    void check_open() const
    {
        if (closed_) {
            throw Error(ErrorCode::ProducerClosed, "send after close");
        }
    }

    int next_partition() noexcept
    {
        const int p = rr_;
        if (++rr_ == partitions_) {
            rr_ = 0;
        }
        return p;
    }

    [[nodiscard]] bool open_empty() const noexcept
    {
        for (const auto& slot : open_) {
            if (slot && !slot->batch.empty()) {
                return false;
            }
        }
        return true;
    }

    void seal_slot(const std::shared_ptr<BatchState>& state) { ready_.push_back(state); }

    void pump_at(Nanos at)
    {
        if (at > sim_->now()) {
            sim_->schedule(at, lane_, [this] { pump(); });
        } else {
            pump();
        }
    }

    void pump()
    {
        while (!ready_.empty() && in_flight_ < props_.max_in_flight) {
            auto state = std::move(ready_.front());
            ready_.pop_front();
            state->timeline.enqueued = sim_->now();
            state->dispatched = true;
            ++in_flight_;
            ++dispatched_;
            ++all_pending_;
            if (props_.acks == Acks::Acks0) {
                release(state->batch.bytes());
            }
            cluster_->produce(std::move(state), host_, this);
        }
    }

    void release(std::uint64_t bytes)
    {
        buffer_.release(bytes);
        if (space_waiter_ && buffer_.can_reserve(waiting_bytes_)) {
            sim_->schedule(sim_->now(), lane_, std::move(space_waiter_));
            space_waiter_ = nullptr;
        }
    }

    void on_leader_done(BatchState& state) override
    {
        appended_ += state.batch.count();
        --in_flight_;
        if (props_.acks == Acks::Acks1) {
            release(state.batch.bytes());
        }
        pump();
        notify_drained();
    }

    void on_all_done(BatchState& state) override
    {
        --all_pending_;
        if (props_.acks == Acks::AcksAll) {
            release(state.batch.bytes());
        }
        notify_drained();
    }

    void notify_drained()
    {
        if (drained_waiters_.empty() || !drained()) {
            return;
        }
        auto waiters = std::move(drained_waiters_);
        drained_waiters_.clear();
        for (auto& cb : waiters) {
            sim_->schedule(sim_->now(), lane_, std::move(cb));
        }
    }

    Simulation* sim_;
    Cluster* cluster_;
    TopicHandle topic_;
    ProducerProps props_;
    HostId host_;
    std::uint32_t lane_;
    BufferAccount buffer_;
    int partitions_ = 1;
    int in_sync_ = 1;
    int rr_ = 0;
    bool closed_ = false;
    int in_flight_ = 0;
    int all_pending_ = 0;
    std::uint64_t accepted_ = 0;
    std::uint64_t appended_ = 0;
    std::uint64_t dispatched_ = 0;
    std::vector<std::shared_ptr<BatchState>> open_;
    std::deque<std::shared_ptr<BatchState>> ready_;
    std::uint64_t waiting_bytes_ = 0;
    std::function<void()> space_waiter_;
    std::vector<std::function<void()>> drained_waiters_;
};

} // namespace ingestbench
