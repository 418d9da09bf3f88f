#pragma once

// Producer-side record batching and buffer-memory accounting.

#include "ingestbench/core.hpp"
#include "ingestbench/log.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ingestbench {

struct TopicHandle {
    std::uint32_t id = 0;
    friend bool operator==(TopicHandle, TopicHandle) = default;
};

struct PartitionTarget {
    TopicHandle topic;
    int partition = 0;
};

enum class AddResult { Added, Sealed };

/// Records bound for one partition, capped at batch_size_bytes. A record
/// that does not fit seals the batch and is left for the next one; an
/// oversize record arriving at an empty batch becomes a sealed
/// single-record batch.
class Batch {
public:
    Batch(PartitionTarget target, std::uint64_t batch_size_bytes) : target_(target), limit_(batch_size_bytes) {}

    AddResult try_add(const Record& record)
    {
        if (span_.source) {
            throw std::logic_error("batch already holds source records");
        }
        if (!admit(record.size_bytes())) {
            return AddResult::Sealed;
        }
        records_.push_back(record);
        push_ts(runs_, record.create_ts());
        commit(record.size_bytes());
        return AddResult::Added;
    }

    /// Source-backed variant: the record is the next stream element of
    /// `source` at index `index`.
    AddResult try_add(const std::shared_ptr<const RecordSource>& source, std::uint64_t index,
                      std::uint32_t index_stride, std::uint64_t size, Nanos create_ts)
    {
        if (!records_.empty()) {
            throw std::logic_error("batch already holds explicit records");
        }
        if (!admit(size)) {
            return AddResult::Sealed;
        }
        if (!span_.source) {
            span_.source = source;
            span_.first_index = index;
            span_.index_stride = index_stride;
        }
        ++span_.count;
        push_ts(runs_, create_ts);
        commit(size);
        return AddResult::Added;
    }

    void seal() noexcept { sealed_ = true; }

    [[nodiscard]] bool sealed() const noexcept { return sealed_; }
    [[nodiscard]] bool empty() const noexcept { return count_ == 0; }
    [[nodiscard]] std::uint64_t bytes() const noexcept { return bytes_; }
    [[nodiscard]] std::uint32_t count() const noexcept { return count_; }
    [[nodiscard]] std::uint64_t limit() const noexcept { return limit_; }
    [[nodiscard]] const PartitionTarget& target() const noexcept { return target_; }
    [[nodiscard]] const std::vector<TsRun>& create_ts_runs() const noexcept { return runs_; }
    [[nodiscard]] bool source_backed() const noexcept { return static_cast<bool>(span_.source); }
    [[nodiscard]] const SourceSpan& span() const noexcept { return span_; }
    [[nodiscard]] const std::vector<Record>& explicit_records() const noexcept { return records_; }

    /// Member records in order (materialized for source-backed batches).
    [[nodiscard]] std::vector<Record> records() const
    {
        if (!span_.source) {
            return records_;
        }
        std::vector<Record> out;
        out.reserve(count_);
        std::uint32_t i = 0;
        for (const auto& run : runs_) {
            for (std::uint32_t j = 0; j < run.count; ++j, ++i) {
                out.push_back(span_.source->record_at(span_.first_index + std::uint64_t{i} * span_.index_stride,
                                                      run.at(j)));
            }
        }
        return out;
    }

private:
    bool admit(std::uint64_t size)
    {
        if (sealed_) {
            throw std::logic_error("cannot add to a sealed batch");
        }
        if (count_ > 0 && bytes_ + size > limit_) {
            sealed_ = true;
            return false;
        }
        return true;
    }

    void commit(std::uint64_t size)
    {
        bytes_ += size;
        ++count_;
        if (count_ == 1 && size > limit_) {
            sealed_ = true;
        }
    }

    PartitionTarget target_;
    std::uint64_t limit_;
    std::uint64_t bytes_ = 0;
    std::uint32_t count_ = 0;
    bool sealed_ = false;
    std::vector<Record> records_;
    SourceSpan span_;
    std::vector<TsRun> runs_;
};

/// Producer buffer memory: 0 <= in_use <= capacity.
class BufferAccount {
public:
    explicit BufferAccount(std::uint64_t capacity) : capacity_(capacity) {}

    [[nodiscard]] bool can_reserve(std::uint64_t bytes) const noexcept { return in_use_ + bytes <= capacity_; }

    bool try_reserve(std::uint64_t bytes) noexcept
    {
        if (!can_reserve(bytes)) {
            return false;
        }
        in_use_ += bytes;
        return true;
    }

    void release(std::uint64_t bytes)
    {
        if (bytes > in_use_) {
            throw std::logic_error("buffer release exceeds reservation");
        }
        in_use_ -= bytes;
    }

    [[nodiscard]] std::uint64_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] std::uint64_t in_use() const noexcept { return in_use_; }

private:
    std::uint64_t capacity_;
    std::uint64_t in_use_ = 0;
};

/// Timing of one produce request as seen by the acknowledgment logic.
struct RequestTimeline {
    Nanos enqueued = 0;
    std::optional<Nanos> leader_done;
    std::vector<Nanos> follower_done;
};

/// When the producer counts a request as acknowledged. Followers' times
/// already include their replication delay.
inline Nanos ack_time(const RequestTimeline& timeline, Acks acks, int in_sync_replicas = 1,
                      int min_insync_replicas = 1)
{
    switch (acks) {
    case Acks::Acks0:
        return timeline.enqueued;
    case Acks::Acks1:
        if (!timeline.leader_done) {
            throw std::logic_error("leader write has not completed");
        }
        return *timeline.leader_done;
    case Acks::AcksAll: {
        if (in_sync_replicas < min_insync_replicas) {
            throw Error(ErrorCode::NotEnoughReplicas, "in-sync replicas " + std::to_string(in_sync_replicas) +
                                                          " < min.insync.replicas " +
                                                          std::to_string(min_insync_replicas));
        }
        if (!timeline.leader_done) {
            throw std::logic_error("leader write has not completed");
        }
        Nanos t = *timeline.leader_done;
        for (auto f : timeline.follower_done) {
            t = std::max(t, f);
        }
        return t;
    }
    }
    return timeline.enqueued;
}

/// A batch travelling through the cluster together with its timing.
struct BatchState {
    BatchState(PartitionTarget target, std::uint64_t batch_size) : batch(target, batch_size) {}

    Batch batch;
    RequestTimeline timeline;
    int followers_pending = 0;
    std::int64_t base_offset = -1;
    bool dispatched = false;
    bool all_done = false;
};

/// Per-record handle resolved from its batch's timeline.
class DeliveryReceipt {
public:
    DeliveryReceipt(std::shared_ptr<const BatchState> state, std::uint32_t index, Acks acks, int in_sync,
                    int min_insync)
        : state_(std::move(state)), index_(index), acks_(acks), in_sync_(in_sync), min_insync_(min_insync)
    {
    }

    /// True once the acks condition has been met.
    [[nodiscard]] bool resolved() const noexcept
    {
        if (!state_->dispatched) {
            return false;
        }
        switch (acks_) {
        case Acks::Acks0: return true;
        case Acks::Acks1: return state_->timeline.leader_done.has_value();
        case Acks::AcksAll: return state_->all_done;
        }
        return false;
    }

    [[nodiscard]] Nanos ack_time() const
    {
        if (!resolved()) {
            throw std::logic_error("receipt not resolved yet");
        }
        return ingestbench::ack_time(state_->timeline, acks_, in_sync_, min_insync_);
    }

    /// Offset assigned by the leader; present once the batch is appended.
    [[nodiscard]] std::optional<std::int64_t> offset() const noexcept
    {
        if (state_->base_offset < 0) {
            return std::nullopt;
        }
        return state_->base_offset + index_;
    }

    [[nodiscard]] const RequestTimeline& timeline() const noexcept { return state_->timeline; }

private:
    std::shared_ptr<const BatchState> state_;
    std::uint32_t index_;
    Acks acks_;
    int in_sync_;
    int min_insync_;
};

} // namespace ingestbench
