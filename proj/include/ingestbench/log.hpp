#pragma once

// Offset-indexed, append-only partition log.
//
// Records appended by the simulator come from wrap-around sources, so the
// log stores them as segments (source, first stream index, stride, count)
// plus run-length encoded creation timestamps instead of copies; fetch
// materializes records on demand. Explicitly appended records are kept
// verbatim.

#include "ingestbench/core.hpp"
#include "ingestbench/source.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace ingestbench {

/// Arithmetic run of timestamps: start, start+stride, ... (count values).
struct TsRun {
    Nanos start = 0;
    Nanos stride = 0;
    std::uint32_t count = 0;

    [[nodiscard]] Nanos at(std::uint32_t i) const noexcept { return start + stride * static_cast<Nanos>(i); }
};

/// Appends ts to a run list, extending the last run when it stays arithmetic.
inline void push_ts(std::vector<TsRun>& runs, Nanos ts)
{
    if (!runs.empty()) {
        auto& last = runs.back();
        if (last.count == 1) {
            last.stride = ts - last.start;
            last.count = 2;
            return;
        }
        if (last.at(last.count) == ts) {
            ++last.count;
            return;
        }
    }
    runs.push_back({ts, 0, 1});
}

/// Records of one batch taken from a source: stream indices
/// first, first+stride, ... with creation times in `runs`.
struct SourceSpan {
    std::shared_ptr<const RecordSource> source;
    std::uint64_t first_index = 0;
    std::uint32_t index_stride = 1;
    std::uint32_t count = 0;
};

struct LogEntry {
    std::int64_t offset;
    Record record;
    Nanos stored_ts;
};

struct AppendResult {
    std::int64_t offset;
    Nanos stored_ts;
};

class PartitionLog {
public:
    PartitionLog(std::string topic, int partition_id, TimestampType ts_type)
        : topic_(std::move(topic)), partition_id_(partition_id), ts_type_(ts_type)
    {
    }

    [[nodiscard]] const std::string& topic() const noexcept { return topic_; }
    [[nodiscard]] int partition_id() const noexcept { return partition_id_; }
    [[nodiscard]] std::int64_t next_offset() const noexcept { return next_offset_; }
    [[nodiscard]] std::uint64_t bytes() const noexcept { return bytes_; }

    AppendResult append(const Record& record, Nanos broker_clock)
    {
        const auto offset = next_offset_;
        segments_.push_back(Segment{offset, 1, kExplicitSlot, explicit_.size(), 1, broker_clock,
                                    static_cast<std::uint32_t>(runs_.size())});
        runs_.push_back({record.create_ts(), 0, 1});
        explicit_.push_back(record);
        ++next_offset_;
        bytes_ += record.size_bytes();
        return {offset, stored_ts(record.create_ts(), broker_clock)};
    }

    /// Appends a whole batch; returns the base offset.
    std::int64_t append_span(const SourceSpan& span, const std::vector<TsRun>& create_ts, std::uint64_t span_bytes,
                             Nanos broker_clock)
    {
        const auto base = next_offset_;
        segments_.push_back(Segment{base, span.count, slot_for(span.source), span.first_index, span.index_stride,
                                    broker_clock, static_cast<std::uint32_t>(runs_.size())});
        runs_.insert(runs_.end(), create_ts.begin(), create_ts.end());
        next_offset_ += span.count;
        bytes_ += span_bytes;
        return base;
    }

    /// Appends explicit records as one batch; returns the base offset.
    std::int64_t append_records(const std::vector<Record>& records, Nanos broker_clock)
    {
        const auto base = next_offset_;
        segments_.push_back(Segment{base, static_cast<std::uint32_t>(records.size()), kExplicitSlot,
                                    explicit_.size(), 1, broker_clock, static_cast<std::uint32_t>(runs_.size())});
        for (const auto& r : records) {
            runs_.push_back({r.create_ts(), 0, 1});
            explicit_.push_back(r);
            bytes_ += r.size_bytes();
        }
        next_offset_ += static_cast<std::int64_t>(records.size());
        return base;
    }

    /// Entries with offset strictly greater than after_offset, in offset
    /// order; -1 reads from the beginning. At most max_records are returned.
    [[nodiscard]] std::vector<LogEntry> fetch(std::int64_t after_offset,
                                              std::size_t max_records = std::numeric_limits<std::size_t>::max()) const
    {
        if (after_offset < -1) {
            throw Error(ErrorCode::InvalidOffset, "fetch offset " + std::to_string(after_offset) + " < -1");
        }
        std::vector<LogEntry> out;
        std::int64_t offset = after_offset + 1;
        if (offset >= next_offset_ || max_records == 0) {
            return out;
        }
        auto seg = std::upper_bound(segments_.begin(), segments_.end(), offset,
                                    [](std::int64_t o, const Segment& s) { return o < s.base_offset; });
        --seg;
        for (; seg != segments_.end() && out.size() < max_records; ++seg) {
            for (auto i = static_cast<std::uint32_t>(offset - seg->base_offset);
                 i < seg->count && out.size() < max_records; ++i, ++offset) {
                out.push_back(materialize(*seg, i));
            }
        }
        return out;
    }

    /// Offsets are 0..next_offset-1 without gaps and segment metadata is
    /// consistent. Linear in segment count.
    [[nodiscard]] bool offsets_dense() const noexcept
    {
        std::int64_t expected = 0;
        for (std::size_t s = 0; s < segments_.size(); ++s) {
            const auto& seg = segments_[s];
            if (seg.base_offset != expected || seg.count == 0) {
                return false;
            }
            std::uint64_t ts_count = 0;
            const auto runs_end = s + 1 < segments_.size() ? segments_[s + 1].runs_begin : runs_.size();
            for (auto r = seg.runs_begin; r < runs_end; ++r) {
                ts_count += runs_[r].count;
            }
            if (ts_count != seg.count) {
                return false;
            }
            expected += seg.count;
        }
        return expected == next_offset_;
    }

    [[nodiscard]] std::size_t segment_count() const noexcept { return segments_.size(); }

private:
    static constexpr std::uint32_t kExplicitSlot = std::numeric_limits<std::uint32_t>::max();

    struct Segment {
        std::int64_t base_offset;
        std::uint32_t count;
        std::uint32_t source_slot;
        std::uint64_t first_index;
        std::uint32_t index_stride;
        Nanos log_ts;
        std::uint32_t runs_begin;
    };

    [[nodiscard]] Nanos stored_ts(Nanos create_ts, Nanos broker_clock) const noexcept
    {
        return ts_type_ == TimestampType::LogAppendTime ? broker_clock : create_ts;
    }

    std::uint32_t slot_for(const std::shared_ptr<const RecordSource>& source)
    {
        for (std::uint32_t i = 0; i < sources_.size(); ++i) {
            if (sources_[i] == source) {
                return i;
            }
        }
        sources_.push_back(source);
        return static_cast<std::uint32_t>(sources_.size() - 1);
    }

    [[nodiscard]] Nanos create_ts_of(const Segment& seg, std::uint32_t i) const
    {
        auto r = seg.runs_begin;
        while (i >= runs_[r].count) {
            i -= runs_[r].count;
            ++r;
        }
        return runs_[r].at(i);
    }

    [[nodiscard]] LogEntry materialize(const Segment& seg, std::uint32_t i) const
    {
        const auto offset = seg.base_offset + i;
        if (seg.source_slot == kExplicitSlot) {
            const auto& rec = explicit_[seg.first_index + i];
            return {offset, rec, stored_ts(rec.create_ts(), seg.log_ts)};
        }
        const auto create_ts = create_ts_of(seg, i);
        const auto index = seg.first_index + static_cast<std::uint64_t>(i) * seg.index_stride;
        return {offset, sources_[seg.source_slot]->record_at(index, create_ts), stored_ts(create_ts, seg.log_ts)};
    }

    std::string topic_;
    int partition_id_;
    TimestampType ts_type_;
    std::int64_t next_offset_ = 0;
    std::uint64_t bytes_ = 0;
    std::vector<Segment> segments_;
    std::vector<TsRun> runs_;
    std::vector<Record> explicit_;
    std::vector<std::shared_ptr<const RecordSource>> sources_;
};

} // namespace ingestbench
