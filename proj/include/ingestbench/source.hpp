#pragma once

// Data sources for the data sender: delimited text files and a synthetic
// generator shaped like the 66-column manufacturing sensor records.

#include "ingestbench/core.hpp"

#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace ingestbench {

inline constexpr int kSyntheticColumns = 66;

struct DataSourceSpec {
    enum class Kind { DelimitedFile, Synthetic };

    Kind kind = Kind::Synthetic;
    std::string path;
    char delimiter = '\t';
    std::uint64_t seed = 1;
    std::size_t synthetic_records = 10'000;
    std::uint64_t record_size_target = 215;

    friend bool operator==(const DataSourceSpec&, const DataSourceSpec&) = default;
};

namespace detail {

// Field layout: one epoch-millisecond timestamp, then booleans and numeric
// readings interleaved. Numeric widths are drawn so the mean line length
// hits the size target.
inline constexpr int kTimestampDigits = 13;
inline constexpr int kBooleanFields = 35;
inline constexpr int kNumericFields = kSyntheticColumns - 1 - kBooleanFields;

inline std::string synthetic_line(std::mt19937_64& rng, std::uint64_t index, double numeric_width, char delimiter)
{
    std::string line;
    line.reserve(256);
    line += std::to_string(1'330'000'000'000ULL + index * 10);

    const auto whole = static_cast<std::uint64_t>(numeric_width);
    const double frac = numeric_width - static_cast<double>(whole);
    int booleans = 0;
    int numerics = 0;
    for (int field = 1; field < kSyntheticColumns; ++field) {
        line += delimiter;
        const bool boolean_slot = (field % 2 == 1 && booleans < kBooleanFields) || numerics == kNumericFields;
        if (boolean_slot) {
            line += (rng() & 1) ? '1' : '0';
            ++booleans;
            continue;
        }
        ++numerics;
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        std::uint64_t width = whole + (u < frac ? 1 : 0);
        if (width == 0) {
            width = 1;
        }
        for (std::uint64_t d = 0; d < width; ++d) {
            const auto digit = static_cast<char>('0' + rng() % 10);
            line += (d == 0 && width > 1 && digit == '0') ? '1' : digit;
        }
    }
    return line;
}

inline double numeric_width_for(std::uint64_t target)
{
    const auto fixed = static_cast<double>(kSyntheticColumns - 1 + kTimestampDigits + kBooleanFields);
    const double width = (static_cast<double>(target) - fixed) / kNumericFields;
    if (width < 1.0) {
        throw Error(ErrorCode::TypeMismatch,
                    "record_size_target " + std::to_string(target) + " is below the 66-field minimum");
    }
    return width;
}

} // namespace detail

/// Deterministic synthetic records: 66 tab-delimited numeric/boolean fields,
/// no key, create_ts 0 (the sender stamps records when it emits them).
inline std::vector<Record> gen_synthetic(std::uint64_t seed, std::size_t n, std::uint64_t size_target = 215)
{
    const double width = detail::numeric_width_for(size_target);
    std::mt19937_64 rng(seed);
    std::vector<Record> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.emplace_back(std::nullopt, detail::synthetic_line(rng, i, width, '\t'), 0);
    }
    return out;
}

/// Immutable, randomly addressable record pool. Either fully resident
/// (read-in-ram, synthetic) or an index over a file whose payloads are read
/// on demand.
class RecordSource {
public:
    static std::shared_ptr<const RecordSource> in_memory(std::vector<std::string> payloads)
    {
        if (payloads.empty()) {
            throw Error(ErrorCode::SourceError, "source has no records");
        }
        auto src = std::shared_ptr<RecordSource>(new RecordSource());
        src->sizes_.reserve(payloads.size());
        for (const auto& p : payloads) {
            if (p.empty()) {
                throw Error(ErrorCode::InvalidRecord, "empty payload in source");
            }
            src->sizes_.push_back(static_cast<std::uint32_t>(p.size()));
        }
        src->payloads_ = std::move(payloads);
        return src;
    }

    static std::shared_ptr<const RecordSource> synthetic(std::uint64_t seed, std::size_t n, std::uint64_t target)
    {
        if (n == 0) {
            throw Error(ErrorCode::SourceError, "synthetic source needs at least one record");
        }
        std::vector<std::string> payloads;
        payloads.reserve(n);
        for (auto& r : gen_synthetic(seed, n, target)) {
            payloads.push_back(r.payload());
        }
        return in_memory(std::move(payloads));
    }

    /// One record per line, UTF-8, no header; blank lines are skipped and a
    /// trailing '\r' is stripped. Errors surface here, never mid-run.
    static std::shared_ptr<const RecordSource> from_file(const std::string& path, bool read_in_ram)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw Error(ErrorCode::SourceError, "cannot open '" + path + "'");
        }
        auto src = std::shared_ptr<RecordSource>(new RecordSource());
        std::string line;
        std::uint64_t offset = 0;
        while (std::getline(in, line)) {
            const std::uint64_t line_start = offset;
            offset += line.size() + 1;
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty()) {
                continue;
            }
            src->sizes_.push_back(static_cast<std::uint32_t>(line.size()));
            if (read_in_ram) {
                src->payloads_.push_back(line);
            } else {
                src->offsets_.push_back(line_start);
            }
        }
        if (in.bad()) {
            throw Error(ErrorCode::SourceError, "read error on '" + path + "'");
        }
        if (src->sizes_.empty()) {
            throw Error(ErrorCode::SourceError, "'" + path + "' contains no records");
        }
        if (!read_in_ram) {
            src->file_ = std::make_unique<FileHandle>();
            src->file_->path = path;
            src->file_->stream.open(path, std::ios::binary);
            if (!src->file_->stream) {
                throw Error(ErrorCode::SourceError, "cannot reopen '" + path + "'");
            }
        }
        return src;
    }

    [[nodiscard]] std::size_t length() const noexcept { return sizes_.size(); }

    /// Size of stream element i; the stream wraps after the last record.
    [[nodiscard]] std::uint32_t size_at(std::uint64_t i) const noexcept { return sizes_[i % sizes_.size()]; }

    [[nodiscard]] std::string payload_at(std::uint64_t i) const
    {
        const auto idx = i % sizes_.size();
        if (!file_) {
            return payloads_[idx];
        }
        std::lock_guard lock(file_->mutex);
        std::string out(sizes_[idx], '\0');
        file_->stream.clear();
        file_->stream.seekg(static_cast<std::streamoff>(offsets_[idx]));
        file_->stream.read(out.data(), static_cast<std::streamsize>(out.size()));
        if (!file_->stream) {
            throw Error(ErrorCode::SourceError, "'" + file_->path + "' changed while in use");
        }
        return out;
    }

    [[nodiscard]] Record record_at(std::uint64_t i, Nanos create_ts) const
    {
        return Record(std::nullopt, payload_at(i), create_ts);
    }

    [[nodiscard]] bool resident() const noexcept { return !file_; }

private:
    struct FileHandle {
        std::string path;
        std::ifstream stream;
        std::mutex mutex;
    };

    RecordSource() = default;

    std::vector<std::uint32_t> sizes_;
    std::vector<std::string> payloads_;
    std::vector<std::uint64_t> offsets_;
    std::unique_ptr<FileHandle> file_;
};

inline std::shared_ptr<const RecordSource> open_source(const DataSourceSpec& spec, bool read_in_ram)
{
    if (spec.kind == DataSourceSpec::Kind::Synthetic) {
        return RecordSource::synthetic(spec.seed, spec.synthetic_records, spec.record_size_target);
    }
    return RecordSource::from_file(spec.path, read_in_ram);
}

/// Sequential reader over a source that wraps to the first record after the
/// last. In iterator mode each read costs read_latency of sender time.
class SourceCursor {
public:
    SourceCursor(std::shared_ptr<const RecordSource> source, bool read_in_ram, Nanos read_latency_ns)
        : source_(std::move(source)), latency_(read_in_ram ? 0 : read_latency_ns)
    {
    }

    /// Returns the next record, stamped at `now` plus the read cost.
    Record next_record(Nanos now)
    {
        return source_->record_at(index_++, now + latency_);
    }

    [[nodiscard]] Nanos per_record_latency() const noexcept { return latency_; }
    [[nodiscard]] std::uint64_t position() const noexcept { return index_; }
    [[nodiscard]] const std::shared_ptr<const RecordSource>& source() const noexcept { return source_; }

    /// Hot-path variant used by the simulator: size only, no payload copy.
    std::uint32_t advance() noexcept { return source_->size_at(index_++); }

private:
    std::shared_ptr<const RecordSource> source_;
    Nanos latency_;
    std::uint64_t index_ = 0;
};

} // namespace ingestbench
