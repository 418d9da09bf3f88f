#pragma once

// Single-driver discrete-event loop. Events at equal time run in lane order,
// then in scheduling order, which makes VirtualTime runs reproducible.

#include "ingestbench/core.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <thread>
#include <vector>

namespace ingestbench {

/// Lanes order simultaneous events: system work first, then data senders by
/// index, then the metrics tick.
struct Lane {
    static constexpr std::uint32_t kSystem = 0;
    static constexpr std::uint32_t kTick = std::numeric_limits<std::uint32_t>::max();
    static constexpr std::uint32_t sender(std::uint32_t index) { return 1 + index; }
};

class Simulation {
public:
    using Action = std::function<void()>;

    explicit Simulation(ClockMode mode = ClockMode::VirtualTime) : clock_(mode) {}

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    [[nodiscard]] Nanos now() const noexcept { return clock_.now(); }
    [[nodiscard]] const Clock& clock() const noexcept { return clock_; }

    void schedule(Nanos at, std::uint32_t lane, Action action)
    {
        if (at < clock_.now()) {
            at = clock_.now();
        }
        queue_.push(Event{at, lane, next_seq_++, std::move(action)});
    }

    void schedule(Nanos at, Action action) { schedule(at, Lane::kSystem, std::move(action)); }

    /// Time of the earliest pending event, or max() when idle.
    [[nodiscard]] Nanos next_event_time() const noexcept
    {
        return queue_.empty() ? std::numeric_limits<Nanos>::max() : queue_.top().time;
    }

    /// Lane of the earliest pending event; only meaningful when not idle.
    [[nodiscard]] std::uint32_t next_event_lane() const noexcept
    {
        return queue_.empty() ? Lane::kTick : queue_.top().lane;
    }

    [[nodiscard]] bool idle() const noexcept { return queue_.empty(); }
    [[nodiscard]] std::uint64_t events_processed() const noexcept { return processed_; }

    bool step()
    {
        if (queue_.empty()) {
            return false;
        }
        // top() is const; moving out is fine because pop() follows at once.
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        pace(ev.time);
        clock_.advance_to(ev.time);
        ++processed_;
        ev.action();
        return true;
    }

    /// Runs events with time <= until.
    void run_until(Nanos until)
    {
        while (!queue_.empty() && queue_.top().time <= until) {
            step();
        }
    }

    void run()
    {
        while (step()) {
        }
    }

private:
    struct Event {
        Nanos time;
        std::uint32_t lane;
        std::uint64_t seq;
        Action action;
    };

    struct Later {
        bool operator()(const Event& a, const Event& b) const noexcept
        {
            if (a.time != b.time) {
                return a.time > b.time;
            }
            if (a.lane != b.lane) {
                return a.lane > b.lane;
            }
            return a.seq > b.seq;
        }
    };

    void pace(Nanos t)
    {
        if (clock_.mode() != ClockMode::RealTime) {
            return;
        }
        if (!wall_started_) {
            wall_start_ = std::chrono::steady_clock::now();
            wall_started_ = true;
        }
        const auto due = wall_start_ + std::chrono::nanoseconds(t);
        // Sleep only when meaningfully ahead of the wall clock.
        if (due - std::chrono::steady_clock::now() > std::chrono::milliseconds(1)) {
            std::this_thread::sleep_until(due);
        }
    }

    Clock clock_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
    bool wall_started_ = false;
    std::chrono::steady_clock::time_point wall_start_{};
};

} // namespace ingestbench
