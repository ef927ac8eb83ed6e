#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "embchord/errors.hpp"

namespace embchord::sim {

/// Discrete-event scheduler with 1 ms granularity. Events fire in strict
/// (time, insertion order) lexicographic order, which is what makes whole
/// simulation runs reproducible from a seed.
class EventLoop {
public:
    using action = std::function<void()>;

    std::uint64_t now() const noexcept { return now_ms_; }

    void schedule_at(std::uint64_t time_ms, action fn) {
        if (time_ms < now_ms_) time_ms = now_ms_;
        queue_.push(event{time_ms, next_seq_++, std::move(fn)});
    }

    void schedule_after(std::uint64_t delay_ms, action fn) {
        schedule_at(now_ms_ + delay_ms, std::move(fn));
    }

    bool has_pending() const noexcept { return !queue_.empty(); }
    std::size_t pending() const noexcept { return queue_.size(); }

    /// Runs a single event; returns false when the queue is empty.
    bool step() {
        if (queue_.empty()) return false;
        event ev = std::move(const_cast<event&>(queue_.top()));
        queue_.pop();
        now_ms_ = ev.time_ms;
        ev.fn();
        return true;
    }

    /// Processes every event scheduled at or before `time_ms`, then parks
    /// the clock there.
    void run_until_time(std::uint64_t time_ms) {
        while (!queue_.empty() && queue_.top().time_ms <= time_ms) step();
        if (time_ms > now_ms_) now_ms_ = time_ms;
    }

    void run_for(std::uint64_t duration_ms) { run_until_time(now_ms_ + duration_ms); }

    /// Steps until `done()` holds or the deadline passes; returns whether
    /// the predicate was satisfied.
    bool run_until(const std::function<bool()>& done, std::uint64_t deadline_ms) {
        while (!done()) {
            if (queue_.empty() || queue_.top().time_ms > deadline_ms) {
                run_until_time(deadline_ms);
                return done();
            }
            step();
        }
        return true;
    }

private:
    struct event {
        std::uint64_t time_ms;
        std::uint64_t seq;
        action fn;
        bool operator>(const event& o) const {
            return std::tie(time_ms, seq) > std::tie(o.time_ms, o.seq);
        }
    };

    std::uint64_t now_ms_ = 0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<event, std::vector<event>, std::greater<>> queue_;
};

} // namespace embchord::sim
