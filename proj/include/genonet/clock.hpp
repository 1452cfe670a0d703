#pragma once

#include <chrono>
#include <mutex>
#include <string>

namespace genonet {

using TimePoint = std::chrono::system_clock::time_point;

/// Source of wall-clock timestamps. Replay sessions use `SteppingClock`
/// so transcripts are byte-identical across runs.
class Clock {
public:
    virtual ~Clock() = default;
    virtual TimePoint now() = 0;
};

class SystemClock final : public Clock {
public:
    TimePoint now() override { return std::chrono::system_clock::now(); }
};

/// Deterministic clock: starts at `start` and advances by `step` per reading.
class SteppingClock final : public Clock {
public:
    explicit SteppingClock(TimePoint start = default_epoch(),
                           std::chrono::milliseconds step = std::chrono::milliseconds(1))
        : next_(start), step_(step) {}

    TimePoint now() override
    {
        std::lock_guard lock(mutex_);
        auto t = next_;
        next_ += step_;
        return t;
    }

    /// 2024-01-01T00:00:00Z
    static TimePoint default_epoch() { return TimePoint(std::chrono::seconds(1704067200)); }

private:
    std::mutex mutex_;
    TimePoint next_;
    std::chrono::milliseconds step_;
};

/// ISO-8601 UTC with millisecond precision, e.g. `2024-01-01T00:00:00.000Z`.
std::string format_iso8601(TimePoint t);

} // namespace genonet
