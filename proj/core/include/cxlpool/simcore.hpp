#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "cxlpool/types.hpp"

namespace cxlpool {

/// Event kinds carried in the trace; also used as scheduling tags.
enum class EventKind : std::uint8_t {
    ChannelPoll,
    DmaComplete,
    DeviceDone,
    Heartbeat,
    FailureInject,
    Timer,
};

const char* to_string(EventKind k);

struct TraceRecord {
    SimTime time_ns = 0;
    std::string actor;
    EventKind kind = EventKind::Timer;
    std::string detail;
};

/// Ordered log of everything that happened in one run. Two runs with the
/// same scenario and seed must produce byte-identical logs.
class TraceLog {
  public:
    void append(SimTime t, std::string actor, EventKind kind, std::string detail);
    const std::vector<TraceRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    /// FNV-1a over the serialized records; stable across platforms.
    std::uint64_t hash() const;
    /// One JSON object per line: {"t":..,"actor":..,"kind":..,"detail":..}
    void write_jsonl(const std::string& path) const;

  private:
    std::vector<TraceRecord> records_;
};

using EventId = std::uint64_t;

/// Single-threaded discrete-event engine. Events fire in (time, insertion)
/// order; all randomness flows through the engine's seeded generator so a
/// (scenario, seed) pair replays exactly.
class SimEngine {
  public:
    explicit SimEngine(std::uint64_t seed = 0);

    SimTime now() const { return now_ns_; }
    std::uint64_t seed() const { return seed_; }

    EventId schedule(SimTime delay_ns, std::string actor, EventKind kind,
                     std::function<void()> fn, std::string detail = {});

    /// Process events until the queue drains. Throws LivelockError once
    /// more than event_cap() events have fired.
    SimTime run_until_quiescent();
    /// Process events with fire time <= t_ns, then advance the clock to t_ns.
    SimTime run_until(SimTime t_ns);

    void set_event_cap(std::uint64_t cap) { event_cap_ = cap; }
    std::uint64_t event_cap() const { return event_cap_; }
    std::uint64_t events_processed() const { return processed_; }

    TraceLog& trace() { return trace_; }
    const TraceLog& trace() const { return trace_; }

    /// Uniform in [0, n); n == 0 yields 0. Fully specified arithmetic so
    /// replays are identical on any platform.
    std::uint64_t rand_below(std::uint64_t n);
    /// Uniform double in [0, 1).
    double rand_unit();

  private:
    struct Pending {
        SimTime fire_at;
        EventId id;  // insertion order; ties fire FIFO
        std::string actor;
        EventKind kind;
        std::string detail;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Pending& a, const Pending& b) const {
            if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
            return a.id > b.id;
        }
    };

    void fire_next();

    SimTime now_ns_ = 0;
    EventId next_id_ = 0;
    std::uint64_t processed_ = 0;
    std::uint64_t event_cap_ = 50'000'000;
    std::uint64_t seed_;
    // mt19937_64 is fully specified by the standard, so draws (and therefore
    // traces) are identical across platforms. Distributions are not, which is
    // why rand_below/rand_unit do their own reduction.
    std::mt19937_64 rng_;
    std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
    TraceLog trace_;
};

}  // namespace cxlpool
