#include "cxlpool/simcore.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <utility>

namespace cxlpool {

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::ChannelPoll: return "ChannelPoll";
        case EventKind::DmaComplete: return "DmaComplete";
        case EventKind::DeviceDone: return "DeviceDone";
        case EventKind::Heartbeat: return "Heartbeat";
        case EventKind::FailureInject: return "FailureInject";
        case EventKind::Timer: return "Timer";
    }
    return "?";
}

void TraceLog::append(SimTime t, std::string actor, EventKind kind, std::string detail) {
    if (!records_.empty() && t < records_.back().time_ns)
        throw Error("trace time went backwards");
    records_.push_back({t, std::move(actor), kind, std::move(detail)});
}

std::uint64_t TraceLog::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    auto mix = [&h](const char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(p[i]);
            h *= 0x100000001b3ull;
        }
    };
    char buf[32];
    for (const auto& r : records_) {
        int n = std::snprintf(buf, sizeof buf, "%" PRIu64 "|", r.time_ns);
        mix(buf, static_cast<std::size_t>(n));
        mix(r.actor.data(), r.actor.size());
        mix("|", 1);
        const char* k = to_string(r.kind);
        mix(k, std::char_traits<char>::length(k));
        mix("|", 1);
        mix(r.detail.data(), r.detail.size());
        mix("\n", 1);
    }
    return h;
}

namespace {
void json_escape_into(std::string& out, const std::string& s) {
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
}
}  // namespace

void TraceLog::write_jsonl(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open trace file: " + path);
    std::string line;
    char buf[32];
    for (const auto& r : records_) {
        line.clear();
        std::snprintf(buf, sizeof buf, "%" PRIu64, r.time_ns);
        line += "{\"t\":";
        line += buf;
        line += ",\"actor\":\"";
        json_escape_into(line, r.actor);
        line += "\",\"kind\":\"";
        line += to_string(r.kind);
        line += "\",\"detail\":\"";
        json_escape_into(line, r.detail);
        line += "\"}\n";
        f << line;
    }
}

SimEngine::SimEngine(std::uint64_t seed) : seed_(seed), rng_(seed) {}

EventId SimEngine::schedule(SimTime delay_ns, std::string actor, EventKind kind,
                            std::function<void()> fn, std::string detail) {
    EventId id = next_id_++;
    queue_.push(Pending{now_ns_ + delay_ns, id, std::move(actor), kind,
                        std::move(detail), std::move(fn)});
    return id;
}

void SimEngine::fire_next() {
    // Copy out before pop: the handler may schedule new events.
    Pending ev = queue_.top();
    queue_.pop();
    now_ns_ = ev.fire_at;
    trace_.append(now_ns_, ev.actor, ev.kind, ev.detail);
    if (++processed_ > event_cap_)
        throw LivelockError("event cap exceeded (" + std::to_string(event_cap_) + ")");
    if (ev.fn) ev.fn();
}

SimTime SimEngine::run_until_quiescent() {
    while (!queue_.empty()) fire_next();
    return now_ns_;
}

SimTime SimEngine::run_until(SimTime t_ns) {
    while (!queue_.empty() && queue_.top().fire_at <= t_ns) fire_next();
    if (t_ns > now_ns_) now_ns_ = t_ns;
    return now_ns_;
}

std::uint64_t SimEngine::rand_below(std::uint64_t n) {
    if (n == 0) return 0;
    return rng_() % n;
}

double SimEngine::rand_unit() {
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

}  // namespace cxlpool
