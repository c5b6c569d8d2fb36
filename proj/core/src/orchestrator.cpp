#include "cxlpool/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cxlpool {

const char* to_string(DeviceHealth h) {
    switch (h) {
        case DeviceHealth::Healthy: return "healthy";
        case DeviceHealth::Overloaded: return "overloaded";
        case DeviceHealth::Failed: return "failed";
    }
    return "?";
}

const char* to_string(HostLifecycle s) {
    switch (s) {
        case HostLifecycle::Active: return "active";
        case HostLifecycle::Draining: return "draining";
        case HostLifecycle::Removed: return "removed";
    }
    return "?";
}

OrchestratorState::OrchestratorState(double load_threshold) : load_threshold_(load_threshold) {
    if (load_threshold <= 0 || load_threshold > 1)
        throw DomainError("load_threshold must be in (0, 1]");
}

OrchestratorState OrchestratorState::from_topology(const PodTopology& topo,
                                                   double load_threshold) {
    OrchestratorState st(load_threshold);
    for (const auto& h : topo.hosts) st.add_host(h.id);
    for (const auto& d : topo.devices) st.add_device(d.id, d.attached_host_id);
    return st;
}

void OrchestratorState::add_host(HostId host) {
    auto it = host_table_.find(host);
    if (it != host_table_.end() && it->second != HostLifecycle::Removed)
        throw DuplicateHostError("host " + std::to_string(host) + " already present");
    host_table_[host] = HostLifecycle::Active;
}

void OrchestratorState::add_device(DeviceId dev, HostId owner) {
    if (!host_table_.count(owner))
        throw UnknownHostError("device owner host " + std::to_string(owner));
    if (device_table_.count(dev))
        throw DomainError("device " + std::to_string(dev) + " already present");
    device_table_[dev] = DeviceEntry{owner, 0.0, DeviceHealth::Healthy};
}

bool OrchestratorState::allocatable(DeviceId dev) const {
    const auto& e = device_table_.at(dev);
    if (e.health == DeviceHealth::Failed) return false;
    return host_table_.at(e.owner) == HostLifecycle::Active;
}

DeviceId OrchestratorState::pick_device(HostId host, std::optional<DeviceId> exclude) const {
    // Local device below the load threshold first; otherwise least-utilized
    // in the pod. Ties break toward the lowest device id, which makes the
    // choice a total order.
    std::optional<DeviceId> best_local;
    std::optional<DeviceId> best_global;
    for (const auto& [id, e] : device_table_) {
        if (exclude && id == *exclude) continue;
        if (!allocatable(id)) continue;
        if (e.owner == host && e.load < load_threshold_) {
            if (!best_local || e.load < device_table_.at(*best_local).load) best_local = id;
        }
        if (!best_global || e.load < device_table_.at(*best_global).load) best_global = id;
    }
    if (best_local) return *best_local;
    if (best_global) return *best_global;
    throw NoDeviceAvailableError("no allocatable device in the pod");
}

DeviceId OrchestratorState::allocate_device(HostId host, WorkloadId workload) {
    auto hs = host_table_.find(host);
    if (hs == host_table_.end()) throw UnknownHostError("host " + std::to_string(host));
    if (hs->second != HostLifecycle::Active)
        throw DomainError("host " + std::to_string(host) + " is " + to_string(hs->second));
    if (assignments_.count({host, workload}))
        throw DomainError("workload " + std::to_string(workload) + " already has a device");
    DeviceId dev = pick_device(host, std::nullopt);
    assignments_[{host, workload}] = dev;
    check_invariants();
    return dev;
}

std::optional<RebalancePlan> OrchestratorState::handle_heartbeat(HostId, DeviceId dev,
                                                                 double load,
                                                                 DeviceHealth reported) {
    auto it = device_table_.find(dev);
    if (it == device_table_.end())
        throw UnknownDeviceError("device " + std::to_string(dev));
    if (load < 0 || load > 1) throw DomainError("load must be in [0, 1]");
    if (it->second.health == DeviceHealth::Failed) return std::nullopt;  // stays failed
    it->second.load = load;
    if (reported == DeviceHealth::Failed) {
        // failure handling (and the migrations it forces) goes through
        // handle_failure; a heartbeat only carries the news
        return std::nullopt;
    }
    if (load < load_threshold_) {
        it->second.health = DeviceHealth::Healthy;
        return std::nullopt;
    }
    it->second.health = DeviceHealth::Overloaded;

    // Move the fewest assignments such that the projected load clears the
    // threshold, assuming load scales linearly with assignment count.
    std::vector<std::pair<HostId, WorkloadId>> on_dev;
    for (const auto& [key, d] : assignments_)
        if (d == dev) on_dev.push_back(key);
    RebalancePlan plan;
    plan.overloaded = dev;
    if (on_dev.empty()) return plan;
    const double per_assignment = load / static_cast<double>(on_dev.size());
    std::size_t moves = static_cast<std::size_t>(
        std::ceil((load - load_threshold_) / per_assignment));
    moves = std::min(std::max<std::size_t>(moves, 1), on_dev.size());
    for (std::size_t i = 0; i < moves; ++i) {
        auto [host, wl] = on_dev[i];
        DeviceId to;
        try {
            to = pick_device(host, dev);
        } catch (const NoDeviceAvailableError&) {
            break;  // nowhere to shed load; keep the assignment
        }
        assignments_[{host, wl}] = to;
        plan.moves.push_back({wl, host, dev, to});
    }
    check_invariants();
    return plan;
}

MigrationPlan OrchestratorState::handle_failure(DeviceId dev) {
    auto it = device_table_.find(dev);
    if (it == device_table_.end())
        throw UnknownDeviceError("device " + std::to_string(dev));
    it->second.health = DeviceHealth::Failed;

    std::vector<std::pair<HostId, WorkloadId>> on_dev;
    for (const auto& [key, d] : assignments_)
        if (d == dev) on_dev.push_back(key);

    MigrationPlan plan;
    plan.failed = dev;
    for (const auto& key : on_dev) assignments_.erase(key);
    check_invariants();
    for (const auto& [host, wl] : on_dev) {
        DeviceId to = pick_device(host, std::nullopt);  // throws NoDeviceAvailableError
        assignments_[{host, wl}] = to;
        plan.moves.push_back({wl, host, dev, to});
    }
    check_invariants();
    return plan;
}

DrainPlan OrchestratorState::hot_remove_host(HostId host) {
    auto hs = host_table_.find(host);
    if (hs == host_table_.end()) throw UnknownHostError("host " + std::to_string(host));
    if (hs->second != HostLifecycle::Active)
        throw DomainError("host " + std::to_string(host) + " is " + to_string(hs->second));
    hs->second = HostLifecycle::Draining;

    DrainPlan plan;
    plan.host = host;

    // Assignments made by this host's workloads: the platform migrates the
    // VMs themselves, so the device assignments are simply released.
    for (auto it = assignments_.begin(); it != assignments_.end();) {
        if (it->first.first == host) {
            plan.cancelled.push_back({it->first.second, it->second});
            it = assignments_.erase(it);
        } else {
            ++it;
        }
    }
    // Assignments on this host's devices migrate to other active hosts.
    std::vector<std::pair<HostId, WorkloadId>> to_move;
    for (const auto& [key, d] : assignments_)
        if (device_table_.at(d).owner == host) to_move.push_back(key);
    for (const auto& key : to_move) {
        DeviceId from = assignments_.at(key);
        assignments_.erase(key);
        DeviceId to = pick_device(key.first, std::nullopt);
        assignments_[key] = to;
        plan.migrations.push_back({key.second, key.first, from, to});
    }
    if (plan.migrations.empty()) hs->second = HostLifecycle::Removed;
    check_invariants();
    return plan;
}

void OrchestratorState::mark_drain_complete(HostId host) {
    auto hs = host_table_.find(host);
    if (hs == host_table_.end()) throw UnknownHostError("host " + std::to_string(host));
    if (hs->second != HostLifecycle::Draining)
        throw DomainError("host " + std::to_string(host) + " is not draining");
    hs->second = HostLifecycle::Removed;
    check_invariants();
}

void OrchestratorState::hot_add_host(HostId host, const std::vector<DeviceId>& devices) {
    add_host(host);
    for (DeviceId d : devices) add_device(d, host);
    check_invariants();
}

void OrchestratorState::release(HostId host, WorkloadId workload) {
    assignments_.erase({host, workload});
}

std::optional<DeviceId> OrchestratorState::assignment(HostId host, WorkloadId workload) const {
    auto it = assignments_.find({host, workload});
    if (it == assignments_.end()) return std::nullopt;
    return it->second;
}

const DeviceEntry& OrchestratorState::device(DeviceId dev) const {
    auto it = device_table_.find(dev);
    if (it == device_table_.end())
        throw UnknownDeviceError("device " + std::to_string(dev));
    return it->second;
}

HostLifecycle OrchestratorState::host_state(HostId host) const {
    auto it = host_table_.find(host);
    if (it == host_table_.end()) throw UnknownHostError("host " + std::to_string(host));
    return it->second;
}

std::size_t OrchestratorState::assignment_count_on(DeviceId dev) const {
    std::size_t n = 0;
    for (const auto& [_, d] : assignments_)
        if (d == dev) n++;
    return n;
}

void OrchestratorState::check_invariants() const {
    for (const auto& [key, dev] : assignments_) {
        const auto& e = device_table_.at(dev);
        if (e.health == DeviceHealth::Failed)
            throw Error("invariant: assignment references failed device " + std::to_string(dev));
        if (host_table_.at(e.owner) != HostLifecycle::Active)
            throw Error("invariant: assignment references device on non-active host " +
                        std::to_string(e.owner));
        if (host_table_.at(key.first) == HostLifecycle::Removed)
            throw Error("invariant: removed host " + std::to_string(key.first) +
                        " still holds assignments");
    }
    for (const auto& [id, e] : device_table_)
        if (e.load < 0 || e.load > 1)
            throw Error("invariant: device " + std::to_string(id) + " load out of [0,1]");
}

// --------------------------- wire format ----------------------------------
// [0] kind tag, then little-endian fixed-width fields. Everything fits well
// under the 54-byte channel payload.

namespace {

enum class MsgKind : std::uint8_t {
    AllocateRequest = 1,
    AllocateReply = 2,
    Heartbeat = 3,
    FailureReport = 4,
    MigrateCommand = 5,
    MigrateDone = 6,
    HotRemoveRequest = 7,
    DrainComplete = 8,
    HotAddAnnounce = 9,
};

struct Writer {
    std::vector<std::byte> out;
    void u8(std::uint8_t v) { out.push_back(std::byte{v}); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(std::byte(std::uint8_t(v >> (8 * i))));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
};

struct Reader {
    std::span<const std::byte> in;
    std::size_t pos = 0;
    std::uint8_t u8() {
        if (pos + 1 > in.size()) throw ParseError("control message truncated");
        return std::uint8_t(in[pos++]);
    }
    std::uint32_t u32() {
        if (pos + 4 > in.size()) throw ParseError("control message truncated");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(in[pos++])) << (8 * i);
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

std::vector<std::byte> encode_control(const ControlMessage& msg) {
    Writer w;
    std::visit(
        [&w](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, AllocateRequest>) {
                w.u8(std::uint8_t(MsgKind::AllocateRequest));
                w.u32(m.host);
                w.u32(m.workload);
            } else if constexpr (std::is_same_v<T, AllocateReply>) {
                w.u8(std::uint8_t(MsgKind::AllocateReply));
                w.u32(m.workload);
                w.u32(m.device);
            } else if constexpr (std::is_same_v<T, HeartbeatMsg>) {
                w.u8(std::uint8_t(MsgKind::Heartbeat));
                w.u32(m.host);
                w.u32(m.device);
                w.f32(m.load);
                w.u8(std::uint8_t(m.health));
            } else if constexpr (std::is_same_v<T, FailureReportMsg>) {
                w.u8(std::uint8_t(MsgKind::FailureReport));
                w.u32(m.host);
                w.u32(m.device);
            } else if constexpr (std::is_same_v<T, MigrateCommand>) {
                w.u8(std::uint8_t(MsgKind::MigrateCommand));
                w.u32(m.workload);
                w.u32(m.from);
                w.u32(m.to);
            } else if constexpr (std::is_same_v<T, MigrateDone>) {
                w.u8(std::uint8_t(MsgKind::MigrateDone));
                w.u32(m.workload);
                w.u32(m.to);
            } else if constexpr (std::is_same_v<T, HotRemoveRequest>) {
                w.u8(std::uint8_t(MsgKind::HotRemoveRequest));
                w.u32(m.host);
            } else if constexpr (std::is_same_v<T, DrainCompleteMsg>) {
                w.u8(std::uint8_t(MsgKind::DrainComplete));
                w.u32(m.host);
            } else {
                static_assert(std::is_same_v<T, HotAddAnnounce>);
                w.u8(std::uint8_t(MsgKind::HotAddAnnounce));
                w.u32(m.host);
            }
        },
        msg);
    return std::move(w.out);
}

ControlMessage decode_control(std::span<const std::byte> bytes) {
    Reader r{bytes};
    switch (MsgKind(r.u8())) {
        case MsgKind::AllocateRequest: {
            AllocateRequest m{};
            m.host = r.u32();
            m.workload = r.u32();
            return m;
        }
        case MsgKind::AllocateReply: {
            AllocateReply m{};
            m.workload = r.u32();
            m.device = r.u32();
            return m;
        }
        case MsgKind::Heartbeat: {
            HeartbeatMsg m{};
            m.host = r.u32();
            m.device = r.u32();
            m.load = r.f32();
            m.health = DeviceHealth(r.u8());
            return m;
        }
        case MsgKind::FailureReport: {
            FailureReportMsg m{};
            m.host = r.u32();
            m.device = r.u32();
            return m;
        }
        case MsgKind::MigrateCommand: {
            MigrateCommand m{};
            m.workload = r.u32();
            m.from = r.u32();
            m.to = r.u32();
            return m;
        }
        case MsgKind::MigrateDone: {
            MigrateDone m{};
            m.workload = r.u32();
            m.to = r.u32();
            return m;
        }
        case MsgKind::HotRemoveRequest:
            return HotRemoveRequest{r.u32()};
        case MsgKind::DrainComplete:
            return DrainCompleteMsg{r.u32()};
        case MsgKind::HotAddAnnounce:
            return HotAddAnnounce{r.u32()};
    }
    throw ParseError("unknown control message kind");
}

}  // namespace cxlpool
