#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "cxlpool/topology.hpp"
#include "cxlpool/types.hpp"

namespace cxlpool {

enum class DeviceHealth : std::uint8_t { Healthy, Overloaded, Failed };
enum class HostLifecycle : std::uint8_t { Active, Draining, Removed };

const char* to_string(DeviceHealth h);
const char* to_string(HostLifecycle s);

struct DeviceEntry {
    HostId owner = 0;
    double load = 0;  // most recent heartbeat value, in [0, 1]
    DeviceHealth health = DeviceHealth::Healthy;
};

struct MigrationEntry {
    WorkloadId workload = 0;
    HostId host = 0;  // host the workload runs on
    DeviceId from = 0;
    DeviceId to = 0;
};

struct RebalancePlan {
    DeviceId overloaded = 0;
    std::vector<MigrationEntry> moves;
};

struct MigrationPlan {
    DeviceId failed = 0;
    std::vector<MigrationEntry> moves;
};

struct DrainPlan {
    HostId host = 0;
    std::vector<MigrationEntry> migrations;  // assignments ON the host's devices
    struct Cancelled {
        WorkloadId workload;
        DeviceId device;
    };
    std::vector<Cancelled> cancelled;  // assignments BY the host's workloads
};

/// Device-to-host assignment map plus device health and host lifecycle.
/// Every mutator leaves the safety invariant intact: no assignment ever
/// references a failed device or a device owned by a draining/removed host.
class OrchestratorState {
  public:
    explicit OrchestratorState(double load_threshold = 0.8);
    static OrchestratorState from_topology(const PodTopology& topo,
                                           double load_threshold = 0.8);

    void add_host(HostId host);  // throws DuplicateHostError unless re-adding a removed host
    void add_device(DeviceId dev, HostId owner);

    /// Picks a local device under the load threshold if the host has one,
    /// otherwise the least-loaded non-failed device in the pod (ties: lowest
    /// device id), and records the assignment.
    DeviceId allocate_device(HostId host, WorkloadId workload);

    /// Updates the device table. A load at or above the threshold marks the
    /// device overloaded and returns a plan moving just enough assignments
    /// that the projected load (linear in assignment count) drops below the
    /// threshold. The plan is already applied to the assignment map.
    std::optional<RebalancePlan> handle_heartbeat(HostId reporter, DeviceId dev, double load,
                                                  DeviceHealth reported);

    /// Marks the device failed and reassigns everything that ran on it.
    /// Throws NoDeviceAvailableError (after unassigning) when no non-failed
    /// device on an active host remains.
    MigrationPlan handle_failure(DeviceId dev);

    /// Active -> Draining: the host's devices stop being allocation targets,
    /// its workloads' assignments are cancelled, and assignments on its
    /// devices are migrated. An idle host is removed immediately; otherwise
    /// call mark_drain_complete once the migrations have executed.
    DrainPlan hot_remove_host(HostId host);
    void mark_drain_complete(HostId host);

    void hot_add_host(HostId host, const std::vector<DeviceId>& devices);

    void release(HostId host, WorkloadId workload);  // drop one assignment

    // queries
    std::optional<DeviceId> assignment(HostId host, WorkloadId workload) const;
    const std::map<std::pair<HostId, WorkloadId>, DeviceId>& assignments() const {
        return assignments_;
    }
    const DeviceEntry& device(DeviceId dev) const;
    const std::map<DeviceId, DeviceEntry>& devices() const { return device_table_; }
    HostLifecycle host_state(HostId host) const;
    double load_threshold() const { return load_threshold_; }
    std::size_t assignment_count_on(DeviceId dev) const;

    /// Internal consistency assertion; runs after every mutation.
    void check_invariants() const;

  private:
    bool allocatable(DeviceId dev) const;
    DeviceId pick_device(HostId host, std::optional<DeviceId> exclude) const;

    double load_threshold_;
    std::map<std::pair<HostId, WorkloadId>, DeviceId> assignments_;
    std::map<DeviceId, DeviceEntry> device_table_;
    std::map<HostId, HostLifecycle> host_table_;
};

// ---------------------------------------------------------------------------
// Control messages: everything the orchestrator and agents say to each other
// fits one 54-byte channel payload and round-trips bit-exactly.

struct AllocateRequest {
    HostId host;
    WorkloadId workload;
};
struct AllocateReply {
    WorkloadId workload;
    DeviceId device;
};
struct HeartbeatMsg {
    HostId host;
    DeviceId device;
    float load;
    DeviceHealth health;
};
struct FailureReportMsg {
    HostId host;
    DeviceId device;
};
struct MigrateCommand {
    WorkloadId workload;
    DeviceId from;
    DeviceId to;
};
struct MigrateDone {
    WorkloadId workload;
    DeviceId to;
};
struct HotRemoveRequest {
    HostId host;
};
struct DrainCompleteMsg {
    HostId host;
};
struct HotAddAnnounce {
    HostId host;
};

using ControlMessage =
    std::variant<AllocateRequest, AllocateReply, HeartbeatMsg, FailureReportMsg, MigrateCommand,
                 MigrateDone, HotRemoveRequest, DrainCompleteMsg, HotAddAnnounce>;

std::vector<std::byte> encode_control(const ControlMessage& msg);
ControlMessage decode_control(std::span<const std::byte> bytes);  // throws ParseError

}  // namespace cxlpool
