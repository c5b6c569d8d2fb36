#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cxlpool/channel.hpp"
#include "cxlpool/datapath.hpp"
#include "cxlpool/orchestrator.hpp"
#include "cxlpool/shmem.hpp"
#include "cxlpool/simcore.hpp"
#include "cxlpool/topology.hpp"
#include "cxlpool/types.hpp"

namespace cxlpool {

constexpr DeviceId kNoDevice = 0xffffffffu;

enum class PostStatus : std::uint8_t { Ok, RingFull, DeviceFailed, Quiescing, NotAttached };
const char* to_string(PostStatus s);

enum class MmioOp : std::uint8_t { ReadReg, WriteReg, Doorbell };

struct PodSimConfig {
    PodTopology topology;
    LatencyParams params;
    std::size_t shared_segment_bytes = 32u << 20;
    std::size_t private_segment_bytes = 4u << 20;
    std::uint32_t control_channel_slots = 64;
    std::uint32_t ring_slots = 1024;     // descriptor and completion rings
    std::uint32_t doorbell_slots = 256;
    SimTime agent_tick_ns = 100'000;             // agent control loop
    SimTime orch_tick_ns = 1'000'000;            // orchestrator message pump
    SimTime heartbeat_interval_ns = 10'000'000;
    double load_threshold = 0.8;
    SimTime echo_rtt_ns = 30'000;  // udp_tx wire + peer turnaround, round trip
};

/// Rings, doorbell, and reply channels for one device as seen by one user
/// host. Remote attachments place everything in the shared segment and
/// forward doorbells/MMIO over a channel to the owner's agent; a local
/// attachment keeps the rings in the user's private segment and pokes the
/// device registers directly.
struct VirtualDevice {
    DeviceId id = 0;
    HostId owner = 0;
    HostId user = 0;
    bool remote = false;
    bool pool_rings = false;  // rings in the shared segment (all remote attachments)
    ChannelSender desc_tx;      // user -> device
    ChannelReceiver desc_rx;
    ChannelSender comp_tx;      // device -> user
    ChannelReceiver comp_rx;
    // remote only:
    std::optional<ChannelSender> doorbell_tx;    // user -> owner agent
    std::optional<ChannelReceiver> doorbell_rx;
    std::optional<ChannelSender> mmio_reply_tx;  // owner agent -> user
    std::optional<ChannelReceiver> mmio_reply_rx;
};

struct WorkloadStats {
    std::uint64_t submitted = 0;  // accepted posts
    std::uint64_t completed = 0;
    std::uint64_t cancelled = 0;
    std::uint64_t rejected = 0;   // RingFull / DeviceFailed / Quiescing posts
    std::vector<IoRequest> log;   // completed requests, in completion order

    SimTime latency(std::size_t i) const {
        return log.at(i).complete_time - log.at(i).submit_time;
    }
};

struct TimelineEvent {
    SimTime t_ns = 0;
    std::string event;
    std::optional<WorkloadId> workload;
    std::optional<DeviceId> device;
};

/// One pod under simulation: the shared region with its per-host segments,
/// the orchestrator actor on host 0, a pooling agent per host, virtual
/// devices, and periodic workloads. All orchestrator<->agent traffic runs
/// through 64-byte control messages on shared-memory channels allocated in a
/// fixed order at boot (orchestrator->agent then agent->orchestrator, hosts
/// in id order), which is how agents find their channels.
class PodSim {
  public:
    PodSim(PodSimConfig cfg, SimEngine& eng);

    /// Registers a periodic workload; it requests a device at start_ns via
    /// its host agent and then posts one I/O every period_ns. max_ios = 0
    /// runs until the simulation stops issuing.
    WorkloadId add_workload(HostId host, IoKind kind, std::uint32_t io_bytes,
                            SimTime period_ns, std::uint32_t max_ios,
                            SimTime start_ns = 0);

    void inject_device_failure(DeviceId dev, SimTime at_ns);
    void kill_agent(HostId host, SimTime at_ns);  // agent goes silent (heartbeats stop)
    void request_hot_remove(HostId host, SimTime at_ns);
    void request_hot_add(const HostSpec& host, const std::vector<LinkSpec>& links,
                         const std::vector<PcieDeviceSpec>& devices, SimTime at_ns);

    /// Direct datapath entry points (also used by the workload actors).
    VirtualDevice& attach(HostId host, WorkloadId wl, DeviceId dev);
    PostStatus post_io(WorkloadId wl);
    /// Forwards a register access to the owning host. done(elapsed_ns) fires
    /// when the op (and, for reads, its reply) lands. Throws ChannelDownError
    /// if the owner was removed or its device torn down.
    void forward_mmio(WorkloadId wl, MmioOp op, std::function<void(SimTime)> done);

    void start();  // schedule boot; call once before running the engine

    const OrchestratorState& orchestrator() const { return orch_state_; }
    /// Direct state access for tests and synchronous setups that bypass the
    /// message loop.
    OrchestratorState& orchestrator_mutable() { return orch_state_; }
    const WorkloadStats& stats(WorkloadId wl) const;
    std::optional<DeviceId> attached_device(WorkloadId wl) const;
    const std::vector<TimelineEvent>& timeline() const { return timeline_; }
    SharedRegion& region() { return *region_; }
    SimEngine& engine() { return eng_; }
    const LatencyParams& params() const { return params_; }

    /// Safety invariant, checked after every control-plane transition and
    /// callable from tests.
    void check_safety() const;

  private:
    struct DeviceState {
        PcieDeviceSpec spec;
        bool failed = false;
        bool quiescing = false;
        bool failure_reported = false;
        LinkFifo service;
        SimTime busy_since_hb = 0;  // service-stage occupancy in the heartbeat window
        SimTime last_hb_sent = 0;
        std::vector<std::uint64_t> in_flight;  // request ids
    };
    struct AgentState {
        HostId host = 0;
        bool dead = false;
        ChannelSender to_orch;
        ChannelReceiver from_orch;
        std::deque<MigrateCommand> pending_migrations;
    };
    struct Workload {
        WorkloadId id = 0;
        HostId host = 0;
        IoKind kind = IoKind::SsdWrite;
        std::uint32_t io_bytes = 0;
        SimTime period_ns = 0;
        std::uint32_t max_ios = 0;
        SimTime start_ns = 0;
        std::uint32_t issued = 0;
        bool halted = false;
        std::optional<DeviceId> device;
        std::unique_ptr<VirtualDevice> vdev;
        PoolAddr buffer = 0;
        std::size_t buffer_bytes = 0;
        WorkloadStats stats;
    };
    struct RequestState {
        IoRequest io;
        WorkloadId workload = 0;
        DeviceId device = 0;
        bool cancelled = false;
    };

    void note(const std::string& event, std::optional<WorkloadId> wl,
              std::optional<DeviceId> dev);
    SimTime pool_write_ns() const { return params_.cxl_write_ns; }
    SimTime pool_read_ns() const { return params_.cxl_read_ns; }
    SimTime ring_write_ns(const VirtualDevice& v) const;
    SimTime ring_read_ns(const VirtualDevice& v) const;
    SimTime poll_slack();
    SimTime channel_leg();  // one pool write + poll slack + one pool read

    void orch_tick();
    void orch_handle(const ControlMessage& msg);
    void orch_send(HostId host, const ControlMessage& msg);
    void orch_plan_moves(const std::vector<MigrationEntry>& moves);
    void orch_fail_device(DeviceId dev, bool via_agent_handshake);
    void cancel_in_flight(DeviceState& ds);
    void agent_tick(HostId host);
    void agent_heartbeat(HostId host);
    void workload_tick(WorkloadId wl);
    void detach_workload(Workload& w, const char* why);
    void finish_attach(Workload& w, DeviceId dev);

    LinkFifo& pool_read_fifo(HostId host) { return pool_rd_[host]; }
    LinkFifo& pool_write_fifo(HostId host) { return pool_wr_[host]; }

    PodSimConfig cfg_;
    SimEngine& eng_;
    LatencyParams params_;  // effective (switch penalty folded in)
    std::unique_ptr<SharedRegion> region_;
    std::unique_ptr<PoolAllocator> alloc_;
    OrchestratorState orch_state_;
    std::map<HostId, ChannelSender> orch_tx_;    // orchestrator -> agent
    std::map<HostId, ChannelReceiver> orch_rx_;  // agent -> orchestrator
    std::vector<std::pair<HostId, ControlMessage>> pending_orch_sends_;
    std::map<HostId, AgentState> agents_;
    std::map<DeviceId, DeviceState> devices_;
    std::map<WorkloadId, Workload> workloads_;
    std::map<HostId, LinkFifo> pool_rd_, pool_wr_;
    std::map<DeviceId, SimTime> last_hb_seen_;  // orchestrator's view
    std::map<std::uint64_t, RequestState> requests_;
    std::map<HostId, std::vector<MigrationEntry>> drain_pending_;  // hot-remove bookkeeping
    std::vector<TimelineEvent> timeline_;
    WorkloadId next_workload_ = 1;
    std::uint64_t next_request_ = 1;
    bool started_ = false;
};

}  // namespace cxlpool
