#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cxlpool/types.hpp"

namespace cxlpool {

/// Timing and bandwidth knobs for the pod. All latencies in nanoseconds,
/// bandwidth in GB/s (1 GB/s == 1 byte/ns). The defaults place CXL reads at
/// 2.27x local DDR reads and one x8 link at 30 GB/s.
struct LatencyParams {
    std::uint64_t ddr_read_ns = 110;
    std::uint64_t ddr_write_ns = 110;
    std::uint64_t cxl_read_ns = 250;
    std::uint64_t cxl_write_ns = 300;
    std::uint64_t switch_extra_ns = 250;  // added to every pool access in switched pods
    std::uint64_t mmio_ns = 150;          // device register access
    std::uint64_t poll_interval_ns = 100; // receiver polling period
    double lane_bw_gbs = 3.75;            // effective per-lane bandwidth

    // Hosts interleave across links at this granularity; aggregation across
    // links is modeled as linear.
    static constexpr std::uint32_t kInterleaveBytes = 256;
    // Measured idle load-to-use penalty of a current pooled-memory controller
    // relative to DDR5; the default read latencies sit inside the same band.
    static constexpr double kIdleLatencyMultiplier = 2.15;

    void validate() const;  // throws ValidationError
};

enum class PodKind : std::uint8_t { MhdDirect, Switched };
enum class DeviceKind : std::uint8_t { Nic, Ssd, Accelerator };

const char* to_string(PodKind k);
const char* to_string(DeviceKind k);

struct HostSpec {
    HostId id = 0;
    std::uint32_t cpu_sockets = 1;
    double local_ddr_gb = 0;
};

struct MhdSpec {
    MhdId id = 0;
    double capacity_gb = 0;
    std::uint32_t port_count = 20;  // ports available for host links
};

struct LinkSpec {
    HostId host_id = 0;
    MhdId mhd_id = 0;
    std::uint32_t lane_width = 8;  // one of 1,2,4,8,16
};

struct PcieDeviceSpec {
    DeviceId id = 0;
    HostId attached_host_id = 0;
    DeviceKind kind = DeviceKind::Nic;
    double device_bw_gbs = 0;
    std::uint64_t base_latency_ns = 0;
};

struct PodTopology {
    std::vector<HostSpec> hosts;
    std::vector<MhdSpec> mhds;
    std::vector<LinkSpec> links;
    std::vector<PcieDeviceSpec> devices;
    PodKind pod_kind = PodKind::MhdDirect;

    const HostSpec* find_host(HostId id) const;
    const MhdSpec* find_mhd(MhdId id) const;
    const PcieDeviceSpec* find_device(DeviceId id) const;
    std::uint32_t host_total_lanes(HostId id) const;
};

struct Violation {
    std::string entity;   // "link[3]", "mhd 1", ...
    std::string message;
};

/// Empty result means every topology invariant holds. Violations are data,
/// not faults: a broken scenario file should list everything wrong at once.
std::vector<Violation> validate_topology(const PodTopology& topo);

/// Effective latencies for a pod: switched pods pay switch_extra_ns on every
/// pool read and write, MHD-direct pods pay nothing extra.
LatencyParams effective_params(const LatencyParams& base, PodKind kind);

/// Lanes needed to carry bw_gbs. Single-link mode rounds up to the next
/// power-of-two width in {1,2,4,8,16} (links are only sold in those widths)
/// and throws SingleLinkTooNarrowError beyond x16; aggregate mode is a plain
/// ceiling since interleaved lane sets are not width-constrained.
std::uint32_t required_lanes(double bw_gbs, bool aggregate_mode,
                             const LatencyParams& params = {});

/// Sum of lane_width * lane_bw_gbs over the host's links.
double host_cxl_bandwidth(const PodTopology& topo, HostId host,
                          const LatencyParams& params = {});

/// Number of distinct reachable MHDs (lambda). Links into MHDs listed in
/// failed_mhds are ignored.
std::uint32_t path_redundancy(const PodTopology& topo, HostId host,
                              const std::set<MhdId>& failed_mhds = {});

struct DeviceFeasibility {
    DeviceId device_id = 0;
    DeviceKind kind = DeviceKind::Nic;
    double device_bw_gbs = 0;
    std::optional<std::uint32_t> single_link_lanes;  // nullopt: beyond one x16 link
    std::uint32_t aggregate_lanes = 0;
    bool feasible_on_attached_host = false;
};

struct HostBudget {
    HostId host_id = 0;
    std::uint32_t total_lanes = 0;
    double cxl_bw_gbs = 0;
    std::uint32_t redundancy = 0;
};

struct HarvestCase {
    double total_device_bw_gbs = 0;
    std::uint32_t lanes_needed = 0;   // aggregate-mode ceiling
    std::uint32_t max_host_lanes = 0;
    bool feasible = false;
};

/// The lane-budget arithmetic for the two pooling use cases: driving one
/// device over a single link, and one host harvesting every device at once.
struct FeasibilityReport {
    std::vector<DeviceFeasibility> devices;
    std::vector<HostBudget> hosts;
    HarvestCase harvest_all;
};

FeasibilityReport make_feasibility_report(const PodTopology& topo,
                                          const LatencyParams& params = {});

}  // namespace cxlpool
