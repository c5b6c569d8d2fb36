#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxlpool/simcore.hpp"
#include "cxlpool/topology.hpp"
#include "cxlpool/types.hpp"

namespace cxlpool {

enum class IoKind : std::uint8_t { UdpTx, UdpRx, SsdRead, SsdWrite };
const char* to_string(IoKind k);

struct IoRequest {
    std::uint64_t id = 0;
    IoKind kind = IoKind::UdpTx;
    std::uint32_t size_bytes = 0;
    PoolAddr buffer = 0;
    SimTime submit_time = 0;
    SimTime complete_time = 0;  // >= submit_time once done
};

/// Store-and-forward FIFO resource: one transfer at a time, in admission
/// order. Returns the completion time of a transfer that becomes ready at
/// `ready_ns` and lasts `duration_ns`.
class LinkFifo {
  public:
    SimTime admit(SimTime ready_ns, SimTime duration_ns) {
        SimTime start = std::max(ready_ns, busy_until_);
        busy_until_ = start + duration_ns;
        return busy_until_;
    }
    SimTime busy_until() const { return busy_until_; }

  private:
    SimTime busy_until_ = 0;
};

/// Transfer duration for `bytes` at `bw_gbs` (1 GB/s == 1 byte/ns).
SimTime transfer_ns(std::uint64_t bytes, double bw_gbs);

enum class BufferPlacement : std::uint8_t { Local, Cxl };
const char* to_string(BufferPlacement p);

struct UdpBenchConfig {
    std::uint32_t pkt_bytes = 1500;          // one of 75 / 1500 / 9000 in the standard runs
    double nic_gbps = 100;                   // wire rate, gigabits/s
    BufferPlacement placement = BufferPlacement::Cxl;
    double host_cxl_bw_gbs = 60;             // aggregate pool bandwidth of the server host
    SimTime base_rtt_ns = 25'000;            // wire + stacks at zero load
    SimTime nic_base_latency_ns = 1'000;     // NIC pipeline, each transit
    SimTime app_per_pkt_ns = 100;            // echo server per-packet CPU cost
    std::vector<double> load_fractions;      // of nic_gbps; default 0.05..1.00 step 0.05
    std::uint32_t packets_per_step = 4000;   // at least; raised to 4x client count
    std::uint32_t max_clients = 8192;
    std::uint64_t seed = 1;
};

struct UdpBenchPoint {
    double offered_gbps = 0;
    double achieved_gbps = 0;
    double p50_us = 0;
    double p99_us = 0;
    BufferPlacement placement = BufferPlacement::Cxl;
};

/// Closed-loop echo benchmark against one NIC. Placement moves the TX/RX
/// payload buffers between host DDR and the CXL pool:
///   - pool-placed buffers route both DMA directions through per-direction
///     pool FIFOs at min(nic, host pool bandwidth), which is what caps
///     throughput when the pool path is narrower than the NIC;
///   - the CPU-visible placement delta is four line accesses per echo (RX
///     DMA fill, app payload read, app payload write, TX DMA fill), charged
///     as pure latency, so equal-rate stages keep saturation identical.
std::vector<UdpBenchPoint> run_udp_bench(const UdpBenchConfig& cfg,
                                         const LatencyParams& params);

/// Convenience: host_cxl_bw from a topology host.
UdpBenchConfig udp_bench_config_for(const PodTopology& topo, HostId server_host,
                                    double nic_gbps, std::uint32_t pkt_bytes,
                                    BufferPlacement placement,
                                    const LatencyParams& params);

}  // namespace cxlpool
