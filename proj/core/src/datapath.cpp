#include "cxlpool/datapath.hpp"

#include <algorithm>
#include <cmath>

#include "cxlpool/stats.hpp"

namespace cxlpool {

const char* to_string(IoKind k) {
    switch (k) {
        case IoKind::UdpTx: return "udp_tx";
        case IoKind::UdpRx: return "udp_rx";
        case IoKind::SsdRead: return "ssd_read";
        case IoKind::SsdWrite: return "ssd_write";
    }
    return "?";
}

const char* to_string(BufferPlacement p) {
    return p == BufferPlacement::Local ? "local" : "cxl";
}

SimTime transfer_ns(std::uint64_t bytes, double bw_gbs) {
    if (bw_gbs <= 0) throw DomainError("transfer_ns: bandwidth must be > 0");
    return static_cast<SimTime>(std::llround(static_cast<double>(bytes) / bw_gbs));
}

namespace {

struct BenchState {
    const UdpBenchConfig& cfg;
    const LatencyParams& params;
    SimEngine& eng;
    double nic_bw;   // GB/s
    double dma_bw;   // min(nic, pool) for pool-placed buffers, nic otherwise
    bool pooled;
    LinkFifo rx_wire, tx_wire, pool_wr, pool_rd, app;
    SimTime clk_period;   // per-client pacing interval
    std::uint64_t done_packets = 0;
    std::uint64_t done_bytes = 0;
    SimTime last_complete = 0;
    std::vector<SimTime> rtt_ns;

    SimTime fill_w() const { return pooled ? params.cxl_write_ns : params.ddr_write_ns; }
    SimTime fill_r() const { return pooled ? params.cxl_read_ns : params.ddr_read_ns; }

    /// Full server-side pipeline for one packet sent at t. All stages are
    /// FIFO store-and-forward; placement-dependent line accesses are pure
    /// latency so both placements saturate at the same stage rates.
    SimTime complete_time(SimTime t_send) {
        const std::uint64_t pkt = cfg.pkt_bytes;
        const SimTime half_wire = cfg.base_rtt_ns / 2;
        SimTime t = t_send + half_wire;
        t = rx_wire.admit(t, transfer_ns(pkt, nic_bw)) + cfg.nic_base_latency_ns;
        // RX DMA into the payload buffer
        if (pooled)
            t = pool_wr.admit(t, transfer_ns(pkt, dma_bw));
        else
            t = t + transfer_ns(pkt, dma_bw);
        t += fill_w();
        // echo application: poll for the completion, touch payload, emit reply
        t += eng.rand_below(params.poll_interval_ns);
        t = app.admit(t, cfg.app_per_pkt_ns);
        t += fill_r() + fill_w() + params.mmio_ns;  // payload in, payload out, TX doorbell
        // TX DMA out of the payload buffer
        if (pooled)
            t = pool_rd.admit(t, transfer_ns(pkt, dma_bw));
        else
            t = t + transfer_ns(pkt, dma_bw);
        t += fill_r();
        t = tx_wire.admit(t, transfer_ns(pkt, nic_bw)) + cfg.nic_base_latency_ns;
        return t + half_wire;
    }
};

struct Client {
    std::uint32_t remaining = 0;
    SimTime last_send = 0;
};

}  // namespace

std::vector<UdpBenchPoint> run_udp_bench(const UdpBenchConfig& cfg,
                                         const LatencyParams& params) {
    std::vector<double> loads = cfg.load_fractions;
    if (loads.empty())
        for (int i = 1; i <= 20; ++i) loads.push_back(0.05 * i);

    const double nic_bw = cfg.nic_gbps / 8.0;  // GB/s
    const double dma_bw = cfg.placement == BufferPlacement::Cxl
                              ? std::min(nic_bw, cfg.host_cxl_bw_gbs)
                              : nic_bw;

    // analytic zero-load RTT, used to size the closed-loop client set
    const SimTime pkt_wire = transfer_ns(cfg.pkt_bytes, nic_bw);
    const SimTime pkt_dma = transfer_ns(cfg.pkt_bytes, dma_bw);
    const SimTime zero_rtt = cfg.base_rtt_ns + 2 * (pkt_wire + cfg.nic_base_latency_ns) +
                             2 * pkt_dma + cfg.app_per_pkt_ns + params.mmio_ns +
                             2 * params.cxl_write_ns + 2 * params.cxl_read_ns +
                             params.poll_interval_ns;

    std::vector<UdpBenchPoint> points;
    for (double rho : loads) {
        const double offered_bps = rho * nic_bw;  // bytes/ns
        const SimTime t_agg = std::max<SimTime>(1, transfer_ns(cfg.pkt_bytes, offered_bps));
        std::uint32_t clients = static_cast<std::uint32_t>(
            std::min<std::uint64_t>(cfg.max_clients, 2 + (3 * zero_rtt / 2) / t_agg));
        const std::uint32_t total_packets =
            std::max(cfg.packets_per_step, 4 * clients);
        const std::uint32_t per_client = (total_packets + clients - 1) / clients;

        SimEngine eng(cfg.seed);
        BenchState st{cfg, params, eng, nic_bw, dma_bw,
                      cfg.placement == BufferPlacement::Cxl, {}, {}, {}, {}, {},
                      t_agg * clients, 0, 0, 0, {}};
        st.rtt_ns.reserve(static_cast<std::size_t>(per_client) * clients);

        std::vector<Client> cs(clients);
        // one self-rescheduling chain per client, staggered across the pacing
        // period so arrivals interleave deterministically
        std::function<void(std::uint32_t)> send_one = [&](std::uint32_t ci) {
            Client& c = cs[ci];
            const SimTime t_send = eng.now();
            c.last_send = t_send;
            const SimTime done = st.complete_time(t_send);
            eng.schedule(done - t_send, "client" + std::to_string(ci), EventKind::DmaComplete,
                         [&, ci, t_send] {
                             Client& cc = cs[ci];
                             st.rtt_ns.push_back(eng.now() - t_send);
                             st.done_packets++;
                             st.done_bytes += cfg.pkt_bytes;
                             st.last_complete = eng.now();
                             if (--cc.remaining == 0) return;
                             const SimTime next = std::max(cc.last_send + st.clk_period, eng.now());
                             eng.schedule(next - eng.now(), "client" + std::to_string(ci),
                                          EventKind::Timer, [&, ci] { send_one(ci); });
                         });
        };

        for (std::uint32_t ci = 0; ci < clients; ++ci) {
            cs[ci].remaining = per_client;
            eng.schedule(static_cast<SimTime>(ci) * t_agg, "client" + std::to_string(ci),
                         EventKind::Timer, [&send_one, ci] { send_one(ci); });
        }
        eng.run_until_quiescent();

        UdpBenchPoint p;
        p.placement = cfg.placement;
        p.offered_gbps = rho * cfg.nic_gbps;
        const SimTime span = std::max<SimTime>(st.last_complete, 1);
        p.achieved_gbps = static_cast<double>(st.done_bytes) * 8.0 /
                          static_cast<double>(span);
        p.p50_us = static_cast<double>(percentile(st.rtt_ns, 50)) / 1000.0;
        p.p99_us = static_cast<double>(percentile(st.rtt_ns, 99)) / 1000.0;
        points.push_back(p);
    }
    return points;
}

UdpBenchConfig udp_bench_config_for(const PodTopology& topo, HostId server_host,
                                    double nic_gbps, std::uint32_t pkt_bytes,
                                    BufferPlacement placement,
                                    const LatencyParams& params) {
    UdpBenchConfig cfg;
    cfg.pkt_bytes = pkt_bytes;
    cfg.nic_gbps = nic_gbps;
    cfg.placement = placement;
    cfg.host_cxl_bw_gbs = host_cxl_bandwidth(topo, server_host, params);
    return cfg;
}

}  // namespace cxlpool
