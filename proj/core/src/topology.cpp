#include "cxlpool/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cxlpool {

const char* to_string(PodKind k) {
    return k == PodKind::MhdDirect ? "mhd_direct" : "switched";
}

const char* to_string(DeviceKind k) {
    switch (k) {
        case DeviceKind::Nic: return "nic";
        case DeviceKind::Ssd: return "ssd";
        case DeviceKind::Accelerator: return "accelerator";
    }
    return "?";
}

void LatencyParams::validate() const {
    if (lane_bw_gbs < 0) throw ValidationError("lane_bw_gbs must be >= 0");
    if (ddr_read_ns == 0) throw ValidationError("ddr_read_ns must be > 0");
}

const HostSpec* PodTopology::find_host(HostId id) const {
    for (const auto& h : hosts)
        if (h.id == id) return &h;
    return nullptr;
}

const MhdSpec* PodTopology::find_mhd(MhdId id) const {
    for (const auto& m : mhds)
        if (m.id == id) return &m;
    return nullptr;
}

const PcieDeviceSpec* PodTopology::find_device(DeviceId id) const {
    for (const auto& d : devices)
        if (d.id == id) return &d;
    return nullptr;
}

std::uint32_t PodTopology::host_total_lanes(HostId id) const {
    std::uint32_t lanes = 0;
    for (const auto& l : links)
        if (l.host_id == id) lanes += l.lane_width;
    return lanes;
}

namespace {
bool valid_lane_width(std::uint32_t w) {
    return w == 1 || w == 2 || w == 4 || w == 8 || w == 16;
}
}  // namespace

std::vector<Violation> validate_topology(const PodTopology& topo) {
    std::vector<Violation> out;
    std::map<MhdId, std::uint32_t> links_per_mhd;

    for (std::size_t i = 0; i < topo.links.size(); ++i) {
        const auto& l = topo.links[i];
        const std::string ent = "link[" + std::to_string(i) + "]";
        if (!topo.find_host(l.host_id))
            out.push_back({ent, "references unknown host " + std::to_string(l.host_id)});
        if (!topo.find_mhd(l.mhd_id))
            out.push_back({ent, "references unknown mhd " + std::to_string(l.mhd_id)});
        else
            links_per_mhd[l.mhd_id]++;
        if (!valid_lane_width(l.lane_width))
            out.push_back({ent, "lane_width " + std::to_string(l.lane_width) +
                                    " is not a power of two <= 16"});
    }
    for (const auto& [mhd, n] : links_per_mhd) {
        const auto* m = topo.find_mhd(mhd);
        if (m && n > m->port_count)
            out.push_back({"mhd " + std::to_string(mhd),
                           std::to_string(n) + " links exceed port_count " +
                               std::to_string(m->port_count)});
    }
    for (const auto& d : topo.devices) {
        if (!topo.find_host(d.attached_host_id))
            out.push_back({"device " + std::to_string(d.id),
                           "attached to unknown host " + std::to_string(d.attached_host_id)});
        if (d.device_bw_gbs < 0)
            out.push_back({"device " + std::to_string(d.id), "negative bandwidth"});
    }
    return out;
}

LatencyParams effective_params(const LatencyParams& base, PodKind kind) {
    LatencyParams p = base;
    if (kind == PodKind::Switched) {
        p.cxl_read_ns += p.switch_extra_ns;
        p.cxl_write_ns += p.switch_extra_ns;
    }
    return p;
}

std::uint32_t required_lanes(double bw_gbs, bool aggregate_mode, const LatencyParams& params) {
    if (bw_gbs < 0) throw DomainError("required_lanes: bw_gbs must be >= 0");
    if (params.lane_bw_gbs <= 0) throw DomainError("required_lanes: lane_bw_gbs must be > 0");
    if (aggregate_mode)
        return static_cast<std::uint32_t>(std::ceil(bw_gbs / params.lane_bw_gbs));
    for (std::uint32_t w : {1u, 2u, 4u, 8u, 16u})
        if (static_cast<double>(w) * params.lane_bw_gbs >= bw_gbs) return w;
    throw SingleLinkTooNarrowError("demand of " + std::to_string(bw_gbs) +
                                   " GB/s exceeds one x16 link");
}

double host_cxl_bandwidth(const PodTopology& topo, HostId host, const LatencyParams& params) {
    if (!topo.find_host(host))
        throw UnknownHostError("host " + std::to_string(host));
    double bw = 0;
    for (const auto& l : topo.links)
        if (l.host_id == host) bw += static_cast<double>(l.lane_width) * params.lane_bw_gbs;
    return bw;
}

std::uint32_t path_redundancy(const PodTopology& topo, HostId host,
                              const std::set<MhdId>& failed_mhds) {
    if (!topo.find_host(host))
        throw UnknownHostError("host " + std::to_string(host));
    std::set<MhdId> reachable;
    for (const auto& l : topo.links)
        if (l.host_id == host && !failed_mhds.count(l.mhd_id)) reachable.insert(l.mhd_id);
    return static_cast<std::uint32_t>(reachable.size());
}

FeasibilityReport make_feasibility_report(const PodTopology& topo, const LatencyParams& params) {
    FeasibilityReport rep;
    double total_dev_bw = 0;
    std::uint32_t max_host_lanes = 0;

    for (const auto& h : topo.hosts) {
        HostBudget b;
        b.host_id = h.id;
        b.total_lanes = topo.host_total_lanes(h.id);
        b.cxl_bw_gbs = host_cxl_bandwidth(topo, h.id, params);
        b.redundancy = path_redundancy(topo, h.id);
        max_host_lanes = std::max(max_host_lanes, b.total_lanes);
        rep.hosts.push_back(b);
    }
    for (const auto& d : topo.devices) {
        DeviceFeasibility f;
        f.device_id = d.id;
        f.kind = d.kind;
        f.device_bw_gbs = d.device_bw_gbs;
        try {
            f.single_link_lanes = required_lanes(d.device_bw_gbs, false, params);
        } catch (const SingleLinkTooNarrowError&) {
            f.single_link_lanes = std::nullopt;
        }
        f.aggregate_lanes = required_lanes(d.device_bw_gbs, true, params);
        const std::uint32_t host_lanes = topo.host_total_lanes(d.attached_host_id);
        f.feasible_on_attached_host =
            f.single_link_lanes.has_value() && *f.single_link_lanes <= host_lanes;
        total_dev_bw += d.device_bw_gbs;
        rep.devices.push_back(f);
    }
    rep.harvest_all.total_device_bw_gbs = total_dev_bw;
    rep.harvest_all.lanes_needed = required_lanes(total_dev_bw, true, params);
    rep.harvest_all.max_host_lanes = max_host_lanes;
    rep.harvest_all.feasible = rep.harvest_all.lanes_needed <= max_host_lanes;
    return rep;
}

}  // namespace cxlpool
