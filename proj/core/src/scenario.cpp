#include "cxlpool/scenario.hpp"

#include <cinttypes>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cxlpool/channel.hpp"
#include "cxlpool/podsim.hpp"
#include "cxlpool/stats.hpp"

namespace cxlpool {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const char* where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ValidationError(std::string(where) + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError(std::string("unknown key '") + it.key() + "' in " + where);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<T>();
}

DeviceKind parse_device_kind(const std::string& s) {
    if (s == "nic") return DeviceKind::Nic;
    if (s == "ssd") return DeviceKind::Ssd;
    if (s == "accelerator") return DeviceKind::Accelerator;
    throw ValidationError("unknown device kind '" + s + "'");
}

IoKind parse_io_kind(const std::string& s) {
    if (s == "udp_tx") return IoKind::UdpTx;
    if (s == "udp_rx") return IoKind::UdpRx;
    if (s == "ssd_read") return IoKind::SsdRead;
    if (s == "ssd_write") return IoKind::SsdWrite;
    throw ValidationError("unknown io kind '" + s + "'");
}

Resource parse_resource(const std::string& s) {
    if (s == "cores") return Resource::Cores;
    if (s == "mem") return Resource::Mem;
    if (s == "ssd") return Resource::Ssd;
    if (s == "nic") return Resource::Nic;
    throw ValidationError("unknown resource '" + s + "'");
}

PodTopology parse_topology(const json& j) {
    require_keys(j, "topology", {"pod_kind", "hosts", "mhds", "links", "devices"});
    PodTopology t;
    const std::string kind = get_or<std::string>(j, "pod_kind", "mhd_direct");
    if (kind == "mhd_direct")
        t.pod_kind = PodKind::MhdDirect;
    else if (kind == "switched")
        t.pod_kind = PodKind::Switched;
    else
        throw ValidationError("unknown pod_kind '" + kind + "'");
    for (const auto& h : j.value("hosts", json::array())) {
        require_keys(h, "host", {"id", "cpu_sockets", "local_ddr_gb"});
        t.hosts.push_back({h.at("id").get<HostId>(), get_or<std::uint32_t>(h, "cpu_sockets", 1),
                           get_or<double>(h, "local_ddr_gb", 0)});
    }
    for (const auto& m : j.value("mhds", json::array())) {
        require_keys(m, "mhd", {"id", "capacity_gb", "port_count"});
        t.mhds.push_back({m.at("id").get<MhdId>(), get_or<double>(m, "capacity_gb", 0),
                          get_or<std::uint32_t>(m, "port_count", 20)});
    }
    for (const auto& l : j.value("links", json::array())) {
        require_keys(l, "link", {"host_id", "mhd_id", "lane_width"});
        t.links.push_back({l.at("host_id").get<HostId>(), l.at("mhd_id").get<MhdId>(),
                           get_or<std::uint32_t>(l, "lane_width", 8)});
    }
    for (const auto& d : j.value("devices", json::array())) {
        require_keys(d, "device",
                     {"id", "attached_host_id", "kind", "device_bw_gbs", "base_latency_ns"});
        t.devices.push_back({d.at("id").get<DeviceId>(), d.at("attached_host_id").get<HostId>(),
                             parse_device_kind(get_or<std::string>(d, "kind", "nic")),
                             get_or<double>(d, "device_bw_gbs", 0),
                             get_or<std::uint64_t>(d, "base_latency_ns", 0)});
    }
    return t;
}

LatencyParams parse_latency(const json& j) {
    require_keys(j, "latency",
                 {"ddr_read_ns", "ddr_write_ns", "cxl_read_ns", "cxl_write_ns", "switch_extra_ns",
                  "mmio_ns", "poll_interval_ns", "lane_bw_gbs"});
    LatencyParams p;
    p.ddr_read_ns = get_or<std::uint64_t>(j, "ddr_read_ns", p.ddr_read_ns);
    p.ddr_write_ns = get_or<std::uint64_t>(j, "ddr_write_ns", p.ddr_write_ns);
    p.cxl_read_ns = get_or<std::uint64_t>(j, "cxl_read_ns", p.cxl_read_ns);
    p.cxl_write_ns = get_or<std::uint64_t>(j, "cxl_write_ns", p.cxl_write_ns);
    p.switch_extra_ns = get_or<std::uint64_t>(j, "switch_extra_ns", p.switch_extra_ns);
    p.mmio_ns = get_or<std::uint64_t>(j, "mmio_ns", p.mmio_ns);
    p.poll_interval_ns = get_or<std::uint64_t>(j, "poll_interval_ns", p.poll_interval_ns);
    p.lane_bw_gbs = get_or<double>(j, "lane_bw_gbs", p.lane_bw_gbs);
    return p;
}

ResourceVec parse_resource_vec(const json& j, const char* where) {
    require_keys(j, where, {"cores", "mem_gb", "ssd_gb", "nic_gbps"});
    ResourceVec v;
    v.cores = get_or<double>(j, "cores", 0);
    v.mem_gb = get_or<double>(j, "mem_gb", 0);
    v.ssd_gb = get_or<double>(j, "ssd_gb", 0);
    v.nic_gbps = get_or<double>(j, "nic_gbps", 0);
    return v;
}

StrandingSection parse_stranding(const json& j) {
    require_keys(j, "stranding",
                 {"host_shape", "host_count", "pooled_resources", "vm_catalog", "seed",
                  "group_sizes", "seeds", "best_fit"});
    StrandingSection s;
    if (j.contains("host_shape"))
        s.scenario.host_shape = parse_resource_vec(j.at("host_shape"), "host_shape");
    else
        s.scenario.host_shape = default_host_shape();
    s.scenario.host_count = get_or<std::uint32_t>(j, "host_count", 64);
    s.scenario.seed = get_or<std::uint64_t>(j, "seed", 1);
    s.scenario.best_fit = get_or<bool>(j, "best_fit", false);
    if (j.contains("pooled_resources"))
        for (const auto& r : j.at("pooled_resources"))
            s.scenario.pooled_resources.insert(parse_resource(r.get<std::string>()));
    else
        s.scenario.pooled_resources = {Resource::Ssd, Resource::Nic};
    if (j.contains("vm_catalog")) {
        for (const auto& v : j.at("vm_catalog")) {
            require_keys(v, "vm_type",
                         {"name", "cores", "mem_gb", "ssd_gb", "nic_gbps", "weight"});
            VmType vt;
            vt.name = get_or<std::string>(v, "name", "vm");
            vt.demand = parse_resource_vec(
                json{{"cores", get_or<double>(v, "cores", 0)},
                     {"mem_gb", get_or<double>(v, "mem_gb", 0)},
                     {"ssd_gb", get_or<double>(v, "ssd_gb", 0)},
                     {"nic_gbps", get_or<double>(v, "nic_gbps", 0)}},
                "vm_type");
            vt.weight = get_or<double>(v, "weight", 0);
            s.scenario.vm_catalog.push_back(vt);
        }
    } else {
        s.scenario.vm_catalog = default_vm_catalog();
    }
    if (j.contains("group_sizes")) {
        s.group_sizes.clear();
        for (const auto& n : j.at("group_sizes")) s.group_sizes.push_back(n.get<std::uint32_t>());
    }
    s.seeds = get_or<std::uint32_t>(j, "seeds", 20);
    return s;
}

}  // namespace

Scenario Scenario::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario JSON: ") + e.what());
    }
    try {
        require_keys(j, "scenario",
                     {"topology", "latency", "workload", "stranding", "fault_injection"});
        Scenario sc;
        if (j.contains("topology")) sc.topology = parse_topology(j.at("topology"));
        if (j.contains("latency")) sc.params = parse_latency(j.at("latency"));
        if (j.contains("workload")) {
            const json& w = j.at("workload");
            require_keys(w, "workload", {"channel_bench", "udp_bench", "failover"});
            if (w.contains("channel_bench")) {
                const json& c = w.at("channel_bench");
                require_keys(c, "channel_bench", {"capacity", "iterations"});
                sc.channel_bench = ChannelBenchSection{get_or<std::uint32_t>(c, "capacity", 64),
                                                       get_or<std::uint32_t>(c, "iterations", 10000)};
            }
            if (w.contains("udp_bench")) {
                const json& u = w.at("udp_bench");
                require_keys(u, "udp_bench",
                             {"server_host", "nic_gbps", "pkt_sizes", "base_rtt_ns",
                              "nic_base_latency_ns", "app_per_pkt_ns", "packets_per_step"});
                UdpBenchSection s;
                s.server_host = get_or<HostId>(u, "server_host", 0);
                s.nic_gbps = get_or<double>(u, "nic_gbps", 100);
                if (u.contains("pkt_sizes")) {
                    s.pkt_sizes.clear();
                    for (const auto& p : u.at("pkt_sizes"))
                        s.pkt_sizes.push_back(p.get<std::uint32_t>());
                }
                s.base_rtt_ns = get_or<std::uint64_t>(u, "base_rtt_ns", s.base_rtt_ns);
                s.nic_base_latency_ns =
                    get_or<std::uint64_t>(u, "nic_base_latency_ns", s.nic_base_latency_ns);
                s.app_per_pkt_ns = get_or<std::uint64_t>(u, "app_per_pkt_ns", s.app_per_pkt_ns);
                s.packets_per_step =
                    get_or<std::uint32_t>(u, "packets_per_step", s.packets_per_step);
                sc.udp_bench = s;
            }
            if (w.contains("failover")) {
                const json& f = w.at("failover");
                require_keys(f, "failover", {"workloads", "duration_ms", "echo_rtt_ns"});
                FailoverSection s;
                s.duration_ms = get_or<std::uint64_t>(f, "duration_ms", 200);
                s.echo_rtt_ns = get_or<std::uint64_t>(f, "echo_rtt_ns", 30'000);
                for (const auto& wl : f.value("workloads", json::array())) {
                    require_keys(wl, "failover workload", {"host", "kind", "io_bytes", "period_ns"});
                    FailoverWorkload fw;
                    fw.host = wl.at("host").get<HostId>();
                    fw.kind = parse_io_kind(get_or<std::string>(wl, "kind", "ssd_write"));
                    fw.io_bytes = get_or<std::uint32_t>(wl, "io_bytes", 4096);
                    fw.period_ns = get_or<std::uint64_t>(wl, "period_ns", 100'000);
                    s.workloads.push_back(fw);
                }
                sc.failover = s;
            }
        }
        if (j.contains("stranding")) sc.stranding = parse_stranding(j.at("stranding"));
        if (j.contains("fault_injection")) {
            for (const auto& f : j.at("fault_injection")) {
                require_keys(f, "fault", {"at_ms", "event", "device", "host"});
                FaultEvent ev;
                ev.at_ms = get_or<std::uint64_t>(f, "at_ms", 0);
                ev.event = f.at("event").get<std::string>();
                if (f.contains("device")) ev.device = f.at("device").get<DeviceId>();
                if (f.contains("host")) ev.host = f.at("host").get<HostId>();
                if (ev.event != "fail_device" && ev.event != "hot_remove" &&
                    ev.event != "kill_agent")
                    throw ValidationError("unknown fault event '" + ev.event + "'");
                sc.faults.push_back(ev);
            }
        }
        return sc;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario structure: ") + e.what());
    }
}

Scenario Scenario::load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

// ----------------------------- reporting ----------------------------------

namespace {

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

class CsvFile {
  public:
    CsvFile(const std::string& dir, const std::string& name, const std::string& header)
        : path_((std::filesystem::path(dir) / name).string()) {
        std::filesystem::create_directories(dir);
        out_.open(path_, std::ios::binary);
        if (!out_) throw Error("cannot open " + path_);
        out_ << header << "\n";
    }
    void row(const std::string& line) { out_ << line << "\n"; }
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ofstream out_;
};

}  // namespace

std::string render_feasibility(const FeasibilityReport& rep) {
    std::string s;
    s += "device  kind         bw_gbs  single_lanes  agg_lanes  attached_ok\n";
    for (const auto& d : rep.devices) {
        s += fmt("%-7u %-12s %7.2f  %12s  %9u  %s\n", d.device_id, to_string(d.kind),
                 d.device_bw_gbs,
                 d.single_link_lanes ? std::to_string(*d.single_link_lanes).c_str() : ">16",
                 d.aggregate_lanes, d.feasible_on_attached_host ? "yes" : "no");
    }
    s += "host    lanes  cxl_gbs  redundancy\n";
    for (const auto& h : rep.hosts)
        s += fmt("%-7u %5u  %7.2f  %10u\n", h.host_id, h.total_lanes, h.cxl_bw_gbs, h.redundancy);
    s += fmt("harvest-all: %.2f GB/s over %u lanes (max host lanes %u) -> %s\n",
             rep.harvest_all.total_device_bw_gbs, rep.harvest_all.lanes_needed,
             rep.harvest_all.max_host_lanes,
             rep.harvest_all.feasible ? "feasible" : "infeasible");
    return s;
}

std::string feasibility_csv(const FeasibilityReport& rep) {
    std::string s = "row,id,kind,bw_gbs,single_link_lanes,aggregate_lanes,total_lanes,cxl_bw_gbs,"
                    "redundancy,feasible\n";
    for (const auto& d : rep.devices)
        s += fmt("device,%u,%s,%.6g,%s,%u,,,,%s\n", d.device_id, to_string(d.kind),
                 d.device_bw_gbs,
                 d.single_link_lanes ? std::to_string(*d.single_link_lanes).c_str() : "",
                 d.aggregate_lanes, d.feasible_on_attached_host ? "yes" : "no");
    for (const auto& h : rep.hosts)
        s += fmt("host,%u,,,,,%u,%.6g,%u,\n", h.host_id, h.total_lanes, h.cxl_bw_gbs,
                 h.redundancy);
    s += fmt("harvest,,,%.6g,,%u,%u,,,%s\n", rep.harvest_all.total_device_bw_gbs,
             rep.harvest_all.lanes_needed, rep.harvest_all.max_host_lanes,
             rep.harvest_all.feasible ? "yes" : "no");
    return s;
}

RunArtifacts run_scenario(const Scenario& sc, const RunOptions& opts) {
    RunArtifacts art;
    std::string summary;

    auto violations = validate_topology(sc.topology);
    if (!violations.empty()) {
        std::string msg = "topology invalid:";
        for (const auto& v : violations) msg += "\n  " + v.entity + ": " + v.message;
        throw ValidationError(msg);
    }
    sc.params.validate();
    std::uint64_t combined_hash = 0xcbf29ce484222325ull;
    auto mix_hash = [&combined_hash](std::uint64_t h) {
        combined_hash ^= h;
        combined_hash *= 0x100000001b3ull;
    };

    // feasibility is cheap and always wanted
    FeasibilityReport rep = make_feasibility_report(sc.topology, sc.params);
    {
        std::filesystem::create_directories(opts.csv_dir);
        const std::string path =
            (std::filesystem::path(opts.csv_dir) / "feasibility.csv").string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot open " + path);
        out << feasibility_csv(rep);
        art.csv_files.push_back(path);
        summary += "== feasibility ==\n" + render_feasibility(rep) + "\n";
    }

    const LatencyParams eff = effective_params(sc.params, sc.topology.pod_kind);

    if (sc.channel_bench) {
        SimEngine eng(opts.seed);
        SharedRegion region(1u << 20, RegionMode::Simulation);
        PoolAllocator alloc(region, 1u << 20, {});
        auto [a_tx, b_rx] = channel_create(alloc, sc.channel_bench->capacity, 0, 1);
        auto [b_tx, a_rx] = channel_create(alloc, sc.channel_bench->capacity, 1, 0);
        PingPongResult r =
            ping_pong(eng, a_tx, b_rx, b_tx, a_rx, eff, sc.channel_bench->iterations);
        CsvFile csv(opts.csv_dir, "channel_bench.csv", "iter,oneway_ns");
        for (std::size_t i = 0; i < r.oneway_ns.size(); ++i)
            csv.row(fmt("%zu,%" PRIu64, i, r.oneway_ns[i]));
        art.csv_files.push_back(csv.path());
        summary += fmt("== channel ping-pong ==\niterations %zu  p10 %" PRIu64 "  p50 %" PRIu64
                       "  p90 %" PRIu64 "  p99 %" PRIu64 " (ns one-way)\n\n",
                       r.oneway_ns.size(), r.p(10), r.p(50), r.p(90), r.p(99));
        mix_hash(eng.trace().hash());
    }

    if (sc.udp_bench) {
        CsvFile csv(opts.csv_dir, "udp_bench.csv",
                    "pkt_bytes,offered_gbps,achieved_gbps,p50_us,p99_us,placement");
        summary += "== udp bench ==\n";
        for (std::uint32_t pkt : sc.udp_bench->pkt_sizes) {
            for (BufferPlacement pl : {BufferPlacement::Local, BufferPlacement::Cxl}) {
                UdpBenchConfig cfg = udp_bench_config_for(sc.topology, sc.udp_bench->server_host,
                                                          sc.udp_bench->nic_gbps, pkt, pl, eff);
                cfg.base_rtt_ns = sc.udp_bench->base_rtt_ns;
                cfg.nic_base_latency_ns = sc.udp_bench->nic_base_latency_ns;
                cfg.app_per_pkt_ns = sc.udp_bench->app_per_pkt_ns;
                cfg.packets_per_step = sc.udp_bench->packets_per_step;
                cfg.seed = opts.seed;
                auto pts = run_udp_bench(cfg, eff);
                double sat = 0;
                for (const auto& p : pts) {
                    csv.row(fmt("%u,%.6g,%.6g,%.6g,%.6g,%s", pkt, p.offered_gbps, p.achieved_gbps,
                                p.p50_us, p.p99_us, to_string(p.placement)));
                    sat = std::max(sat, p.achieved_gbps);
                }
                summary += fmt("pkt %5u B  placement %-5s  saturation %.2f Gbps\n", pkt,
                               to_string(pl), sat);
            }
        }
        art.csv_files.push_back(csv.path());
        summary += "\n";
    }

    if (sc.failover || !sc.faults.empty()) {
        SimEngine eng(opts.seed);
        PodSimConfig cfg;
        cfg.topology = sc.topology;
        cfg.params = sc.params;
        if (sc.failover) cfg.echo_rtt_ns = sc.failover->echo_rtt_ns;
        PodSim sim(cfg, eng);
        std::vector<WorkloadId> wls;
        if (sc.failover)
            for (const auto& w : sc.failover->workloads)
                wls.push_back(sim.add_workload(w.host, w.kind, w.io_bytes, w.period_ns, 0));
        for (const auto& f : sc.faults) {
            if (f.event == "fail_device" && f.device)
                sim.inject_device_failure(*f.device, f.at_ms * 1'000'000);
            else if (f.event == "hot_remove" && f.host)
                sim.request_hot_remove(*f.host, f.at_ms * 1'000'000);
            else if (f.event == "kill_agent" && f.host)
                sim.kill_agent(*f.host, f.at_ms * 1'000'000);
        }
        sim.start();
        const SimTime duration = sc.failover ? sc.failover->duration_ms * 1'000'000 : 100'000'000;
        eng.run_until(duration);
        CsvFile csv(opts.csv_dir, "failover_timeline.csv", "time_ns,event,workload,device");
        for (const auto& ev : sim.timeline()) {
            csv.row(fmt("%" PRIu64 ",%s,%s,%s", ev.t_ns, ev.event.c_str(),
                        ev.workload ? std::to_string(*ev.workload).c_str() : "",
                        ev.device ? std::to_string(*ev.device).c_str() : ""));
        }
        art.csv_files.push_back(csv.path());
        summary += "== failover ==\n";
        for (WorkloadId wl : wls) {
            const auto& st = sim.stats(wl);
            summary += fmt("workload %u: submitted %" PRIu64 "  completed %" PRIu64
                           "  cancelled %" PRIu64 "  rejected %" PRIu64 "\n",
                           wl, st.submitted, st.completed, st.cancelled, st.rejected);
        }
        summary += "\n";
        if (opts.trace_path) eng.trace().write_jsonl(*opts.trace_path);
        mix_hash(eng.trace().hash());
    }

    if (sc.stranding) {
        StrandingScenario base = sc.stranding->scenario;
        if (base.seed == 0) base.seed = opts.seed;
        auto rows = compare_pooling(base, sc.stranding->group_sizes, sc.stranding->seeds);
        CsvFile csv(opts.csv_dir, "stranding.csv",
                    "N,resource,mean_stranded,stddev,analytic_sqrt_prediction");
        summary += "== stranding ==\n";
        for (const auto& r : rows) {
            csv.row(fmt("%u,%s,%.6g,%.6g,%.6g", r.group_size, to_string(r.resource),
                        r.mean_stranded, r.stddev_stranded, r.analytic_sqrt_prediction));
            summary += fmt("N=%u %-5s mean %.4f  stddev %.4f  sqrt-law %.4f\n", r.group_size,
                           to_string(r.resource), r.mean_stranded, r.stddev_stranded,
                           r.analytic_sqrt_prediction);
        }
        art.csv_files.push_back(csv.path());
        summary += "\n";
    }

    art.trace_hash = combined_hash;
    art.summary = summary;
    return art;
}

}  // namespace cxlpool
