// cxlpool: scenario runner and reporting front door.
//
// Subcommands: feasibility, channel-bench, udp-bench, failover-demo,
// stranding, run. Exit codes: 0 ok, 2 validation/parse, 3 runtime failure.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <array>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cxlpool/channel.hpp"
#include "cxlpool/podsim.hpp"
#include "cxlpool/scenario.hpp"
#include "cxlpool/stats.hpp"

using namespace cxlpool;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::string csv_dir = ".";
    std::optional<std::string> trace_path;
    bool quiet = false;

    void say(const std::string& s) const {
        if (!quiet) std::fputs(s.c_str(), stdout);
    }
};

// Latency flags override scenario values only when the user actually passed
// them; flag_set() answers that after parsing.
struct LatencyFlags {
    LatencyParams values;
    std::array<CLI::Option*, 8> opts{};

    void attach(CLI::App& app) {
        opts[0] = app.add_option("--ddr-read-ns", values.ddr_read_ns, "local DDR read latency");
        opts[1] = app.add_option("--ddr-write-ns", values.ddr_write_ns, "local DDR write latency");
        opts[2] = app.add_option("--cxl-read-ns", values.cxl_read_ns, "pool read latency");
        opts[3] = app.add_option("--cxl-write-ns", values.cxl_write_ns, "pool write latency");
        opts[4] = app.add_option("--switch-extra-ns", values.switch_extra_ns,
                                 "per-access switch penalty");
        opts[5] = app.add_option("--mmio-ns", values.mmio_ns, "device register access latency");
        opts[6] = app.add_option("--poll-interval-ns", values.poll_interval_ns,
                                 "receiver polling period");
        opts[7] = app.add_option("--lane-bw-gbs", values.lane_bw_gbs,
                                 "effective GB/s per CXL lane");
    }

    /// Scenario values first, explicit flags on top.
    LatencyParams apply_to(LatencyParams base) const {
        if (opts[0]->count()) base.ddr_read_ns = values.ddr_read_ns;
        if (opts[1]->count()) base.ddr_write_ns = values.ddr_write_ns;
        if (opts[2]->count()) base.cxl_read_ns = values.cxl_read_ns;
        if (opts[3]->count()) base.cxl_write_ns = values.cxl_write_ns;
        if (opts[4]->count()) base.switch_extra_ns = values.switch_extra_ns;
        if (opts[5]->count()) base.mmio_ns = values.mmio_ns;
        if (opts[6]->count()) base.poll_interval_ns = values.poll_interval_ns;
        if (opts[7]->count()) base.lane_bw_gbs = values.lane_bw_gbs;
        return base;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    f << text;
}

int cmd_feasibility(const GlobalOpts& g, const std::string& scenario_path,
                    const LatencyParams& params) {
    Scenario sc = Scenario::load_file(scenario_path);
    auto violations = validate_topology(sc.topology);
    if (!violations.empty()) {
        for (const auto& v : violations)
            std::fprintf(stderr, "validation: %s: %s\n", v.entity.c_str(), v.message.c_str());
        return 2;
    }
    FeasibilityReport rep = make_feasibility_report(sc.topology, params);
    g.say(render_feasibility(rep));
    std::filesystem::create_directories(g.csv_dir);
    write_text((std::filesystem::path(g.csv_dir) / "feasibility.csv").string(),
               feasibility_csv(rep));
    return 0;
}

int cmd_channel_bench(const GlobalOpts& g, std::uint32_t capacity, std::uint32_t iters,
                      const std::string& mode, const std::string& csv_path,
                      const LatencyParams& params) {
    std::vector<SimTime> samples;
    if (mode == "sim") {
        SimEngine eng(g.seed);
        SharedRegion region(1u << 20, RegionMode::Simulation);
        PoolAllocator alloc(region, 1u << 20, {});
        auto [a_tx, b_rx] = channel_create(alloc, capacity, 0, 1);
        auto [b_tx, a_rx] = channel_create(alloc, capacity, 1, 0);
        PingPongResult r = ping_pong(eng, a_tx, b_rx, b_tx, a_rx, params, iters);
        samples = std::move(r.oneway_ns);
        if (g.trace_path) eng.trace().write_jsonl(*g.trace_path);
    } else if (mode == "threads") {
        SharedRegion region(1u << 20, RegionMode::Threads);
        PoolAllocator alloc(region, 1u << 20, {});
        ThreadBenchResult r = ping_pong_threads(region, alloc, capacity, iters);
        samples = std::move(r.oneway_ns);
    } else {
        std::fprintf(stderr, "unknown mode '%s' (use sim or threads)\n", mode.c_str());
        return 2;
    }
    if (!csv_path.empty()) {
        std::string body = "iter,oneway_ns\n";
        char buf[64];
        for (std::size_t i = 0; i < samples.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%" PRIu64 "\n", i, samples[i]);
            body += buf;
        }
        write_text(csv_path, body);
    }
    char line[256];
    std::snprintf(line, sizeof line,
                  "one-way latency ns: p10 %" PRIu64 "  p50 %" PRIu64 "  p90 %" PRIu64
                  "  p99 %" PRIu64 "  (%zu samples, %s mode)\n",
                  percentile(samples, 10), percentile(samples, 50), percentile(samples, 90),
                  percentile(samples, 99), samples.size(), mode.c_str());
    g.say(line);
    return 0;
}

int cmd_udp_bench(const GlobalOpts& g, std::uint32_t pkt, const std::string& placement,
                  double nic_gbps, double host_cxl_gbs, const std::string& csv_path,
                  const LatencyParams& params) {
    auto run_one = [&](BufferPlacement pl) {
        UdpBenchConfig cfg;
        cfg.pkt_bytes = pkt;
        cfg.nic_gbps = nic_gbps;
        cfg.placement = pl;
        cfg.host_cxl_bw_gbs = host_cxl_gbs;
        cfg.seed = g.seed;
        return run_udp_bench(cfg, params);
    };
    std::vector<UdpBenchPoint> pts;
    if (placement == "local" || placement == "both") {
        auto r = run_one(BufferPlacement::Local);
        pts.insert(pts.end(), r.begin(), r.end());
    }
    if (placement == "cxl" || placement == "both") {
        auto r = run_one(BufferPlacement::Cxl);
        pts.insert(pts.end(), r.begin(), r.end());
    }
    if (pts.empty()) {
        std::fprintf(stderr, "unknown placement '%s' (use local, cxl, both)\n",
                     placement.c_str());
        return 2;
    }
    std::string body = "offered_gbps,achieved_gbps,p50_us,p99_us,placement\n";
    g.say(body);
    char buf[160];
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%.6g,%s\n", p.offered_gbps,
                      p.achieved_gbps, p.p50_us, p.p99_us, to_string(p.placement));
        body += buf;
        g.say(buf);
    }
    if (!csv_path.empty()) write_text(csv_path, body);
    return 0;
}

int cmd_failover_demo(const GlobalOpts& g, const std::string& scenario_path, DeviceId fail_device,
                      std::uint64_t at_ms, const LatencyFlags& lat) {
    Scenario sc = Scenario::load_file(scenario_path);
    sc.params = lat.apply_to(sc.params);
    SimEngine eng(g.seed);
    PodSimConfig cfg;
    cfg.topology = sc.topology;
    cfg.params = sc.params;
    if (sc.failover) cfg.echo_rtt_ns = sc.failover->echo_rtt_ns;
    PodSim sim(cfg, eng);
    std::vector<WorkloadId> wls;
    if (sc.failover)
        for (const auto& w : sc.failover->workloads)
            wls.push_back(sim.add_workload(w.host, w.kind, w.io_bytes, w.period_ns, 0));
    sim.inject_device_failure(fail_device, at_ms * 1'000'000);
    sim.start();
    const SimTime duration = sc.failover ? sc.failover->duration_ms * 1'000'000 : 200'000'000;
    eng.run_until(duration);

    std::filesystem::create_directories(g.csv_dir);
    std::string body = "time_ns,event,workload,device\n";
    char buf[256];
    for (const auto& ev : sim.timeline()) {
        std::snprintf(buf, sizeof buf, "%" PRIu64 ",%s,%s,%s\n", ev.t_ns, ev.event.c_str(),
                      ev.workload ? std::to_string(*ev.workload).c_str() : "",
                      ev.device ? std::to_string(*ev.device).c_str() : "");
        body += buf;
    }
    const std::string path =
        (std::filesystem::path(g.csv_dir) / "failover_timeline.csv").string();
    write_text(path, body);
    for (WorkloadId wl : wls) {
        const auto& st = sim.stats(wl);
        std::snprintf(buf, sizeof buf,
                      "workload %u: submitted %" PRIu64 " completed %" PRIu64
                      " cancelled %" PRIu64 "\n",
                      wl, st.submitted, st.completed, st.cancelled);
        g.say(buf);
    }
    g.say("timeline: " + path + "\n");
    if (g.trace_path) eng.trace().write_jsonl(*g.trace_path);
    return 0;
}

int cmd_stranding(const GlobalOpts& g, const std::string& scenario_path,
                      const std::string& group_sizes_csv, std::uint32_t seeds,
                      const std::string& csv_path) {
    StrandingSection section;
    if (!scenario_path.empty()) {
        Scenario sc = Scenario::load_file(scenario_path);
        if (!sc.stranding) throw ValidationError("scenario has no stranding section");
        section = *sc.stranding;
    } else {
        section.scenario.host_shape = default_host_shape();
        section.scenario.host_count = 64;
        section.scenario.pooled_resources = {Resource::Ssd, Resource::Nic};
        section.scenario.vm_catalog = default_vm_catalog();
        section.scenario.seed = g.seed;
    }
    if (!group_sizes_csv.empty()) {
        section.group_sizes.clear();
        std::stringstream ss(group_sizes_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
            section.group_sizes.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
    }
    if (seeds) section.seeds = seeds;
    auto rows = compare_pooling(section.scenario, section.group_sizes, section.seeds);
    std::string body = "N,resource,mean_stranded,stddev,analytic_sqrt_prediction\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%u,%s,%.6g,%.6g,%.6g\n", r.group_size,
                      to_string(r.resource), r.mean_stranded, r.stddev_stranded,
                      r.analytic_sqrt_prediction);
        body += buf;
        g.say(buf);
    }
    if (!csv_path.empty()) write_text(csv_path, body);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"software PCIe pooling over a CXL memory pool: simulator and toolkit"};
    app.require_subcommand(1);

    app.fallthrough();
    GlobalOpts g;
    app.add_option("--seed", g.seed, "simulation seed")->capture_default_str();
    app.add_option("--csv-dir", g.csv_dir, "directory for CSV outputs")->capture_default_str();
    std::string trace;
    app.add_option("--trace", trace, "dump the event trace as JSON lines");
    app.add_flag("--quiet", g.quiet, "suppress stdout summaries");

    LatencyFlags lat;
    lat.attach(app);

    auto* feas = app.add_subcommand("feasibility", "lane-budget report for a scenario topology");
    std::string feas_scenario;
    feas->add_option("scenario", feas_scenario, "scenario JSON")->required();

    auto* cb = app.add_subcommand("channel-bench", "ring channel ping-pong latency");
    std::uint32_t cb_capacity = 64, cb_iters = 10000;
    std::string cb_mode = "sim", cb_csv;
    cb->add_option("--capacity", cb_capacity, "ring capacity (slots)")->capture_default_str();
    cb->add_option("--iters", cb_iters, "iterations")->capture_default_str();
    cb->add_option("--mode", cb_mode, "sim or threads")->capture_default_str();
    cb->add_option("--csv", cb_csv, "CSV output path");

    auto* ub = app.add_subcommand("udp-bench", "latency-throughput sweep of the echo datapath");
    std::uint32_t ub_pkt = 1500;
    std::string ub_placement = "both", ub_csv;
    double ub_nic = 100, ub_pool = 60;
    ub->add_option("--pkt-size", ub_pkt, "payload bytes")->capture_default_str();
    ub->add_option("--placement", ub_placement, "local, cxl, or both")->capture_default_str();
    ub->add_option("--nic-gbps", ub_nic, "NIC wire rate")->capture_default_str();
    ub->add_option("--host-cxl-gbs", ub_pool, "server host pool bandwidth GB/s")
        ->capture_default_str();
    ub->add_option("--csv", ub_csv, "CSV output path");

    auto* fd = app.add_subcommand("failover-demo", "inject a device failure under load");
    std::string fd_scenario;
    DeviceId fd_dev = 0;
    std::uint64_t fd_at = 50;
    fd->add_option("scenario", fd_scenario, "scenario JSON")->required();
    fd->add_option("--fail-device", fd_dev, "device id to fail")->required();
    fd->add_option("--at-ms", fd_at, "injection time (ms)")->capture_default_str();

    auto* st = app.add_subcommand("stranding", "Monte-Carlo stranding comparison");
    std::string st_scenario, st_groups, st_csv;
    std::uint32_t st_seeds = 0;
    st->add_option("--scenario", st_scenario, "scenario JSON (defaults built in)");
    st->add_option("--group-sizes", st_groups, "comma list, e.g. 1,2,4,8");
    st->add_option("--seeds", st_seeds, "number of seeds");
    st->add_option("--csv", st_csv, "CSV output path");

    auto* rn = app.add_subcommand("run", "run every experiment in a scenario file");
    std::string rn_scenario;
    rn->add_option("scenario", rn_scenario, "scenario JSON")->required();

    CLI11_PARSE(app, argc, argv);
    if (!trace.empty()) g.trace_path = trace;
    const LatencyParams params = lat.apply_to(LatencyParams{});

    try {
        if (feas->parsed()) return cmd_feasibility(g, feas_scenario, params);
        if (cb->parsed()) return cmd_channel_bench(g, cb_capacity, cb_iters, cb_mode, cb_csv, params);
        if (ub->parsed())
            return cmd_udp_bench(g, ub_pkt, ub_placement, ub_nic, ub_pool, ub_csv, params);
        if (fd->parsed()) return cmd_failover_demo(g, fd_scenario, fd_dev, fd_at, lat);
        if (st->parsed()) return cmd_stranding(g, st_scenario, st_groups, st_seeds, st_csv);
        if (rn->parsed()) {
            Scenario sc = Scenario::load_file(rn_scenario);
            sc.params = lat.apply_to(sc.params);
            RunOptions opts;
            opts.seed = g.seed;
            opts.csv_dir = g.csv_dir;
            opts.trace_path = g.trace_path;
            opts.quiet = g.quiet;
            RunArtifacts art = run_scenario(sc, opts);
            g.say(art.summary);
            char buf[64];
            std::snprintf(buf, sizeof buf, "trace hash: %016" PRIx64 "\n", art.trace_hash);
            g.say(buf);
            return 0;
        }
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
