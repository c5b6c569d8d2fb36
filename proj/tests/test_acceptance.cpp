// Acceptance suite: one test case per exit criterion, each printing a
// single PASS/FAIL line so a run reads as a checklist.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "cxlpool/channel.hpp"
#include "cxlpool/podsim.hpp"
#include "cxlpool/scenario.hpp"
#include "cxlpool/stats.hpp"
#include "cxlpool/stranding.hpp"
#include "replay_oracle.hpp"

using namespace cxlpool;

namespace {

void report(int n, bool pass, const char* what) {
    std::printf("ACCEPTANCE %2d %s: %s\n", n, pass ? "PASS" : "FAIL", what);
    std::fflush(stdout);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string tmp_dir(const char* leaf) {
    auto p = std::filesystem::path(CXLPOOL_TEST_TMP) / leaf;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("criterion 1: lane arithmetic is exact") {
    LatencyParams p;
    bool pass = required_lanes(25, false, p) == 8 &&    // 200 Gbps NIC
                required_lanes(50, false, p) == 16 &&   // 400 Gbps NIC
                required_lanes(30, false, p) == 8 &&    // six 5 GB/s SSDs
                required_lanes(400, true, p) == 107 &&  // eight 400 Gbps NICs
                required_lanes(400, true, p) >= 100;
    report(1, pass, "lane budgets: 25->8, 50->16, 30->8, aggregate 400->107 (>=100)");
    REQUIRE(pass);
}

TEST_CASE("criterion 2: analytic stranding reductions at N=8") {
    double ssd = analytic_pooled_stranding(0.54, 8);
    double nic = analytic_pooled_stranding(0.29, 8);
    bool pass = ssd >= 0.186 && ssd <= 0.196 && nic >= 0.098 && nic <= 0.108;
    report(2, pass, "sqrt-law: 54% -> ~19% and 29% -> ~10% at N=8");
    REQUIRE(pass);
}

TEST_CASE("criterion 3: ping-pong median near 600ns with a hard write+read floor") {
    SimEngine eng(2024);
    SharedRegion region(1u << 20, RegionMode::Simulation);
    PoolAllocator alloc(region, 1u << 20, {});
    LatencyParams p;  // defaults: write 300, read 250, poll 100
    auto [a_tx, b_rx] = channel_create(alloc, 64, 0, 1);
    auto [b_tx, a_rx] = channel_create(alloc, 64, 1, 0);
    PingPongResult r = ping_pong(eng, a_tx, b_rx, b_tx, a_rx, p, 10'000);

    const SimTime floor = p.cxl_write_ns + p.cxl_read_ns;
    bool no_subfloor = true;
    for (SimTime s : r.oneway_ns) no_subfloor = no_subfloor && s >= floor;
    SimTime median = r.p(50);
    bool pass = r.oneway_ns.size() == 10'000 && no_subfloor && median >= 550 && median <= 700;
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "10k iterations, median one-way %llu ns in [550,700], floor %llu ns held",
                  (unsigned long long)median, (unsigned long long)floor);
    report(3, pass, buf);
    REQUIRE(pass);
}

TEST_CASE("criterion 4: pool-placed buffers cost <5% RTT and keep NIC saturation") {
    LatencyParams p;
    bool pass = true;
    double worst_delta = 0;
    for (std::uint32_t pkt : {75u, 1500u, 9000u}) {
        UdpBenchConfig cfg;
        cfg.pkt_bytes = pkt;
        cfg.nic_gbps = 100;
        cfg.host_cxl_bw_gbs = 60;  // two x8 links
        cfg.packets_per_step = 3000;
        cfg.placement = BufferPlacement::Local;
        auto local = run_udp_bench(cfg, p);
        cfg.placement = BufferPlacement::Cxl;
        auto cxl = run_udp_bench(cfg, p);
        REQUIRE(local.size() == cxl.size());
        double local_max = 0, cxl_max = 0;
        for (std::size_t i = 0; i < local.size(); ++i) {
            local_max = std::max(local_max, local[i].achieved_gbps);
            cxl_max = std::max(cxl_max, cxl[i].achieved_gbps);
            if (local[i].offered_gbps <= 80.0 + 1e-9) {
                double delta = std::abs(cxl[i].p50_us - local[i].p50_us) / local[i].p50_us;
                worst_delta = std::max(worst_delta, delta);
                pass = pass && delta < 0.05;
            }
        }
        pass = pass && std::abs(cxl_max - local_max) / local_max < 0.02;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "75/1500/9000B sweeps: worst p50 delta %.2f%% (<5%%), saturation matched",
                  worst_delta * 100);
    report(4, pass, buf);
    REQUIRE(pass);
}

TEST_CASE("criterion 5: coherence model matches the sequential replay oracle") {
    constexpr std::size_t kSize = 4096;
    SharedRegion r(kSize);
    cxlpool_test::ModelRegion m(kSize);
    std::mt19937_64 rng(20'24);
    bool pass = true;
    std::uint64_t stale_hits = 0, fresh_after_wt = 0;
    for (int i = 0; i < 10'000 && pass; ++i) {
        HostId h = rng() % 3;
        std::uint64_t a = rng() % kSize;
        std::size_t n = 1 + rng() % 200;
        if (a + n > kSize) n = kSize - a;
        if (n == 0) continue;
        switch (rng() % 6) {
            case 0: {
                std::vector<std::uint8_t> b(n);
                for (auto& x : b) x = std::uint8_t(rng());
                std::vector<std::byte> bb(n);
                std::memcpy(bb.data(), b.data(), n);
                r.cached_write(h, a, bb);
                m.cached_write(h, a, b);
                // unpublished writes must stay invisible to every other host
                HostId other = (h + 1) % 3;
                pass = pass && cxlpool_test::to_u8(r.fresh_read(other, a, n)) ==
                                   m.fresh_read(other, a, n);
                break;
            }
            case 1:
                pass = pass && cxlpool_test::to_u8(r.cached_read(h, a, n)) ==
                                   m.cached_read(h, a, n);
                break;
            case 2:
                r.publish(h, a, n);
                m.publish(h, a, n);
                break;
            case 3: {
                std::vector<std::uint8_t> b(n);
                for (auto& x : b) x = std::uint8_t(rng());
                std::vector<std::byte> bb(n);
                std::memcpy(bb.data(), b.data(), n);
                r.write_through(h, a, bb);
                m.write_through(h, a, b);
                fresh_after_wt++;
                // message-passing soundness: any host's fresh read sees it
                HostId reader = rng() % 3;
                pass = pass && cxlpool_test::to_u8(r.fresh_read(reader, a, n)) == b &&
                       m.fresh_read(reader, a, n) == b;
                break;
            }
            case 4:
                r.invalidate(h, a, n);
                m.invalidate(h, a, n);
                break;
            case 5: {
                // stale iff cached and no invalidate intervened: the oracle's
                // cache state decides, the region must agree byte-for-byte
                if (m.cached(h, a / 64)) stale_hits++;
                pass = pass && cxlpool_test::to_u8(r.fresh_read(h, a, n)) ==
                                   m.fresh_read(h, a, n);
                break;
            }
        }
    }
    pass = pass && cxlpool_test::to_u8(r.peek_backing(0, kSize)) == m.backing;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "10k ops x 3 hosts replay exactly (%llu stale-window reads, %llu "
                  "write-through probes)",
                  (unsigned long long)stale_hits, (unsigned long long)fresh_after_wt);
    report(5, pass, buf);
    REQUIRE(pass);
}

namespace {

PodTopology failover_pod() {
    PodTopology t;
    t.hosts = {{0, 1, 256}, {1, 1, 256}, {2, 1, 256}};
    t.mhds = {{0, 512, 20}};
    t.links = {{0, 0, 8}, {1, 0, 8}, {2, 0, 8}};
    t.devices = {{0, 0, DeviceKind::Ssd, 5.0, 20000}, {1, 1, DeviceKind::Ssd, 5.0, 20000}};
    return t;
}

}  // namespace

TEST_CASE("criterion 6: failover reassigns everyone and conserves I/O counts") {
    SimEngine eng(11);
    PodSimConfig cfg;
    cfg.topology = failover_pod();
    PodSim sim(cfg, eng);
    // two consumers on host 2 (no local device): both land on device 0.
    // Arrival rate beats the device service rate, so the queue is never
    // empty when the failure lands.
    WorkloadId w1 = sim.add_workload(2, IoKind::SsdWrite, 4096, 20'000, 2000);
    WorkloadId w2 = sim.add_workload(2, IoKind::SsdRead, 8192, 30'000, 1000);
    // inject before the first heartbeat can rebalance the overloaded device,
    // so the failure definitely lands on a busy queue
    sim.inject_device_failure(0, 5'000'000);
    sim.start();
    eng.run_until(250'000'000);  // issue windows end ~40 ms; drain fully
    sim.check_safety();

    bool reassigned = sim.attached_device(w1) == DeviceId{1} &&
                      sim.attached_device(w2) == DeviceId{1};
    const auto& s1 = sim.stats(w1);
    const auto& s2 = sim.stats(w2);
    bool conserved = s1.submitted == s1.completed + s1.cancelled &&
                     s2.submitted == s2.completed + s2.cancelled;
    bool made_progress = s1.completed > 500 && s2.completed > 200 &&
                         s1.cancelled + s2.cancelled > 0;
    bool detected = false, migrated = false;
    for (const auto& ev : sim.timeline()) {
        if (ev.event == "failure_detected") detected = true;
        if (ev.event == "workload_reattached") migrated = true;
    }
    bool pass = reassigned && conserved && made_progress && detected && migrated;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "w1 %llu=%llu+%llu, w2 %llu=%llu+%llu, both reassigned to the survivor",
                  (unsigned long long)s1.submitted, (unsigned long long)s1.completed,
                  (unsigned long long)s1.cancelled, (unsigned long long)s2.submitted,
                  (unsigned long long)s2.completed, (unsigned long long)s2.cancelled);
    report(6, pass, buf);
    REQUIRE(pass);
}

TEST_CASE("criterion 7: hot-remove migrates first, removes after, allocates never") {
    SimEngine eng(12);
    PodSimConfig cfg;
    cfg.topology = failover_pod();
    PodSim sim(cfg, eng);
    WorkloadId w1 = sim.add_workload(2, IoKind::SsdWrite, 4096, 100'000, 200);
    // probes that request allocation while host 0 is draining
    WorkloadId probe1 = sim.add_workload(1, IoKind::SsdWrite, 4096, 100'000, 50, 31'000'000);
    WorkloadId probe2 = sim.add_workload(2, IoKind::SsdWrite, 4096, 100'000, 50, 35'000'000);
    sim.request_hot_remove(0, 30'000'000);
    sim.start();
    eng.run_until(120'000'000);
    sim.check_safety();

    SimTime t_drain = 0, t_removed = 0, t_last_migrate = 0;
    bool alloc_hit_host0 = false;
    for (const auto& ev : sim.timeline()) {
        if (ev.event == "drain_started") t_drain = ev.t_ns;
        if (ev.event == "host_removed") t_removed = ev.t_ns;
        if (ev.event == "migrate_done") t_last_migrate = std::max(t_last_migrate, ev.t_ns);
        if ((ev.event == "workload_assigned" || ev.event == "workload_reattached") &&
            ev.t_ns >= t_drain && t_drain > 0 && ev.device && *ev.device == 0)
            alloc_hit_host0 = true;
    }
    bool ordered = t_drain > 0 && t_removed >= t_last_migrate && t_last_migrate > t_drain;
    bool removed = sim.orchestrator().host_state(0) == HostLifecycle::Removed;
    bool moved = sim.attached_device(w1) == DeviceId{1};
    bool probes_ok = sim.attached_device(probe1) == DeviceId{1} &&
                     sim.attached_device(probe2) == DeviceId{1};
    bool pass = ordered && removed && moved && probes_ok && !alloc_hit_host0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "drain@%llums, last migrate@%llums, removed@%llums, no draining-host allocs",
                  (unsigned long long)(t_drain / 1'000'000),
                  (unsigned long long)(t_last_migrate / 1'000'000),
                  (unsigned long long)(t_removed / 1'000'000));
    report(7, pass, buf);
    REQUIRE(pass);
}

TEST_CASE("criterion 8: Monte-Carlo stranding shrinks with pool group size") {
    StrandingScenario sc;
    sc.host_shape = default_host_shape();
    sc.host_count = 64;
    sc.pooled_resources = {Resource::Ssd, Resource::Nic};
    sc.vm_catalog = default_vm_catalog();
    sc.seed = 1;
    auto rows = compare_pooling(sc, {1, 2, 4, 8}, 20);

    bool pass = true;
    char detail[256] = "";
    for (Resource res : {Resource::Ssd, Resource::Nic}) {
        std::map<std::uint32_t, const PoolingRow*> by_n;
        for (const auto& r : rows)
            if (r.resource == res) by_n[r.group_size] = &r;
        REQUIRE(by_n.size() == 4);
        // means non-increasing across N
        double prev = 1e9;
        for (std::uint32_t n : {1u, 2u, 4u, 8u}) {
            pass = pass && by_n[n]->mean_stranded <= prev + 1e-12;
            prev = by_n[n]->mean_stranded;
        }
        // pooled(N=8) strictly below unpooled, per-seed violations <= 1
        pass = pass && by_n[8]->mean_stranded < by_n[1]->mean_stranded;
        std::size_t violations = 0;
        for (std::size_t s = 0; s < by_n[1]->per_seed.size(); ++s)
            if (by_n[8]->per_seed[s] >= by_n[1]->per_seed[s]) violations++;
        pass = pass && violations <= 1;
        std::snprintf(detail + std::strlen(detail), sizeof detail - std::strlen(detail),
                      "%s %.3f->%.3f(v=%zu) ", to_string(res), by_n[1]->mean_stranded,
                      by_n[8]->mean_stranded, violations);
    }
    char buf[300];
    std::snprintf(buf, sizeof buf, "20 seeds, N in {1,2,4,8}: %s", detail);
    report(8, pass, buf);
    REQUIRE(pass);
}

TEST_CASE("criterion 9: real-threads ring moves 1e6 messages exactly once in order") {
    constexpr std::uint64_t kMessages = 1'000'000;
    SharedRegion region(1u << 20, RegionMode::Threads);
    PoolAllocator alloc(region, 1u << 20, {});
    auto [tx, rx] = channel_create(alloc, 256, 0, 1);

    std::uint64_t received = 0;
    bool ordered = true;
    std::thread consumer([&rx = rx, &received, &ordered] {
        std::uint64_t expected = 1;
        while (expected <= kMessages) {
            auto m = rx.try_recv();
            if (!m) continue;
            std::uint64_t v;
            std::memcpy(&v, m->payload().data(), 8);
            if (v != expected || m->seq != expected) {
                ordered = false;
                return;
            }
            expected++;
            received++;
        }
    });
    for (std::uint64_t i = 1; i <= kMessages; ++i)
        while (tx.try_send_bytes(&i, sizeof i) != SendStatus::Ok) {
        }
    consumer.join();
    bool pass = ordered && received == kMessages;
    report(9, pass,
           "2 threads, 1e6 messages, zero loss/dup/reorder (race check: channel_stress_tsan)");
    REQUIRE(pass);
}

TEST_CASE("criterion 10: the shipped scenario replays bit-identically under one seed") {
    Scenario sc = Scenario::load_file(std::string(CXLPOOL_SOURCE_DIR) + "/scenarios/pod8.json");
    RunOptions a{5, tmp_dir("acc10_a"), std::nullopt, true};
    RunOptions b{5, tmp_dir("acc10_b"), std::nullopt, true};
    RunArtifacts ra = run_scenario(sc, a);
    RunArtifacts rb = run_scenario(sc, b);
    bool pass = ra.trace_hash == rb.trace_hash && ra.csv_files.size() == rb.csv_files.size();
    for (std::size_t i = 0; pass && i < ra.csv_files.size(); ++i)
        pass = slurp(ra.csv_files[i]) == slurp(rb.csv_files[i]);
    char buf[128];
    std::snprintf(buf, sizeof buf, "trace hash %016llx stable, %zu CSVs byte-identical",
                  (unsigned long long)ra.trace_hash, ra.csv_files.size());
    report(10, pass, buf);
    REQUIRE(pass);
}
