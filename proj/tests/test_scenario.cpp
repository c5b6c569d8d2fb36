#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cxlpool/scenario.hpp"

using namespace cxlpool;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kSmallScenario = R"json({
  "topology": {
    "hosts": [{"id": 0}, {"id": 1}],
    "mhds": [{"id": 0, "port_count": 4}],
    "links": [
      {"host_id": 0, "mhd_id": 0, "lane_width": 8},
      {"host_id": 1, "mhd_id": 0, "lane_width": 8}
    ],
    "devices": [
      {"id": 0, "attached_host_id": 0, "kind": "nic", "device_bw_gbs": 12.5, "base_latency_ns": 1000},
      {"id": 1, "attached_host_id": 1, "kind": "ssd", "device_bw_gbs": 5.0, "base_latency_ns": 20000}
    ]
  },
  "workload": {
    "channel_bench": {"capacity": 8, "iterations": 200},
    "failover": {
      "duration_ms": 30,
      "workloads": [{"host": 1, "kind": "ssd_write", "io_bytes": 4096, "period_ns": 200000}]
    }
  },
  "stranding": {"host_count": 8, "group_sizes": [1, 2], "seeds": 2, "seed": 7},
  "fault_injection": [{"at_ms": 10, "event": "fail_device", "device": 0}]
})json";

std::string tmp_dir(const char* leaf) {
    auto p = std::filesystem::path(CXLPOOL_TEST_TMP) / leaf;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("the shipped pod8 scenario loads and validates") {
    Scenario sc = Scenario::load_file(std::string(CXLPOOL_SOURCE_DIR) + "/scenarios/pod8.json");
    CHECK(sc.topology.hosts.size() == 8);
    CHECK(sc.topology.mhds.size() == 4);
    CHECK(validate_topology(sc.topology).empty());
    for (const auto& h : sc.topology.hosts) CHECK(path_redundancy(sc.topology, h.id) == 4);
    CHECK(sc.channel_bench.has_value());
    CHECK(sc.udp_bench.has_value());
    CHECK(sc.failover.has_value());
    CHECK(sc.stranding.has_value());
    REQUIRE(sc.faults.size() == 1);
    CHECK(sc.faults[0].event == "fail_device");
}

TEST_CASE("missing scenario file is a ParseError") {
    CHECK_THROWS_AS(Scenario::load_file("/nonexistent/nope.json"), ParseError);
}

TEST_CASE("syntactically broken JSON is a ParseError") {
    CHECK_THROWS_AS(Scenario::from_json_text("{ not json"), ParseError);
}

TEST_CASE("unknown keys are rejected by name") {
    try {
        (void)Scenario::from_json_text(R"({"topology": {"hosts": [], "towers": []}})");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("towers") != std::string::npos);
    }
}

TEST_CASE("a lane width of 3 fails validation naming the link") {
    Scenario sc = Scenario::from_json_text(R"json({
      "topology": {
        "hosts": [{"id": 0}],
        "mhds": [{"id": 0}],
        "links": [{"host_id": 0, "mhd_id": 0, "lane_width": 3}]
      }
    })json");
    try {
        (void)run_scenario(sc, RunOptions{1, tmp_dir("badlane"), std::nullopt, true});
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("link[0]") != std::string::npos);
    }
}

TEST_CASE("run_scenario produces every artifact for the small scenario") {
    Scenario sc = Scenario::from_json_text(kSmallScenario);
    RunOptions opts{1, tmp_dir("small"), std::nullopt, true};
    RunArtifacts art = run_scenario(sc, opts);
    CHECK(art.csv_files.size() == 4);  // feasibility, channel, failover, stranding
    for (const auto& f : art.csv_files) {
        CAPTURE(f);
        CHECK(std::filesystem::exists(f));
        CHECK(slurp(f).find('\n') != std::string::npos);  // header at least
    }
    CHECK(art.summary.find("feasibility") != std::string::npos);
    CHECK(art.trace_hash != 0);
}

TEST_CASE("same seed twice: byte-identical CSVs and equal trace hashes") {
    Scenario sc = Scenario::from_json_text(kSmallScenario);
    RunOptions a{9, tmp_dir("det_a"), std::nullopt, true};
    RunOptions b{9, tmp_dir("det_b"), std::nullopt, true};
    RunArtifacts ra = run_scenario(sc, a);
    RunArtifacts rb = run_scenario(sc, b);
    CHECK(ra.trace_hash == rb.trace_hash);
    REQUIRE(ra.csv_files.size() == rb.csv_files.size());
    for (std::size_t i = 0; i < ra.csv_files.size(); ++i)
        CHECK(slurp(ra.csv_files[i]) == slurp(rb.csv_files[i]));

    RunOptions c{10, tmp_dir("det_c"), std::nullopt, true};
    RunArtifacts rc = run_scenario(sc, c);
    CHECK(ra.trace_hash != rc.trace_hash);  // seed actually matters
}

TEST_CASE("CSV headers and column order are pinned by golden files") {
    Scenario sc = Scenario::from_json_text(kSmallScenario);
    RunOptions opts{1, tmp_dir("golden"), std::nullopt, true};
    RunArtifacts art = run_scenario(sc, opts);
    const std::string golden_dir = std::string(CXLPOOL_SOURCE_DIR) + "/tests/golden";
    for (const auto& f : art.csv_files) {
        const std::string name = std::filesystem::path(f).filename().string();
        const std::string golden = golden_dir + "/" + name;
        CAPTURE(name);
        REQUIRE(std::filesystem::exists(golden));
        CHECK(slurp(f) == slurp(golden));
    }
}

TEST_CASE("latency section round-trips and feeds validation") {
    Scenario sc = Scenario::from_json_text(R"({"latency": {"cxl_read_ns": 275}})");
    CHECK(sc.params.cxl_read_ns == 275);
    CHECK(sc.params.ddr_read_ns == 110);  // untouched defaults
    CHECK_THROWS_AS(Scenario::from_json_text(R"({"latency": {"bogus": 1}})"), ValidationError);
}
