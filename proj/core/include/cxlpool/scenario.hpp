#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cxlpool/datapath.hpp"
#include "cxlpool/stranding.hpp"
#include "cxlpool/topology.hpp"
#include "cxlpool/types.hpp"

namespace cxlpool {

struct ChannelBenchSection {
    std::uint32_t capacity = 64;
    std::uint32_t iterations = 10000;
};

struct UdpBenchSection {
    HostId server_host = 0;
    double nic_gbps = 100;
    std::vector<std::uint32_t> pkt_sizes{75, 1500, 9000};
    SimTime base_rtt_ns = 25'000;
    SimTime nic_base_latency_ns = 1'000;
    SimTime app_per_pkt_ns = 100;
    std::uint32_t packets_per_step = 4000;
};

struct FailoverWorkload {
    HostId host = 0;
    IoKind kind = IoKind::SsdWrite;
    std::uint32_t io_bytes = 4096;
    SimTime period_ns = 100'000;
};

struct FailoverSection {
    std::vector<FailoverWorkload> workloads;
    SimTime duration_ms = 200;
    SimTime echo_rtt_ns = 30'000;
};

struct StrandingSection {
    StrandingScenario scenario;
    std::vector<std::uint32_t> group_sizes{1, 2, 4, 8};
    std::uint32_t seeds = 20;
};

struct FaultEvent {
    SimTime at_ms = 0;
    std::string event;  // fail_device | hot_remove | kill_agent
    std::optional<DeviceId> device;
    std::optional<HostId> host;
};

/// A scenario file: topology plus whichever experiment sections are present.
/// Parsing is strict; unknown keys raise ValidationError naming the key.
struct Scenario {
    PodTopology topology;
    LatencyParams params;
    std::optional<ChannelBenchSection> channel_bench;
    std::optional<UdpBenchSection> udp_bench;
    std::optional<FailoverSection> failover;
    std::optional<StrandingSection> stranding;
    std::vector<FaultEvent> faults;

    static Scenario load_file(const std::string& path);   // ParseError / ValidationError
    static Scenario from_json_text(const std::string& text);
};

struct RunOptions {
    std::uint64_t seed = 1;
    std::string csv_dir = ".";
    std::optional<std::string> trace_path;
    bool quiet = false;
};

struct RunArtifacts {
    std::vector<std::string> csv_files;
    std::uint64_t trace_hash = 0;  // combined over every engine in the run
    std::string summary;
};

/// Executes every section present in the scenario, deterministically under
/// options.seed, and writes one CSV per experiment into options.csv_dir.
RunArtifacts run_scenario(const Scenario& sc, const RunOptions& opts);

/// Rendered feasibility table (also part of run_scenario's summary).
std::string render_feasibility(const FeasibilityReport& rep);
std::string feasibility_csv(const FeasibilityReport& rep);

}  // namespace cxlpool
