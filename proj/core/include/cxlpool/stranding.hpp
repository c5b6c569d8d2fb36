#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cxlpool/types.hpp"

namespace cxlpool {

enum class Resource : std::uint8_t { Cores, Mem, Ssd, Nic };
constexpr std::array<Resource, 4> kAllResources{Resource::Cores, Resource::Mem,
                                                Resource::Ssd, Resource::Nic};
const char* to_string(Resource r);

/// Demand vector: cores, mem_gb, ssd_gb, nic_gbps.
struct ResourceVec {
    double cores = 0;
    double mem_gb = 0;
    double ssd_gb = 0;
    double nic_gbps = 0;

    double get(Resource r) const;
    double& get(Resource r);
};

struct VmType {
    std::string name;
    ResourceVec demand;
    double weight = 0;  // sampling probability; catalog weights sum to 1
};

struct StrandingScenario {
    ResourceVec host_shape;
    std::uint32_t host_count = 0;
    std::uint32_t pool_group_size = 1;          // N
    std::set<Resource> pooled_resources;        // subset of {Ssd, Nic}
    std::vector<VmType> vm_catalog;
    std::uint64_t seed = 0;
    bool best_fit = false;  // default is first-fit over hosts by id

    void validate() const;  // throws ValidationError / EmptyCatalogError
};

struct StrandingResult {
    // stranded fraction per resource at saturation, in [0, 1]
    ResourceVec stranded;
    std::uint64_t placed_vms = 0;
    std::uint64_t skipped_draws = 0;  // drawn VMs that fit nowhere while others still did
};

/// Square-root pooling estimate: stranding s0 across N independent hosts
/// shrinks to s0 / sqrt(N).
double analytic_pooled_stranding(double s0, std::uint32_t group_size);

/// Draws VMs i.i.d. from the catalog and places them first-fit (or best-fit)
/// until no catalog type fits anywhere. Pooled resources are charged against
/// the host group's aggregate capacity; cores and memory always bind to one
/// host. Stranded fraction = unused capacity / total capacity per resource.
StrandingResult pack_until_saturation(const StrandingScenario& scenario);

struct PoolingRow {
    std::uint32_t group_size = 0;
    Resource resource = Resource::Ssd;
    double mean_stranded = 0;
    double stddev_stranded = 0;
    double analytic_sqrt_prediction = 0;  // baseline(N=1) mean / sqrt(N)
    std::vector<double> per_seed;         // seed order matches seeds argument
};

/// Runs pack_until_saturation for every N with common seeds
/// (scenario.seed + i for i in [0, seeds)). N = 1 rows are the unpooled
/// baseline the analytic column is anchored to.
std::vector<PoolingRow> compare_pooling(const StrandingScenario& scenario,
                                        const std::vector<std::uint32_t>& group_sizes,
                                        std::uint32_t seeds);

/// The catalog shipped with the example scenario: compute-, memory-,
/// storage-, and network-heavy types at equal weight.
std::vector<VmType> default_vm_catalog();
ResourceVec default_host_shape();

}  // namespace cxlpool
