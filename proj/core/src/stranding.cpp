#include "cxlpool/stranding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>

#include "cxlpool/stats.hpp"

namespace cxlpool {

const char* to_string(Resource r) {
    switch (r) {
        case Resource::Cores: return "cores";
        case Resource::Mem: return "mem";
        case Resource::Ssd: return "ssd";
        case Resource::Nic: return "nic";
    }
    return "?";
}

double ResourceVec::get(Resource r) const {
    switch (r) {
        case Resource::Cores: return cores;
        case Resource::Mem: return mem_gb;
        case Resource::Ssd: return ssd_gb;
        case Resource::Nic: return nic_gbps;
    }
    return 0;
}

double& ResourceVec::get(Resource r) {
    switch (r) {
        case Resource::Cores: return cores;
        case Resource::Mem: return mem_gb;
        case Resource::Ssd: return ssd_gb;
        default: return nic_gbps;
    }
}

void StrandingScenario::validate() const {
    if (vm_catalog.empty()) throw EmptyCatalogError("vm_catalog is empty");
    if (host_count == 0) throw ValidationError("host_count must be > 0");
    if (pool_group_size == 0) throw ValidationError("pool_group_size must be >= 1");
    if (host_count % pool_group_size != 0)
        throw ValidationError("host_count must be divisible by pool_group_size");
    if (pool_group_size > 1 && pooled_resources.empty())
        throw ValidationError("pooled_resources must be nonempty when pooling");
    for (Resource r : pooled_resources)
        if (r != Resource::Ssd && r != Resource::Nic)
            throw ValidationError("only ssd and nic can be pooled");
    double wsum = 0;
    for (const auto& vm : vm_catalog) {
        if (vm.weight < 0) throw ValidationError("vm weight must be >= 0");
        for (Resource r : kAllResources)
            if (vm.demand.get(r) < 0) throw ValidationError("vm demands must be >= 0");
        wsum += vm.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw ValidationError("vm catalog weights must sum to 1");
}

double analytic_pooled_stranding(double s0, std::uint32_t group_size) {
    if (s0 < 0 || s0 > 1) throw DomainError("stranded fraction must be in [0, 1]");
    if (group_size < 1) throw DomainError("group size must be >= 1");
    return s0 / std::sqrt(static_cast<double>(group_size));
}

namespace {

struct PackState {
    const StrandingScenario& sc;
    std::vector<ResourceVec> host_free;   // per host
    std::vector<ResourceVec> group_free;  // per group, pooled resources only

    explicit PackState(const StrandingScenario& s) : sc(s) {
        host_free.assign(s.host_count, s.host_shape);
        const std::uint32_t groups = s.host_count / s.pool_group_size;
        ResourceVec gcap;
        for (Resource r : s.pooled_resources)
            gcap.get(r) = s.host_shape.get(r) * s.pool_group_size;
        group_free.assign(groups, gcap);
    }

    bool pooled(Resource r) const { return sc.pooled_resources.count(r) > 0; }
    std::uint32_t group_of(std::uint32_t host) const { return host / sc.pool_group_size; }

    bool fits(const VmType& vm, std::uint32_t host) const {
        const std::uint32_t g = group_of(host);
        for (Resource r : kAllResources) {
            const double need = vm.demand.get(r);
            if (need <= 0) continue;
            const double avail =
                pooled(r) ? group_free[g].get(r) : host_free[host].get(r);
            if (need > avail + 1e-12) return false;
        }
        return true;
    }

    void place(const VmType& vm, std::uint32_t host) {
        const std::uint32_t g = group_of(host);
        for (Resource r : kAllResources) {
            if (pooled(r))
                group_free[g].get(r) -= vm.demand.get(r);
            else
                host_free[host].get(r) -= vm.demand.get(r);
        }
    }

    // First-fit scans hosts by id; best-fit picks the feasible host with the
    // least normalized slack left after placement.
    std::optional<std::uint32_t> choose_host(const VmType& vm) const {
        if (!sc.best_fit) {
            for (std::uint32_t h = 0; h < sc.host_count; ++h)
                if (fits(vm, h)) return h;
            return std::nullopt;
        }
        std::optional<std::uint32_t> best;
        double best_slack = 0;
        for (std::uint32_t h = 0; h < sc.host_count; ++h) {
            if (!fits(vm, h)) continue;
            double slack = 0;
            for (Resource r : kAllResources) {
                const double cap = sc.host_shape.get(r);
                if (cap <= 0 || pooled(r)) continue;
                slack += (host_free[h].get(r) - vm.demand.get(r)) / cap;
            }
            if (!best || slack < best_slack) {
                best = h;
                best_slack = slack;
            }
        }
        return best;
    }

    bool anything_fits() const {
        for (const auto& vm : sc.vm_catalog)
            for (std::uint32_t h = 0; h < sc.host_count; ++h)
                if (fits(vm, h)) return true;
        return false;
    }
};

}  // namespace

StrandingResult pack_until_saturation(const StrandingScenario& scenario) {
    scenario.validate();
    PackState st(scenario);

    std::mt19937_64 rng(scenario.seed);
    std::vector<double> cum;
    double acc = 0;
    for (const auto& vm : scenario.vm_catalog) cum.push_back(acc += vm.weight);
    auto draw = [&]() -> const VmType& {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * acc;
        std::size_t i = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (i >= scenario.vm_catalog.size()) i = scenario.vm_catalog.size() - 1;
        return scenario.vm_catalog[i];
    };

    StrandingResult res;
    ResourceVec placed_total;
    while (true) {
        const VmType& vm = draw();
        auto host = st.choose_host(vm);
        if (host) {
            st.place(vm, *host);
            res.placed_vms++;
            for (Resource r : kAllResources) placed_total.get(r) += vm.demand.get(r);
            continue;
        }
        if (!st.anything_fits()) break;
        res.skipped_draws++;  // this draw fits nowhere, but smaller types still do
    }

    for (Resource r : kAllResources) {
        const double capacity = scenario.host_shape.get(r) * scenario.host_count;
        if (capacity <= 0) continue;
        const double unused = capacity - placed_total.get(r);
        res.stranded.get(r) = std::clamp(unused / capacity, 0.0, 1.0);
    }
    return res;
}

std::vector<PoolingRow> compare_pooling(const StrandingScenario& scenario,
                                        const std::vector<std::uint32_t>& group_sizes,
                                        std::uint32_t seeds) {
    if (seeds == 0) throw DomainError("need at least one seed");
    std::vector<std::uint32_t> ns = group_sizes;
    if (std::find(ns.begin(), ns.end(), 1u) == ns.end()) ns.insert(ns.begin(), 1u);
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

    // resource -> N -> per-seed samples
    std::vector<PoolingRow> rows;
    std::map<Resource, double> baseline_mean;

    for (std::uint32_t n : ns) {
        StrandingScenario sc = scenario;
        sc.pool_group_size = n;
        if (n == 1) sc.pooled_resources.clear();  // N = 1 is the unpooled baseline
        std::map<Resource, std::vector<double>> samples;
        for (std::uint32_t s = 0; s < seeds; ++s) {
            sc.seed = scenario.seed + s;
            StrandingResult r = pack_until_saturation(sc);
            for (Resource res : scenario.pooled_resources)
                samples[res].push_back(r.stranded.get(res));
        }
        for (Resource res : scenario.pooled_resources) {
            PoolingRow row;
            row.group_size = n;
            row.resource = res;
            row.per_seed = samples[res];
            row.mean_stranded = mean(samples[res]);
            row.stddev_stranded = stddev(samples[res]);
            if (n == 1) baseline_mean[res] = row.mean_stranded;
            row.analytic_sqrt_prediction =
                analytic_pooled_stranding(std::clamp(baseline_mean[res], 0.0, 1.0), n);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<VmType> default_vm_catalog() {
    return {
        {"general", {8, 32, 100, 2}, 0.25},
        {"memory_heavy", {8, 128, 200, 2}, 0.25},
        {"storage_heavy", {8, 32, 1800, 2}, 0.25},
        {"network_heavy", {8, 32, 100, 40}, 0.25},
    };
}

ResourceVec default_host_shape() { return {64, 512, 4000, 100}; }

}  // namespace cxlpool
