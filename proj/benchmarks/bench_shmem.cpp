#include <benchmark/benchmark.h>

#include "cxlpool/shmem.hpp"

using namespace cxlpool;

static void BM_WriteThrough(benchmark::State& state) {
    SharedRegion region(1u << 22, RegionMode::Simulation);
    const std::size_t len = static_cast<std::size_t>(state.range(0));
    std::vector<std::byte> buf(len, std::byte{0x5a});
    PoolAddr addr = 0;
    for (auto _ : state) {
        region.write_through(0, addr, buf);
        addr = (addr + len) % ((1u << 22) - len);
        addr &= ~static_cast<PoolAddr>(63);
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(len));
}
BENCHMARK(BM_WriteThrough)->Arg(64)->Arg(1500)->Arg(9000);

static void BM_FreshRead(benchmark::State& state) {
    SharedRegion region(1u << 22, RegionMode::Simulation);
    const std::size_t len = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto v = region.fresh_read(0, 0, len);
        benchmark::DoNotOptimize(v.data());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(len));
}
BENCHMARK(BM_FreshRead)->Arg(64)->Arg(4096);

static void BM_AllocFree(benchmark::State& state) {
    SharedRegion region(1u << 24, RegionMode::Simulation);
    PoolAllocator alloc(region, 1u << 24, {});
    for (auto _ : state) {
        PoolAddr a = alloc.alloc(SegmentOwner::shared(), 4096, 64);
        alloc.free(a);
    }
}
BENCHMARK(BM_AllocFree);
