#include <benchmark/benchmark.h>

#include "cxlpool/channel.hpp"

using namespace cxlpool;

static void BM_SendRecv_Sim(benchmark::State& state) {
    SharedRegion region(1u << 20, RegionMode::Simulation);
    PoolAllocator alloc(region, 1u << 20, {});
    auto [tx, rx] = channel_create(alloc, static_cast<std::uint32_t>(state.range(0)), 0, 1);
    std::uint64_t n = 0;
    for (auto _ : state) {
        (void)tx.try_send_bytes(&n, sizeof n);
        auto m = rx.try_recv();
        benchmark::DoNotOptimize(m);
        ++n;
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_SendRecv_Sim)->Arg(8)->Arg(64)->Arg(1024);

static void BM_SendRecv_Threads(benchmark::State& state) {
    SharedRegion region(1u << 20, RegionMode::Threads);
    PoolAllocator alloc(region, 1u << 20, {});
    auto [tx, rx] = channel_create(alloc, static_cast<std::uint32_t>(state.range(0)), 0, 1);
    std::uint64_t n = 0;
    for (auto _ : state) {
        (void)tx.try_send_bytes(&n, sizeof n);
        auto m = rx.try_recv();
        benchmark::DoNotOptimize(m);
        ++n;
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_SendRecv_Threads)->Arg(64);

static void BM_PingPongSim(benchmark::State& state) {
    LatencyParams params;
    for (auto _ : state) {
        SimEngine eng(1);
        SharedRegion region(1u << 20, RegionMode::Simulation);
        PoolAllocator alloc(region, 1u << 20, {});
        auto [a_tx, b_rx] = channel_create(alloc, 64, 0, 1);
        auto [b_tx, a_rx] = channel_create(alloc, 64, 1, 0);
        auto r = ping_pong(eng, a_tx, b_rx, b_tx, a_rx, params,
                           static_cast<std::uint32_t>(state.range(0)));
        benchmark::DoNotOptimize(r.oneway_ns.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PingPongSim)->Arg(1000);
