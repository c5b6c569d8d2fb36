#include <doctest.h>

#include <cstring>
#include <deque>
#include <random>

#include "cxlpool/channel.hpp"
#include "cxlpool/stats.hpp"

using namespace cxlpool;

namespace {

struct Fixture {
    SharedRegion region{1u << 20, RegionMode::Simulation};
    PoolAllocator alloc{region, 1u << 20, {}};
};

std::vector<std::byte> payload_of(const char* s) {
    std::vector<std::byte> v(std::strlen(s));
    std::memcpy(v.data(), s, v.size());
    return v;
}

}  // namespace

TEST_CASE("channel_create sizes and rejects") {
    Fixture f;
    std::size_t before = f.alloc.shared_bytes_free();
    auto [tx, rx] = channel_create(f.alloc, 8, 0, 1);
    CHECK(before - f.alloc.shared_bytes_free() == 8 * 64 + 64);
    CHECK_THROWS_AS(channel_create(f.alloc, 3, 0, 1), DomainError);
    CHECK_THROWS_AS(channel_create(f.alloc, 1, 0, 1), DomainError);

    auto [tx2, rx2] = channel_create(f.alloc, 8, 0, 1);
    CHECK(rx2.base_addr() != rx.base_addr());  // disjoint regions
    (void)tx;
    (void)tx2;
}

TEST_CASE("send then recv round-trips a payload") {
    Fixture f;
    auto [tx, rx] = channel_create(f.alloc, 8, 0, 1);
    CHECK_FALSE(rx.try_recv().has_value());  // fresh channel is empty
    CHECK(tx.try_send(payload_of("ping")) == SendStatus::Ok);
    auto m = rx.try_recv();
    REQUIRE(m.has_value());
    CHECK(m->seq == 1);
    CHECK(m->len == 4);
    CHECK(std::memcmp(m->payload().data(), "ping", 4) == 0);
    CHECK_FALSE(rx.try_recv().has_value());
}

TEST_CASE("payloads above 54 bytes are rejected") {
    Fixture f;
    auto [tx, rx] = channel_create(f.alloc, 8, 0, 1);
    CHECK_THROWS_AS(tx.try_send(std::vector<std::byte>(55)), PayloadTooLargeError);
    CHECK(tx.try_send(std::vector<std::byte>(54)) == SendStatus::Ok);
    (void)rx;
}

TEST_CASE("capacity 2 blocks the third unconsumed send") {
    Fixture f;
    auto [tx, rx] = channel_create(f.alloc, 2, 0, 1);
    CHECK(tx.try_send(payload_of("a")) == SendStatus::Ok);
    CHECK(tx.try_send(payload_of("b")) == SendStatus::Ok);
    CHECK(tx.try_send(payload_of("c")) == SendStatus::WouldBlock);
    auto m = rx.try_recv();
    REQUIRE(m.has_value());
    // credit publishes every max(1, capacity/4) = 1 message, sender refreshes
    CHECK(tx.try_send(payload_of("c")) == SendStatus::Ok);
}

TEST_CASE("1e5 random sends and recvs match an in-order queue oracle") {
    Fixture f;
    auto [tx, rx] = channel_create(f.alloc, 64, 0, 1);
    std::mt19937_64 rng(99);
    std::deque<std::vector<std::byte>> oracle;
    std::uint64_t sent = 0, recvd = 0;
    while (recvd < 100'000) {
        bool do_send = sent < 100'000 && (oracle.empty() || rng() % 2 == 0);
        if (do_send) {
            std::vector<std::byte> p(rng() % 55);
            for (auto& b : p) b = std::byte(std::uint8_t(rng()));
            if (tx.try_send(p) == SendStatus::Ok) {
                oracle.push_back(std::move(p));
                sent++;
            }
        } else {
            auto m = rx.try_recv();
            if (m) {
                REQUIRE_FALSE(oracle.empty());
                REQUIRE(m->len == oracle.front().size());
                if (m->len > 0)
                    CHECK(std::memcmp(m->bytes.data(), oracle.front().data(), m->len) == 0);
                oracle.pop_front();
                recvd++;
            }
        }
    }
    CHECK(oracle.empty());
}

TEST_CASE("a slot from the future is reported as corrupt") {
    Fixture f;
    auto [tx, rx] = channel_create(f.alloc, 8, 0, 1);
    // forge what the sender would write after wrapping the ring without credit
    std::array<std::byte, 64> line{};
    std::uint64_t seq = 1 + 8;  // expected + capacity
    std::memcpy(line.data(), &seq, 8);
    f.region.write_through(0, rx.base_addr() + (seq % 8) * 64, line);
    CHECK_THROWS_AS(rx.try_recv(), CorruptSlotError);
    (void)tx;
}

TEST_CASE("ring memory footprint is constant over traffic") {
    Fixture f;
    auto [tx, rx] = channel_create(f.alloc, 16, 0, 1);
    std::size_t base = f.alloc.shared_bytes_free();
    for (int i = 0; i < 10'000; ++i) {
        (void)tx.try_send(payload_of("x"));
        (void)rx.try_recv();
    }
    CHECK(f.alloc.shared_bytes_free() == base);
}

TEST_CASE("ping-pong with zero polling slack is the exact write+read floor") {
    Fixture f;
    SimEngine eng(1);
    LatencyParams p;
    p.poll_interval_ns = 0;
    auto [a_tx, b_rx] = channel_create(f.alloc, 8, 0, 1);
    auto [b_tx, a_rx] = channel_create(f.alloc, 8, 1, 0);
    auto r = ping_pong(eng, a_tx, b_rx, b_tx, a_rx, p, 1000);
    REQUIRE(r.oneway_ns.size() == 1000);
    for (SimTime s : r.oneway_ns) CHECK(s == p.cxl_write_ns + p.cxl_read_ns);
}

TEST_CASE("ping-pong with defaults lands near 600ns and never under the floor") {
    Fixture f;
    SimEngine eng(7);
    LatencyParams p;  // write 300, read 250, poll 100
    auto [a_tx, b_rx] = channel_create(f.alloc, 8, 0, 1);
    auto [b_tx, a_rx] = channel_create(f.alloc, 8, 1, 0);
    auto r = ping_pong(eng, a_tx, b_rx, b_tx, a_rx, p, 10'000);
    REQUIRE(r.oneway_ns.size() == 10'000);
    const SimTime floor = p.cxl_write_ns + p.cxl_read_ns;
    for (SimTime s : r.oneway_ns) CHECK(s >= floor);
    SimTime median = r.p(50);
    CHECK(median >= 550);
    CHECK(median <= 700);
}

TEST_CASE("cutting pool latencies to DDR shrinks the median proportionally") {
    Fixture f;
    SimEngine eng(7);
    LatencyParams fast;
    fast.cxl_read_ns = fast.ddr_read_ns;
    fast.cxl_write_ns = fast.ddr_write_ns;
    auto [a_tx, b_rx] = channel_create(f.alloc, 8, 0, 1);
    auto [b_tx, a_rx] = channel_create(f.alloc, 8, 1, 0);
    auto r = ping_pong(eng, a_tx, b_rx, b_tx, a_rx, fast, 5000);
    const SimTime floor = fast.cxl_write_ns + fast.cxl_read_ns;  // 220
    for (SimTime s : r.oneway_ns) CHECK(s >= floor);
    CHECK(r.p(50) < 400);  // 220 floor + polling slack, far below the 600ns regime
}

TEST_CASE("threads-mode ping-pong delivers every payload intact") {
    SharedRegion region(1u << 20, RegionMode::Threads);
    PoolAllocator alloc(region, 1u << 20, {});
    auto r = ping_pong_threads(region, alloc, 64, 2000);
    CHECK(r.messages == 4000);
    CHECK(r.oneway_ns.size() == 2000);
}
