#include "cxlpool/channel.hpp"

#include <chrono>
#include <cstring>
#include <thread>

#include "cxlpool/stats.hpp"

namespace cxlpool {

namespace {

PoolAddr slot_addr(PoolAddr base, std::uint32_t capacity, std::uint64_t seq) {
    return base + (seq % capacity) * kLineBytes;
}

void encode_slot(std::array<std::byte, kLineBytes>& line, std::uint64_t seq,
                 std::span<const std::byte> payload) {
    line.fill(std::byte{0});
    std::memcpy(line.data(), &seq, 8);
    std::uint16_t len = static_cast<std::uint16_t>(payload.size());
    std::memcpy(line.data() + 8, &len, 2);
    if (!payload.empty()) std::memcpy(line.data() + 10, payload.data(), payload.size());
}

}  // namespace

std::pair<ChannelSender, ChannelReceiver> channel_create(PoolAllocator& alloc,
                                                         std::uint32_t capacity_slots,
                                                         HostId sender_host,
                                                         HostId receiver_host,
                                                         SegmentOwner where) {
    if (capacity_slots < 2 || (capacity_slots & (capacity_slots - 1)) != 0)
        throw DomainError("channel capacity must be a power of two >= 2");
    const std::size_t bytes = static_cast<std::size_t>(capacity_slots) * kLineBytes + kLineBytes;
    PoolAddr base = alloc.alloc(where, bytes, kLineBytes);
    std::vector<std::byte> zeros(bytes, std::byte{0});
    alloc.region().write_through(sender_host, base, zeros);

    ChannelSender tx;
    tx.region_ = &alloc.region();
    tx.base_ = base;
    tx.capacity_ = capacity_slots;
    tx.host_ = sender_host;

    ChannelReceiver rx;
    rx.region_ = &alloc.region();
    rx.base_ = base;
    rx.capacity_ = capacity_slots;
    rx.host_ = receiver_host;
    rx.credit_interval_ = std::max<std::uint64_t>(1, capacity_slots / 4);
    return {tx, rx};
}

SendStatus ChannelSender::try_send(std::span<const std::byte> payload) {
    if (payload.size() > kMaxPayloadBytes)
        throw PayloadTooLargeError("payload of " + std::to_string(payload.size()) +
                                   " bytes exceeds " + std::to_string(kMaxPayloadBytes));
    // Message s may only overwrite its slot once message s-capacity was
    // consumed: (s-1) - consumed < capacity, using the credit the receiver
    // published last.
    if (next_seq_ - 1 - consumed_seen_ >= capacity_) {
        const PoolAddr credit = base_ + static_cast<PoolAddr>(capacity_) * kLineBytes;
        auto line = region_->fresh_read(host_, credit, kLineBytes);
        std::uint64_t consumed;
        std::memcpy(&consumed, line.data(), 8);
        consumed_seen_ = consumed;
        if (next_seq_ - 1 - consumed_seen_ >= capacity_) return SendStatus::WouldBlock;
    }
    std::array<std::byte, kLineBytes> line;
    encode_slot(line, next_seq_, payload);
    region_->write_through(host_, slot_addr(base_, capacity_, next_seq_), line);
    next_seq_++;
    return SendStatus::Ok;
}

SendStatus ChannelSender::try_send_bytes(const void* data, std::size_t len) {
    return try_send({static_cast<const std::byte*>(data), len});
}

void ChannelSender::send_blocking(std::span<const std::byte> payload) {
    if (region_->mode() != RegionMode::Threads)
        throw Error("send_blocking requires threads mode");
    while (try_send(payload) != SendStatus::Ok) std::this_thread::yield();
}

void ChannelReceiver::publish_credit() {
    std::array<std::byte, kLineBytes> line{};
    std::memcpy(line.data(), &consumed_, 8);
    region_->write_through(host_, base_ + static_cast<PoolAddr>(capacity_) * kLineBytes, line);
}

std::optional<Message> ChannelReceiver::try_recv() {
    auto raw = region_->fresh_read(host_, slot_addr(base_, capacity_, next_expected_), kLineBytes);
    std::uint64_t seq;
    std::memcpy(&seq, raw.data(), 8);
    if (seq < next_expected_) return std::nullopt;  // empty or previous epoch
    if (seq > next_expected_)
        throw CorruptSlotError("slot holds seq " + std::to_string(seq) + ", expected " +
                               std::to_string(next_expected_) +
                               ": sender overwrote unconsumed slots");
    Message msg;
    msg.seq = seq;
    std::memcpy(&msg.len, raw.data() + 8, 2);
    if (msg.len > kMaxPayloadBytes)
        throw CorruptSlotError("slot length " + std::to_string(msg.len) + " out of range");
    std::memcpy(msg.bytes.data(), raw.data() + 10, kMaxPayloadBytes);
    next_expected_++;
    consumed_++;
    if (consumed_ % credit_interval_ == 0) publish_credit();
    return msg;
}

SimTime PingPongResult::p(double q) const { return percentile(oneway_ns, q); }

namespace {

struct PingPongDriver {
    SimEngine& eng;
    ChannelSender& a_tx;
    ChannelReceiver& b_rx;
    ChannelSender& b_tx;
    ChannelReceiver& a_rx;
    const LatencyParams& params;
    std::uint32_t remaining;
    SimTime ping_sent_at = 0;
    PingPongResult result;

    SimTime leg_delay() {
        // one pool write, the wait for the receiver's next poll tick, one
        // pool read
        return params.cxl_write_ns + eng.rand_below(params.poll_interval_ns) +
               params.cxl_read_ns;
    }

    void send_ping() {
        ping_sent_at = eng.now();
        std::uint32_t iter = remaining;
        if (a_tx.try_send_bytes(&iter, sizeof iter) != SendStatus::Ok)
            throw Error("ping_pong: ring unexpectedly full");
        eng.schedule(leg_delay(), "pong", EventKind::ChannelPoll, [this] { recv_ping(); });
    }

    void recv_ping() {
        auto msg = b_rx.try_recv();
        if (!msg) throw Error("ping_pong: ping not visible at poll");
        if (b_tx.try_send(msg->payload()) != SendStatus::Ok)
            throw Error("ping_pong: ring unexpectedly full");
        eng.schedule(leg_delay(), "ping", EventKind::ChannelPoll, [this] { recv_pong(); });
    }

    void recv_pong() {
        auto msg = a_rx.try_recv();
        if (!msg) throw Error("ping_pong: pong not visible at poll");
        result.oneway_ns.push_back((eng.now() - ping_sent_at) / 2);
        if (--remaining > 0) send_ping();
    }
};

}  // namespace

PingPongResult ping_pong(SimEngine& eng, ChannelSender& a_tx, ChannelReceiver& b_rx,
                         ChannelSender& b_tx, ChannelReceiver& a_rx,
                         const LatencyParams& params, std::uint32_t iterations) {
    if (iterations == 0) return {};
    PingPongDriver driver{eng, a_tx, b_rx, b_tx, a_rx, params, iterations, 0, {}};
    driver.result.oneway_ns.reserve(iterations);
    eng.schedule(0, "ping", EventKind::Timer, [&driver] { driver.send_ping(); });
    eng.run_until_quiescent();
    return std::move(driver.result);
}

ThreadBenchResult ping_pong_threads(SharedRegion& region, PoolAllocator& alloc,
                                    std::uint32_t capacity, std::uint32_t iterations) {
    if (region.mode() != RegionMode::Threads)
        throw Error("ping_pong_threads requires a Threads-mode region");
    auto [a_tx, b_rx] = channel_create(alloc, capacity, 0, 1);
    auto [b_tx, a_rx] = channel_create(alloc, capacity, 1, 0);

    ThreadBenchResult result;
    result.oneway_ns.reserve(iterations);

    std::thread echo([&b_rx = b_rx, &b_tx = b_tx, iterations] {
        for (std::uint32_t i = 0; i < iterations; ++i) {
            std::optional<Message> msg;
            while (!(msg = b_rx.try_recv())) {
            }
            b_tx.send_blocking(msg->payload());
        }
    });

    using Clock = std::chrono::steady_clock;
    for (std::uint32_t i = 0; i < iterations; ++i) {
        auto t0 = Clock::now();
        std::uint32_t iter = i;
        while (a_tx.try_send_bytes(&iter, sizeof iter) != SendStatus::Ok) {
        }
        std::optional<Message> msg;
        while (!(msg = a_rx.try_recv())) {
        }
        auto rt = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0);
        result.oneway_ns.push_back(static_cast<SimTime>(rt.count() / 2));
        std::uint32_t echoed;
        std::memcpy(&echoed, msg->payload().data(), sizeof echoed);
        if (echoed != iter) throw Error("ping_pong_threads: echo mismatch");
    }
    echo.join();
    result.messages = 2ull * iterations;
    return result;
}

}  // namespace cxlpool
