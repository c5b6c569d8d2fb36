#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cxlpool/shmem.hpp"
#include "cxlpool/simcore.hpp"
#include "cxlpool/topology.hpp"
#include "cxlpool/types.hpp"

namespace cxlpool {

/// Slot layout (64 bytes, one cache line):
///   [0,8)   seq   -- monotonically increasing message number, 0 = empty
///   [8,10)  len   -- payload length
///   [10,64) payload
/// seq doubles as the valid flag and the wrap-epoch detector, so a zeroed
/// ring never yields a message (numbering starts at 1).
constexpr std::size_t kMaxPayloadBytes = kLineBytes - 10;  // 54

struct Message {
    std::uint64_t seq = 0;
    std::uint16_t len = 0;
    std::array<std::byte, kMaxPayloadBytes> bytes{};

    std::span<const std::byte> payload() const { return {bytes.data(), len}; }
};

enum class SendStatus : std::uint8_t { Ok, WouldBlock };

class ChannelSender;
class ChannelReceiver;

/// Allocates capacity_slots*64 + 64 bytes (slots plus the credit line) and
/// zeroes them. capacity_slots must be a power of two >= 2. Channels live in
/// the shared segment; descriptor rings of locally attached devices may pass
/// a private segment instead.
std::pair<ChannelSender, ChannelReceiver> channel_create(
    PoolAllocator& alloc, std::uint32_t capacity_slots, HostId sender_host,
    HostId receiver_host, SegmentOwner where = SegmentOwner::shared());

class ChannelSender {
  public:
    /// Payloads over 54 bytes throw PayloadTooLargeError; larger data travels
    /// by reference (a pool address in the payload, buffer published first).
    SendStatus try_send(std::span<const std::byte> payload);
    SendStatus try_send_bytes(const void* data, std::size_t len);

    /// Spins until credit opens up. Threads mode only: simulation actors
    /// block by rescheduling themselves one poll interval later instead.
    void send_blocking(std::span<const std::byte> payload);

    std::uint64_t next_seq() const { return next_seq_; }
    std::uint32_t capacity() const { return capacity_; }
    HostId host() const { return host_; }

  private:
    friend std::pair<ChannelSender, ChannelReceiver> channel_create(
        PoolAllocator&, std::uint32_t, HostId, HostId, SegmentOwner);

    SharedRegion* region_ = nullptr;
    PoolAddr base_ = 0;
    std::uint32_t capacity_ = 0;
    HostId host_ = 0;
    std::uint64_t next_seq_ = 1;
    std::uint64_t consumed_seen_ = 0;
};

class ChannelReceiver {
  public:
    /// Polls the expected slot with a fresh read. Empty is nullopt; a slot
    /// from the future means the sender overwrote unconsumed messages and
    /// throws CorruptSlotError.
    std::optional<Message> try_recv();

    std::uint64_t next_expected() const { return next_expected_; }
    std::uint64_t consumed_count() const { return consumed_; }
    std::uint32_t capacity() const { return capacity_; }
    HostId host() const { return host_; }
    PoolAddr base_addr() const { return base_; }

  private:
    friend std::pair<ChannelSender, ChannelReceiver> channel_create(
        PoolAllocator&, std::uint32_t, HostId, HostId, SegmentOwner);

    void publish_credit();

    SharedRegion* region_ = nullptr;
    PoolAddr base_ = 0;
    std::uint32_t capacity_ = 0;
    HostId host_ = 0;
    std::uint64_t next_expected_ = 1;
    std::uint64_t consumed_ = 0;
    std::uint64_t credit_interval_ = 1;
};

struct PingPongResult {
    std::vector<SimTime> oneway_ns;  // per-iteration one-way latency samples
    SimTime p(double q) const;
};

/// Discrete-event ping-pong over two channels. Each leg costs one pool write
/// (the non-temporal store of the slot), the wait until the receiver's next
/// poll tick (uniform in [0, poll_interval_ns), drawn from the engine), and
/// one pool read. Returns one-way samples (half of each round trip).
PingPongResult ping_pong(SimEngine& eng, ChannelSender& a_tx, ChannelReceiver& b_rx,
                         ChannelSender& b_tx, ChannelReceiver& a_rx,
                         const LatencyParams& params, std::uint32_t iterations);

struct ThreadBenchResult {
    std::vector<SimTime> oneway_ns;  // wall-clock, measured on the pinging thread
    std::uint64_t messages = 0;
};

/// Two real threads ping-ponging through a Threads-mode region, measuring
/// wall-clock round trips. Also the basis of the stress test.
ThreadBenchResult ping_pong_threads(SharedRegion& region, PoolAllocator& alloc,
                                    std::uint32_t capacity, std::uint32_t iterations);

}  // namespace cxlpool
