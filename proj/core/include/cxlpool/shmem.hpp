#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cxlpool/topology.hpp"
#include "cxlpool/types.hpp"

namespace cxlpool {

/// Line-granular access counts. charged_ns() is the latency identity used by
/// the simulation: pool traffic at CXL rates, a host's own segment at DDR
/// rates, cache hits at DDR read cost.
struct AccessCounters {
    std::uint64_t pool_line_reads = 0;
    std::uint64_t pool_line_writes = 0;
    std::uint64_t local_line_reads = 0;   // own private segment
    std::uint64_t local_line_writes = 0;
    std::uint64_t cache_line_hits = 0;

    std::uint64_t charged_ns(const LatencyParams& p) const {
        return pool_line_reads * p.cxl_read_ns + pool_line_writes * p.cxl_write_ns +
               local_line_reads * p.ddr_read_ns + local_line_writes * p.ddr_write_ns +
               cache_line_hits * p.ddr_read_ns;
    }
    AccessCounters operator-(const AccessCounters& o) const {
        return {pool_line_reads - o.pool_line_reads, pool_line_writes - o.pool_line_writes,
                local_line_reads - o.local_line_reads, local_line_writes - o.local_line_writes,
                cache_line_hits - o.cache_line_hits};
    }
};

enum class RegionMode : std::uint8_t {
    /// Deterministic model: byte backing store plus per-host line caches,
    /// single-threaded, driven by simcore.
    Simulation,
    /// Process memory backing, caches disabled. write_through publishes a
    /// line's first word last with release ordering; fresh_read loads it
    /// first with acquire. Used by the real-threads channel mode.
    Threads,
};

/// Pooled memory with no cross-host hardware coherence. Every host sees the
/// backing store only through explicit operations: cached reads/writes hit a
/// private line cache that goes stale silently, publish/write_through are the
/// only mutations of the backing store, invalidate/fresh_read are the reader
/// side of software coherence.
class SharedRegion {
  public:
    SharedRegion(std::size_t size_bytes, RegionMode mode = RegionMode::Simulation);

    std::size_t size() const { return size_; }
    RegionMode mode() const { return mode_; }

    /// Read through the host's line cache; lines already cached are returned
    /// verbatim no matter what the backing store holds now.
    std::vector<std::byte> cached_read(HostId host, PoolAddr addr, std::size_t len);
    /// Read-modify-write of the host's cached lines only. Missing lines are
    /// fetched from the backing store first; the backing store is unchanged.
    void cached_write(HostId host, PoolAddr addr, std::span<const std::byte> bytes);
    /// Copy the host's cached lines covering the range into the backing
    /// store. Lines the host never touched are skipped. Cache entries stay.
    void publish(HostId host, PoolAddr addr, std::size_t len);
    /// Non-temporal-store model: write straight to the backing store and
    /// drop the writer's own cached copies of the affected lines. Atomic per
    /// 64-byte line, not across lines.
    void write_through(HostId host, PoolAddr addr, std::span<const std::byte> bytes);
    /// Drop the host's cached lines for the range; no-op for uncached lines.
    void invalidate(HostId host, PoolAddr addr, std::size_t len);
    /// invalidate + cached_read: always fetches current backing contents.
    std::vector<std::byte> fresh_read(HostId host, PoolAddr addr, std::size_t len);

    const AccessCounters& counters(HostId host) const;
    /// Counters charged since the given snapshot.
    AccessCounters delta_since(HostId host, const AccessCounters& snap) const;

    /// Marks [base, base+size) as host-local for charging purposes.
    void set_local_segment(HostId host, PoolAddr base, std::size_t size);

    /// Test/inspection helper: raw backing bytes (sim mode).
    std::vector<std::byte> peek_backing(PoolAddr addr, std::size_t len) const;

  private:
    friend class PoolAllocator;

    using Line = std::array<std::byte, kLineBytes>;

    void check_range(PoolAddr addr, std::size_t len) const;
    bool is_local(HostId host, PoolAddr addr) const;
    void charge_read(HostId host, PoolAddr line_addr);
    void charge_write(HostId host, PoolAddr line_addr);
    Line& cache_line_fetch(HostId host, std::uint64_t line_idx);  // fetch on miss

    // Threads-mode line ops (addr and len must be line-aligned).
    void atomic_line_store(PoolAddr addr, std::span<const std::byte> line);
    void atomic_line_load(PoolAddr addr, std::span<std::byte> out) const;

    std::size_t size_;
    RegionMode mode_;
    std::vector<std::byte> backing_;                        // Simulation
    std::unique_ptr<std::atomic<std::uint64_t>[]> words_;   // Threads
    std::map<HostId, std::map<std::uint64_t, Line>> caches_;
    mutable std::map<HostId, AccessCounters> counters_;
    std::map<HostId, std::pair<PoolAddr, std::size_t>> local_segments_;
};

/// Owner of an allocation: a host's private segment or the shared segment.
struct SegmentOwner {
    std::optional<HostId> host;  // nullopt: shared
    static SegmentOwner shared() { return {}; }
    static SegmentOwner of(HostId h) { return {h}; }
};

/// Carves one region into per-host private segments plus one shared segment
/// and hands out non-overlapping, aligned ranges via per-segment free lists.
class PoolAllocator {
  public:
    /// Layout: [shared | host0 | host1 | ...]; sizes in bytes, line-aligned.
    PoolAllocator(SharedRegion& region, std::size_t shared_bytes,
                  const std::vector<std::pair<HostId, std::size_t>>& private_bytes);

    PoolAddr alloc(SegmentOwner owner, std::size_t size, std::size_t align);
    void free(PoolAddr addr);

    std::size_t shared_bytes_free() const;
    bool has_private_segment(HostId host) const { return host_segment_.count(host) > 0; }
    SharedRegion& region() { return region_; }

  private:
    struct Segment {
        PoolAddr base = 0;
        std::size_t size = 0;
        // free intervals [addr, addr+len), sorted, coalesced
        std::map<PoolAddr, std::size_t> free_list;
    };
    struct LiveAlloc {
        int segment = -1;
        std::size_t size = 0;
    };

    Segment& segment_for(SegmentOwner owner);
    static PoolAddr align_up(PoolAddr a, std::size_t align);

    SharedRegion& region_;
    std::vector<Segment> segments_;      // [0] = shared, then one per host
    std::map<HostId, int> host_segment_;
    std::map<PoolAddr, LiveAlloc> live_;
};

}  // namespace cxlpool
