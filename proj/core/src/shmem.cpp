#include "cxlpool/shmem.hpp"

#include <algorithm>
#include <cstring>

namespace cxlpool {

SharedRegion::SharedRegion(std::size_t size_bytes, RegionMode mode)
    : size_(size_bytes), mode_(mode) {
    if (size_bytes == 0 || size_bytes % kLineBytes != 0)
        throw DomainError("region size must be a positive multiple of 64");
    if (mode_ == RegionMode::Simulation) {
        backing_.assign(size_bytes, std::byte{0});
    } else {
        words_ = std::make_unique<std::atomic<std::uint64_t>[]>(size_bytes / 8);
        for (std::size_t i = 0; i < size_bytes / 8; ++i)
            words_[i].store(0, std::memory_order_relaxed);
    }
}

void SharedRegion::check_range(PoolAddr addr, std::size_t len) const {
    if (addr > size_ || len > size_ - addr)
        throw OutOfBoundsError("range [" + std::to_string(addr) + ", +" +
                               std::to_string(len) + ") outside region of " +
                               std::to_string(size_) + " bytes");
}

bool SharedRegion::is_local(HostId host, PoolAddr addr) const {
    auto it = local_segments_.find(host);
    if (it == local_segments_.end()) return false;
    return addr >= it->second.first && addr < it->second.first + it->second.second;
}

void SharedRegion::charge_read(HostId host, PoolAddr line_addr) {
    auto& c = counters_[host];
    if (is_local(host, line_addr))
        c.local_line_reads++;
    else
        c.pool_line_reads++;
}

void SharedRegion::charge_write(HostId host, PoolAddr line_addr) {
    auto& c = counters_[host];
    if (is_local(host, line_addr))
        c.local_line_writes++;
    else
        c.pool_line_writes++;
}

SharedRegion::Line& SharedRegion::cache_line_fetch(HostId host, std::uint64_t line_idx) {
    auto& host_cache = caches_[host];
    auto it = host_cache.find(line_idx);
    if (it == host_cache.end()) {
        Line line;
        std::memcpy(line.data(), backing_.data() + line_idx * kLineBytes, kLineBytes);
        charge_read(host, line_idx * kLineBytes);
        it = host_cache.emplace(line_idx, line).first;
    }
    return it->second;
}

std::vector<std::byte> SharedRegion::cached_read(HostId host, PoolAddr addr, std::size_t len) {
    check_range(addr, len);
    if (mode_ != RegionMode::Simulation)
        throw Error("cached_read requires simulation mode");
    std::vector<std::byte> out(len);
    auto& host_cache = caches_[host];
    std::uint64_t first = addr / kLineBytes;
    std::uint64_t last = len == 0 ? first : (addr + len - 1) / kLineBytes;
    for (std::uint64_t li = first; li <= last && len > 0; ++li) {
        auto hit = host_cache.find(li);
        Line* line;
        if (hit != host_cache.end()) {
            counters_[host].cache_line_hits++;
            line = &hit->second;
        } else {
            line = &cache_line_fetch(host, li);
        }
        PoolAddr line_base = li * kLineBytes;
        std::size_t lo = std::max<PoolAddr>(addr, line_base);
        std::size_t hi = std::min<PoolAddr>(addr + len, line_base + kLineBytes);
        std::memcpy(out.data() + (lo - addr), line->data() + (lo - line_base), hi - lo);
    }
    return out;
}

void SharedRegion::cached_write(HostId host, PoolAddr addr, std::span<const std::byte> bytes) {
    check_range(addr, bytes.size());
    if (mode_ != RegionMode::Simulation)
        throw Error("cached_write requires simulation mode");
    if (bytes.empty()) return;
    auto& host_cache = caches_[host];
    std::uint64_t first = addr / kLineBytes;
    std::uint64_t last = (addr + bytes.size() - 1) / kLineBytes;
    for (std::uint64_t li = first; li <= last; ++li) {
        auto hit = host_cache.find(li);
        Line* line;
        if (hit != host_cache.end()) {
            counters_[host].cache_line_hits++;
            line = &hit->second;
        } else {
            line = &cache_line_fetch(host, li);  // fetch for read-modify-write
        }
        PoolAddr line_base = li * kLineBytes;
        std::size_t lo = std::max<PoolAddr>(addr, line_base);
        std::size_t hi = std::min<PoolAddr>(addr + bytes.size(), line_base + kLineBytes);
        std::memcpy(line->data() + (lo - line_base), bytes.data() + (lo - addr), hi - lo);
    }
}

void SharedRegion::publish(HostId host, PoolAddr addr, std::size_t len) {
    check_range(addr, len);
    if (mode_ != RegionMode::Simulation)
        throw Error("publish requires simulation mode");
    if (len == 0) return;
    auto& host_cache = caches_[host];
    std::uint64_t first = addr / kLineBytes;
    std::uint64_t last = (addr + len - 1) / kLineBytes;
    for (std::uint64_t li = first; li <= last; ++li) {
        auto it = host_cache.find(li);
        if (it == host_cache.end()) continue;  // never written here: nothing to push
        std::memcpy(backing_.data() + li * kLineBytes, it->second.data(), kLineBytes);
        charge_write(host, li * kLineBytes);
    }
}

void SharedRegion::write_through(HostId host, PoolAddr addr, std::span<const std::byte> bytes) {
    check_range(addr, bytes.size());
    if (bytes.empty()) return;
    std::uint64_t first = addr / kLineBytes;
    std::uint64_t last = (addr + bytes.size() - 1) / kLineBytes;
    if (mode_ == RegionMode::Threads) {
        if (addr % kLineBytes != 0 || bytes.size() % kLineBytes != 0)
            throw Error("threads-mode write_through must be line-aligned");
        for (std::uint64_t li = first; li <= last; ++li)
            atomic_line_store(li * kLineBytes,
                              bytes.subspan((li - first) * kLineBytes, kLineBytes));
        return;
    }
    auto& host_cache = caches_[host];
    for (std::uint64_t li = first; li <= last; ++li) {
        PoolAddr line_base = li * kLineBytes;
        std::size_t lo = std::max<PoolAddr>(addr, line_base);
        std::size_t hi = std::min<PoolAddr>(addr + bytes.size(), line_base + kLineBytes);
        std::memcpy(backing_.data() + lo, bytes.data() + (lo - addr), hi - lo);
        charge_write(host, line_base);
        host_cache.erase(li);  // own stale copy would otherwise shadow this write
    }
}

void SharedRegion::invalidate(HostId host, PoolAddr addr, std::size_t len) {
    check_range(addr, len);
    if (mode_ != RegionMode::Simulation)
        throw Error("invalidate requires simulation mode");
    if (len == 0) return;
    auto& host_cache = caches_[host];
    std::uint64_t first = addr / kLineBytes;
    std::uint64_t last = (addr + len - 1) / kLineBytes;
    for (std::uint64_t li = first; li <= last; ++li) host_cache.erase(li);
}

std::vector<std::byte> SharedRegion::fresh_read(HostId host, PoolAddr addr, std::size_t len) {
    check_range(addr, len);
    if (mode_ == RegionMode::Threads) {
        if (addr % kLineBytes != 0 || len % kLineBytes != 0)
            throw Error("threads-mode fresh_read must be line-aligned");
        std::vector<std::byte> out(len);
        for (std::size_t off = 0; off < len; off += kLineBytes)
            atomic_line_load(addr + off, std::span<std::byte>(out).subspan(off, kLineBytes));
        return out;
    }
    invalidate(host, addr, len);
    return cached_read(host, addr, len);
}

const AccessCounters& SharedRegion::counters(HostId host) const {
    return counters_[host];
}

AccessCounters SharedRegion::delta_since(HostId host, const AccessCounters& snap) const {
    return counters_[host] - snap;
}

void SharedRegion::set_local_segment(HostId host, PoolAddr base, std::size_t size) {
    check_range(base, size);
    local_segments_[host] = {base, size};
}

std::vector<std::byte> SharedRegion::peek_backing(PoolAddr addr, std::size_t len) const {
    check_range(addr, len);
    if (mode_ != RegionMode::Simulation) throw Error("peek_backing requires simulation mode");
    return {backing_.begin() + static_cast<std::ptrdiff_t>(addr),
            backing_.begin() + static_cast<std::ptrdiff_t>(addr + len)};
}

// The first word of a line is the control word of every line-granular
// protocol in this codebase (slot seq, credit count). Storing it last with
// release and loading it first with acquire makes one full-line store visible
// atomically to a reader that observes the control word.
void SharedRegion::atomic_line_store(PoolAddr addr, std::span<const std::byte> line) {
    std::uint64_t w[8];
    std::memcpy(w, line.data(), kLineBytes);
    std::atomic<std::uint64_t>* base = words_.get() + addr / 8;
    for (int i = 7; i >= 1; --i) base[i].store(w[i], std::memory_order_relaxed);
    base[0].store(w[0], std::memory_order_release);
}

void SharedRegion::atomic_line_load(PoolAddr addr, std::span<std::byte> out) const {
    const std::atomic<std::uint64_t>* base = words_.get() + addr / 8;
    std::uint64_t w[8];
    w[0] = base[0].load(std::memory_order_acquire);
    for (int i = 1; i <= 7; ++i) w[i] = base[i].load(std::memory_order_relaxed);
    std::memcpy(out.data(), w, kLineBytes);
}

PoolAddr PoolAllocator::align_up(PoolAddr a, std::size_t align) {
    return (a + align - 1) & ~static_cast<PoolAddr>(align - 1);
}

PoolAllocator::PoolAllocator(SharedRegion& region, std::size_t shared_bytes,
                             const std::vector<std::pair<HostId, std::size_t>>& private_bytes)
    : region_(region) {
    std::size_t total = shared_bytes;
    for (const auto& [_, sz] : private_bytes) total += sz;
    if (total > region.size())
        throw OutOfPoolMemoryError("segments need " + std::to_string(total) +
                                   " bytes, region has " + std::to_string(region.size()));
    PoolAddr cursor = 0;
    auto add_segment = [this, &cursor](std::size_t sz) {
        Segment s;
        s.base = cursor;
        s.size = sz;
        if (sz > 0) s.free_list[s.base] = sz;
        cursor += sz;
        segments_.push_back(std::move(s));
    };
    add_segment(shared_bytes);
    for (const auto& [host, sz] : private_bytes) {
        host_segment_[host] = static_cast<int>(segments_.size());
        add_segment(sz);
        region_.set_local_segment(host, segments_.back().base, sz);
    }
}

PoolAllocator::Segment& PoolAllocator::segment_for(SegmentOwner owner) {
    if (!owner.host) return segments_[0];
    auto it = host_segment_.find(*owner.host);
    if (it == host_segment_.end())
        throw UnknownHostError("no private segment for host " + std::to_string(*owner.host));
    return segments_[static_cast<std::size_t>(it->second)];
}

PoolAddr PoolAllocator::alloc(SegmentOwner owner, std::size_t size, std::size_t align) {
    if (size == 0) throw DomainError("alloc: size must be > 0");
    if (align == 0 || (align & (align - 1)) != 0)
        throw DomainError("alloc: alignment must be a power of two");
    Segment& seg = segment_for(owner);
    for (auto it = seg.free_list.begin(); it != seg.free_list.end(); ++it) {
        PoolAddr base = it->first;
        std::size_t len = it->second;
        PoolAddr start = align_up(base, align);
        if (start + size > base + len) continue;
        // carve [start, start+size) out of [base, base+len)
        seg.free_list.erase(it);
        if (start > base) seg.free_list[base] = start - base;
        if (start + size < base + len) seg.free_list[start + size] = base + len - (start + size);
        live_[start] = {static_cast<int>(&seg - segments_.data()), size};
        return start;
    }
    throw OutOfPoolMemoryError("no free range of " + std::to_string(size) + " bytes (align " +
                               std::to_string(align) + ")");
}

void PoolAllocator::free(PoolAddr addr) {
    auto it = live_.find(addr);
    if (it == live_.end()) throw DomainError("free of unknown allocation");
    Segment& seg = segments_[static_cast<std::size_t>(it->second.segment)];
    PoolAddr base = addr;
    std::size_t len = it->second.size;
    live_.erase(it);
    // coalesce with neighbours
    auto next = seg.free_list.lower_bound(base);
    if (next != seg.free_list.end() && base + len == next->first) {
        len += next->second;
        next = seg.free_list.erase(next);
    }
    if (next != seg.free_list.begin()) {
        auto prev = std::prev(next);
        if (prev->first + prev->second == base) {
            prev->second += len;
            return;
        }
    }
    seg.free_list[base] = len;
}

std::size_t PoolAllocator::shared_bytes_free() const {
    std::size_t n = 0;
    for (const auto& [_, len] : segments_[0].free_list) n += len;
    return n;
}

}  // namespace cxlpool
