#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cxlpool {

using SimTime = std::uint64_t;   // virtual nanoseconds
using HostId = std::uint32_t;
using MhdId = std::uint32_t;
using DeviceId = std::uint32_t;
using WorkloadId = std::uint32_t;
using PoolAddr = std::uint64_t;  // byte offset into the pool region

constexpr std::size_t kLineBytes = 64;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutOfBoundsError : Error { using Error::Error; };
struct OutOfPoolMemoryError : Error { using Error::Error; };
struct UnknownHostError : Error { using Error::Error; };
struct UnknownDeviceError : Error { using Error::Error; };
struct DuplicateHostError : Error { using Error::Error; };
struct NoDeviceAvailableError : Error { using Error::Error; };
struct NotAssignedError : Error { using Error::Error; };
struct SingleLinkTooNarrowError : Error { using Error::Error; };
struct PayloadTooLargeError : Error { using Error::Error; };
struct CorruptSlotError : Error { using Error::Error; };
struct ChannelDownError : Error { using Error::Error; };
struct LivelockError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct EmptyCatalogError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };

}  // namespace cxlpool
