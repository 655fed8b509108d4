#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbct/types.hpp"

namespace cbct {

using Bytes = std::uint64_t;

constexpr Bytes kMiB = Bytes{1} << 20;
constexpr Bytes kGiB = Bytes{1} << 30;

/// Cost model, in seconds per work unit.
struct CostRates {
    double forward = 4e-11;      ///< per (voxel x angle) of a forward launch
    double backward = 2e-11;     ///< per (voxel x angle) of a backprojection launch
    double accumulate = 1e-12;   ///< per projection element summed on device
    double regularize = 2e-10;   ///< per voxel per regularizer iteration
};

/// An abstract accelerator: a memory budget, a host link and a cost model.
struct DeviceSpec {
    Bytes memory_budget = 11 * kGiB;
    double bw_pageable = 4e9;     ///< bytes/s through pageable host memory
    double bw_pinned = 12e9;      ///< bytes/s through page-locked host memory
    double pin_cost_rate = 1e-10; ///< seconds per byte to page-lock (and again to unlock)
    CostRates compute;
};

struct DevicePool {
    std::vector<DeviceSpec> devices;

    Index size() const { return static_cast<Index>(devices.size()); }
    Bytes min_budget() const;

    static DevicePool uniform(Index count, const DeviceSpec& spec = {});
};

void validate(const DeviceSpec& spec);
void validate(const DevicePool& pool);

/// Raised when an allocation would exceed a device's memory budget.
class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tracks what is allocated on one device; refuses to exceed the budget.
class MemoryLedger {
public:
    explicit MemoryLedger(Bytes budget) : budget_(budget) {}

    void allocate(Bytes bytes, const std::string& what);
    void release(Bytes bytes);

    Bytes budget() const { return budget_; }
    Bytes in_use() const { return in_use_; }
    Bytes high_water() const { return high_water_; }

private:
    Bytes budget_;
    Bytes in_use_ = 0;
    Bytes high_water_ = 0;
};

/// Parses "mem=<bytes>,bwpage=<B/s>,bwpin=<B/s>[,pin=<s/B>]" (sizes accept KiB/MiB/GiB suffixes).
DeviceSpec parse_device_spec(const std::string& text);
Bytes parse_bytes(const std::string& text);

}  // namespace cbct
