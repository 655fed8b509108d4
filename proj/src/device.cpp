#include "cbct/device.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace cbct {

Bytes DevicePool::min_budget() const
{
    Bytes lowest = std::numeric_limits<Bytes>::max();
    for (const DeviceSpec& d : devices)
        lowest = std::min(lowest, d.memory_budget);
    return devices.empty() ? 0 : lowest;
}

DevicePool DevicePool::uniform(Index count, const DeviceSpec& spec)
{
    if (count < 1)
        throw std::invalid_argument("a device pool needs at least one device");
    return DevicePool{std::vector<DeviceSpec>(static_cast<std::size_t>(count), spec)};
}

void validate(const DeviceSpec& spec)
{
    if (spec.memory_budget == 0)
        throw std::invalid_argument("device memory budget must be positive");
    if (!(spec.bw_pageable > 0.0) || !(spec.bw_pinned >= spec.bw_pageable))
        throw std::invalid_argument("device bandwidths must satisfy pinned >= pageable > 0");
    if (!(spec.pin_cost_rate >= 0.0))
        throw std::invalid_argument("pin cost rate must be non-negative");
    const CostRates& c = spec.compute;
    if (!(c.forward >= 0.0) || !(c.backward >= 0.0) || !(c.accumulate >= 0.0) || !(c.regularize >= 0.0))
        throw std::invalid_argument("compute rates must be non-negative");
}

void validate(const DevicePool& pool)
{
    if (pool.devices.empty())
        throw std::invalid_argument("a device pool needs at least one device");
    for (const DeviceSpec& d : pool.devices)
        validate(d);
}

void MemoryLedger::allocate(Bytes bytes, const std::string& what)
{
    if (bytes > budget_ - std::min(budget_, in_use_))
        throw BudgetError("allocating " + std::to_string(bytes) + " bytes for " + what + " exceeds the device budget (" +
                          std::to_string(in_use_) + " of " + std::to_string(budget_) + " in use)");
    in_use_ += bytes;
    high_water_ = std::max(high_water_, in_use_);
}

void MemoryLedger::release(Bytes bytes)
{
    in_use_ -= std::min(bytes, in_use_);
}

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

double parse_number(const std::string& text, std::size_t& used)
{
    try {
        return std::stod(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number: '" + text + "'");
    }
}

double parse_real(const std::string& text)
{
    std::size_t used = 0;
    const double value = parse_number(text, used);
    if (used != text.size())
        throw std::invalid_argument("trailing characters in number '" + text + "'");
    return value;
}

}  // namespace

Bytes parse_bytes(const std::string& text)
{
    std::size_t used = 0;
    const double value = parse_number(text, used);
    const std::string unit = lower(text.substr(used));
    double scale = 1.0;
    if (unit.empty() || unit == "b")
        scale = 1.0;
    else if (unit == "k" || unit == "kib")
        scale = 1024.0;
    else if (unit == "kb")
        scale = 1e3;
    else if (unit == "m" || unit == "mib")
        scale = 1024.0 * 1024.0;
    else if (unit == "mb")
        scale = 1e6;
    else if (unit == "g" || unit == "gib")
        scale = 1024.0 * 1024.0 * 1024.0;
    else if (unit == "gb")
        scale = 1e9;
    else
        throw std::invalid_argument("unknown size unit in '" + text + "'");
    const double bytes = value * scale;
    if (!(bytes >= 0.0) || bytes > 1.8e19)
        throw std::invalid_argument("size out of range: '" + text + "'");
    return static_cast<Bytes>(std::llround(bytes));
}

DeviceSpec parse_device_spec(const std::string& text)
{
    DeviceSpec spec;
    std::istringstream fields(text);
    std::string field;
    while (std::getline(fields, field, ',')) {
        if (field.empty())
            continue;
        const auto eq = field.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("device field '" + field + "' is not key=value");
        const std::string key = lower(field.substr(0, eq));
        const std::string value = field.substr(eq + 1);
        if (key == "mem")
            spec.memory_budget = parse_bytes(value);
        else if (key == "bwpage")
            spec.bw_pageable = parse_real(value);
        else if (key == "bwpin")
            spec.bw_pinned = parse_real(value);
        else if (key == "pin")
            spec.pin_cost_rate = parse_real(value);
        else if (key == "fwd")
            spec.compute.forward = parse_real(value);
        else if (key == "bwd")
            spec.compute.backward = parse_real(value);
        else if (key == "acc")
            spec.compute.accumulate = parse_real(value);
        else
            throw std::invalid_argument("unknown device field '" + key + "'");
    }
    validate(spec);
    return spec;
}

}  // namespace cbct
