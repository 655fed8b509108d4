#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cbct/device.hpp"

namespace cbct {

enum class EventKind { TransferIn, TransferOut, Kernel, Accumulate, Pin, Unpin };

const char* to_string(EventKind kind);
EventKind parse_event_kind(const std::string& text);

/// Device id of host-side events (page locking).
constexpr Index kHostDevice = -1;

struct TraceEvent {
    Index device = 0;
    EventKind kind = EventKind::Kernel;
    std::string payload;
    double start = 0.0;
    double end = 0.0;
    Bytes bytes = 0;
};

struct ExecutionTrace {
    std::vector<TraceEvent> events;
    std::vector<Bytes> high_water;
    std::vector<Bytes> budgets;
    double makespan = 0.0;
    bool simulated = false;
};

/// `device=<id> kind=<k> payload=<id> start=<s> end=<s> bytes=<n>`; host events use device=host.
std::string format_event(const TraceEvent& event);
TraceEvent parse_event(const std::string& line);
void write_trace(std::ostream& out, const ExecutionTrace& trace);
std::vector<TraceEvent> read_trace_events(std::istream& in);

struct TraceCheck {
    std::vector<std::string> problems;
    bool ok() const { return problems.empty(); }
};

/// Kernels never overlap on a device, every Accumulate starts after its Kernel and
/// partial-input TransferIn end, and high-water marks stay within budgets.
/// Overlap checks can be disabled for wall-clock traces.
TraceCheck check_trace(const ExecutionTrace& trace, bool check_timing = true);

}  // namespace cbct
