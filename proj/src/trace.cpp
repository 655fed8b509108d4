#include "cbct/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cbct {

namespace {

constexpr const char* kKindNames[] = {"TransferIn", "TransferOut", "Kernel", "Accumulate", "Pin", "Unpin"};

}  // namespace

const char* to_string(EventKind kind)
{
    return kKindNames[static_cast<int>(kind)];
}

EventKind parse_event_kind(const std::string& text)
{
    for (int k = 0; k < 6; ++k)
        if (text == kKindNames[k])
            return static_cast<EventKind>(k);
    throw std::invalid_argument("unknown event kind '" + text + "'");
}

std::string format_event(const TraceEvent& event)
{
    const std::string device = event.device == kHostDevice ? "host" : std::to_string(event.device);
    char times[96];
    std::snprintf(times, sizeof times, "start=%.9f end=%.9f", event.start, event.end);
    return "device=" + device + " kind=" + to_string(event.kind) + " payload=" + event.payload + " " + times +
           " bytes=" + std::to_string(event.bytes);
}

TraceEvent parse_event(const std::string& line)
{
    std::istringstream in(line);
    const char* keys[] = {"device", "kind", "payload", "start", "end", "bytes"};
    std::string values[6];
    for (int f = 0; f < 6; ++f) {
        std::string token;
        if (!(in >> token))
            throw std::invalid_argument("trace line has fewer than six fields: " + line);
        const std::string prefix = std::string(keys[f]) + "=";
        if (token.rfind(prefix, 0) != 0)
            throw std::invalid_argument("expected field '" + std::string(keys[f]) + "' in trace line: " + line);
        values[f] = token.substr(prefix.size());
    }
    TraceEvent e;
    e.device = values[0] == "host" ? kHostDevice : std::stoll(values[0]);
    e.kind = parse_event_kind(values[1]);
    e.payload = values[2];
    e.start = std::stod(values[3]);
    e.end = std::stod(values[4]);
    e.bytes = std::stoull(values[5]);
    return e;
}

void write_trace(std::ostream& out, const ExecutionTrace& trace)
{
    for (const TraceEvent& e : trace.events)
        out << format_event(e) << '\n';
}

std::vector<TraceEvent> read_trace_events(std::istream& in)
{
    std::vector<TraceEvent> events;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            events.push_back(parse_event(line));
    return events;
}

TraceCheck check_trace(const ExecutionTrace& trace, bool check_timing)
{
    TraceCheck check;
    for (std::size_t d = 0; d < trace.high_water.size() && d < trace.budgets.size(); ++d)
        if (trace.high_water[d] > trace.budgets[d])
            check.problems.push_back("device " + std::to_string(d) + " high water " +
                                     std::to_string(trace.high_water[d]) + " exceeds budget " +
                                     std::to_string(trace.budgets[d]));
    if (!check_timing)
        return check;

    // Kernels and accumulations share a device's compute engine.
    std::map<Index, std::vector<const TraceEvent*>> compute;
    std::map<std::pair<Index, std::string>, const TraceEvent*> by_payload;
    for (const TraceEvent& e : trace.events) {
        if (e.end < e.start)
            check.problems.push_back("event ends before it starts: " + format_event(e));
        if (e.kind == EventKind::Kernel || e.kind == EventKind::Accumulate)
            compute[e.device].push_back(&e);
        by_payload[{e.device, e.payload}] = &e;
    }
    for (auto& [device, events] : compute) {
        std::sort(events.begin(), events.end(),
                  [](const TraceEvent* a, const TraceEvent* b) { return a->start < b->start; });
        for (std::size_t i = 1; i < events.size(); ++i)
            if (events[i]->start < events[i - 1]->end)
                check.problems.push_back("overlapping compute on device " + std::to_string(device) + ": " +
                                         events[i - 1]->payload + " and " + events[i]->payload);
    }
    for (const TraceEvent& e : trace.events) {
        if (e.kind != EventKind::Accumulate)
            continue;
        const auto colon = e.payload.find(':');
        const std::string suffix = colon == std::string::npos ? e.payload : e.payload.substr(colon);
        for (const char* producer : {"fp", "partial"}) {
            const auto it = by_payload.find({e.device, producer + suffix});
            if (it == by_payload.end())
                check.problems.push_back("accumulate " + e.payload + " has no " + producer + " event");
            else if (e.start < it->second->end)
                check.problems.push_back("accumulate " + e.payload + " starts before " + it->second->payload +
                                         " ends");
        }
    }
    return check;
}

}  // namespace cbct
