#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace edgefl {

enum class EventKind { send, receive, train_start, deploy, evaluate };

// One timestamped record in a node's event stream. Everything reported by
// the metrics module derives from these.
struct RoundEvent {
    std::string node;
    int round = 0;
    EventKind kind = EventKind::deploy;
    uint64_t timestamp_ms = 0;
    std::optional<std::string> counterpart;   // send/receive
    std::optional<uint64_t> payload_version;  // send/receive/deploy
    std::optional<double> accuracy;           // evaluate
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

// Wall-clock milliseconds. Single-host experiments share this clock, which
// is what makes cross-process send/receive subtraction meaningful.
uint64_t now_ms();

// Append-only, thread-safe event sink. When a path is set every event is
// also written through as one JSON line so crashed runs stay analyzable.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(const std::string& jsonl_path);

    void open(const std::string& jsonl_path);
    void append(RoundEvent ev);
    std::vector<RoundEvent> snapshot() const;

private:
    mutable std::mutex mu_;
    std::vector<RoundEvent> events_;
    std::string path_;
};

std::string event_to_json(const RoundEvent& ev);
RoundEvent event_from_json(const std::string& line);
std::vector<RoundEvent> load_events(const std::string& jsonl_path);
// Merge all files matching a '*' glob pattern (single directory level).
std::vector<RoundEvent> load_events_glob(const std::string& pattern);

// Mean over all matched send/receive pairs of (receive.ts - send.ts) in one
// round. Pairs match on (nodes swapped as counterparts, payload_version,
// round). Throws NoPairs.
double weights_update_latency(const std::vector<RoundEvent>& events, int round);

// Mean of consecutive deploy-timestamp differences for one node. Throws
// InsufficientDeploys when the node has fewer than two deploys.
double model_evolution_time(const std::vector<RoundEvent>& events, const std::string& node);

struct ClassificationReport {
    // accuracy keyed (round, node)
    std::map<std::pair<int, std::string>, double> table;
    std::map<int, double> round_mean;
};

ClassificationReport classification_report(const std::vector<RoundEvent>& events);

// Writes report.csv (round,node,metric,value) and summary.json under out_dir.
void write_report(const std::vector<RoundEvent>& events, const std::string& out_dir);

} // namespace edgefl
