#include "edgefl/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "edgefl/errors.hpp"

namespace edgefl {

namespace {
using nlohmann::json;
namespace fs = std::filesystem;

bool glob_match(const std::string& pattern, const std::string& name) {
    // '*' wildcards only, which is all the CLI promises.
    std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

} // namespace

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::send: return "send";
        case EventKind::receive: return "receive";
        case EventKind::train_start: return "train_start";
        case EventKind::deploy: return "deploy";
        case EventKind::evaluate: return "evaluate";
    }
    return "unknown";
}

EventKind event_kind_from_string(const std::string& s) {
    if (s == "send") return EventKind::send;
    if (s == "receive") return EventKind::receive;
    if (s == "train_start") return EventKind::train_start;
    if (s == "deploy") return EventKind::deploy;
    if (s == "evaluate") return EventKind::evaluate;
    throw Error("unknown event kind '" + s + "'");
}

uint64_t now_ms() {
    using namespace std::chrono;
    return static_cast<uint64_t>(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

EventLog::EventLog(const std::string& jsonl_path) { open(jsonl_path); }

void EventLog::open(const std::string& jsonl_path) {
    std::lock_guard lock(mu_);
    path_ = jsonl_path;
    if (!path_.empty()) {
        fs::path p(path_);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(path_, std::ios::trunc); // start a fresh stream
    }
}

void EventLog::append(RoundEvent ev) {
    std::lock_guard lock(mu_);
    if (!path_.empty()) {
        std::ofstream f(path_, std::ios::app);
        f << event_to_json(ev) << "\n";
    }
    events_.push_back(std::move(ev));
}

std::vector<RoundEvent> EventLog::snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::string event_to_json(const RoundEvent& ev) {
    json j;
    j["node"] = ev.node;
    j["round"] = ev.round;
    j["kind"] = to_string(ev.kind);
    j["timestamp_ms"] = ev.timestamp_ms;
    if (ev.counterpart) j["counterpart"] = *ev.counterpart;
    if (ev.payload_version) j["payload_version"] = *ev.payload_version;
    if (ev.accuracy) j["accuracy"] = *ev.accuracy;
    return j.dump();
}

RoundEvent event_from_json(const std::string& line) {
    json j = json::parse(line);
    RoundEvent ev;
    ev.node = j.at("node").get<std::string>();
    ev.round = j.at("round").get<int>();
    ev.kind = event_kind_from_string(j.at("kind").get<std::string>());
    ev.timestamp_ms = j.at("timestamp_ms").get<uint64_t>();
    if (j.contains("counterpart")) ev.counterpart = j["counterpart"].get<std::string>();
    if (j.contains("payload_version")) ev.payload_version = j["payload_version"].get<uint64_t>();
    if (j.contains("accuracy")) ev.accuracy = j["accuracy"].get<double>();
    return ev;
}

std::vector<RoundEvent> load_events(const std::string& jsonl_path) {
    std::ifstream f(jsonl_path);
    if (!f) throw Error("cannot open " + jsonl_path);
    std::vector<RoundEvent> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(event_from_json(line));
    }
    return out;
}

std::vector<RoundEvent> load_events_glob(const std::string& pattern) {
    fs::path p(pattern);
    fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    const std::string name_pattern = p.filename().string();
    std::vector<fs::path> files;
    if (!fs::exists(dir)) throw Error("no such directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && glob_match(name_pattern, e.path().filename().string()))
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RoundEvent> out;
    for (const auto& f : files) {
        auto evs = load_events(f.string());
        out.insert(out.end(), evs.begin(), evs.end());
    }
    return out;
}

double weights_update_latency(const std::vector<RoundEvent>& events, int round) {
    // key: (sender, receiver, version) -> timestamps
    std::map<std::tuple<std::string, std::string, uint64_t>, uint64_t> sends;
    for (const auto& ev : events) {
        if (ev.kind == EventKind::send && ev.round == round && ev.counterpart && ev.payload_version)
            sends[{ev.node, *ev.counterpart, *ev.payload_version}] = ev.timestamp_ms;
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (const auto& ev : events) {
        if (ev.kind != EventKind::receive || ev.round != round || !ev.counterpart || !ev.payload_version)
            continue;
        auto it = sends.find({*ev.counterpart, ev.node, *ev.payload_version});
        if (it == sends.end()) continue;
        total += static_cast<double>(ev.timestamp_ms) - static_cast<double>(it->second);
        ++pairs;
    }
    if (pairs == 0) throw NoPairs("no matched send/receive pairs in round " + std::to_string(round));
    return total / static_cast<double>(pairs);
}

double model_evolution_time(const std::vector<RoundEvent>& events, const std::string& node) {
    std::vector<uint64_t> deploys;
    for (const auto& ev : events)
        if (ev.kind == EventKind::deploy && ev.node == node) deploys.push_back(ev.timestamp_ms);
    if (deploys.size() < 2)
        throw InsufficientDeploys("node " + node + " has " + std::to_string(deploys.size()) +
                                  " deploys, need >= 2");
    std::sort(deploys.begin(), deploys.end());
    double total = 0.0;
    for (std::size_t i = 1; i < deploys.size(); ++i)
        total += static_cast<double>(deploys[i] - deploys[i - 1]);
    return total / static_cast<double>(deploys.size() - 1);
}

ClassificationReport classification_report(const std::vector<RoundEvent>& events) {
    ClassificationReport rep;
    std::map<int, std::pair<double, std::size_t>> acc;
    for (const auto& ev : events) {
        if (ev.kind != EventKind::evaluate || !ev.accuracy) continue;
        rep.table[{ev.round, ev.node}] = *ev.accuracy;
        acc[ev.round].first += *ev.accuracy;
        acc[ev.round].second += 1;
    }
    for (const auto& [round, sum_count] : acc)
        rep.round_mean[round] = sum_count.first / static_cast<double>(sum_count.second);
    return rep;
}

void write_report(const std::vector<RoundEvent>& events, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto rep = classification_report(events);

    std::set<std::string> nodes;
    std::set<int> rounds;
    for (const auto& ev : events) {
        nodes.insert(ev.node);
        rounds.insert(ev.round);
    }

    std::ofstream csv(fs::path(out_dir) / "report.csv");
    csv << "round,node,metric,value\n";
    for (const auto& [key, value] : rep.table)
        csv << key.first << "," << key.second << ",accuracy," << value << "\n";
    for (const auto& [round, mean] : rep.round_mean)
        csv << round << ",network,mean_accuracy," << mean << "\n";
    for (int r : rounds) {
        try {
            const double latency = weights_update_latency(events, r);
            csv << r << ",network,weights_update_latency_ms," << latency << "\n";
        } catch (const NoPairs&) {
        }
    }
    // Evolution spans rounds: reported with round -1 meaning "whole run".
    for (const auto& node : nodes) {
        try {
            const double evolution = model_evolution_time(events, node);
            csv << -1 << "," << node << ",model_evolution_time_ms," << evolution << "\n";
        } catch (const InsufficientDeploys&) {
        }
    }

    json summary;
    summary["clock_note"] =
        "timestamps come from one host's wall clock; cross-host latency numbers would need clock sync";
    json jrounds = json::array();
    double final_mean = 0.0;
    for (const auto& [round, mean] : rep.round_mean) {
        json jr;
        jr["round"] = round;
        jr["mean_accuracy"] = mean;
        json per_node;
        for (const auto& [key, value] : rep.table)
            if (key.first == round) per_node[key.second] = value;
        jr["nodes"] = per_node;
        jrounds.push_back(jr);
        final_mean = mean;
    }
    summary["rounds"] = jrounds;
    if (!rep.round_mean.empty()) summary["final_mean_accuracy"] = final_mean;

    double latency_total = 0.0;
    std::size_t latency_rounds = 0;
    for (int r : rounds) {
        try {
            latency_total += weights_update_latency(events, r);
            ++latency_rounds;
        } catch (const NoPairs&) {
        }
    }
    if (latency_rounds > 0)
        summary["mean_weights_update_latency_ms"] = latency_total / static_cast<double>(latency_rounds);

    json evo;
    double evo_total = 0.0;
    std::size_t evo_nodes = 0;
    for (const auto& node : nodes) {
        try {
            const double e = model_evolution_time(events, node);
            evo[node] = e;
            evo_total += e;
            ++evo_nodes;
        } catch (const InsufficientDeploys&) {
        }
    }
    if (evo_nodes > 0) {
        summary["per_node_model_evolution_ms"] = evo;
        summary["mean_model_evolution_ms"] = evo_total / static_cast<double>(evo_nodes);
    }

    std::ofstream js(fs::path(out_dir) / "summary.json");
    js << summary.dump(2) << "\n";
}

} // namespace edgefl
