#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "edgefl/data.hpp"
#include "edgefl/metrics.hpp"
#include "edgefl/registry.hpp"
#include "edgefl/rng.hpp"
#include "edgefl/trainer.hpp"
#include "edgefl/weights.hpp"

namespace edgefl {

struct PeerConfig {
    std::string hostname;
    int serve_port = 0;                       // 0 picks a free port
    std::string advertise_host = "127.0.0.1"; // host part of the registered address
    std::vector<std::string> registries;      // ordered registry base URLs
    double alpha = 1.0;                       // ratio of aggregated peers
    std::string aggregation = "uniform_average";
    bool include_self = true;
    int fetch_timeout_ms = 2000;
    uint64_t rng_seed = 0;
    bool stay_resident = false; // keep serving the final model after leaving
    int serve_delay_ms = 0;     // artificial link delay, used by the metrics harness
    std::string events_path;    // optional JSONL write-through
};

enum class PeerState { created, started, left };

// Combine own (optional) and fetched models into one set. Policies are
// looked up by identifier so alternative aggregations can be plugged in
// without touching the round loop.
struct AggregationPolicy {
    std::string identifier;
    std::function<WeightSet(const std::optional<WeightSet>& own, const std::vector<WeightSet>& fetched)>
        combine;
};

void register_aggregation_policy(AggregationPolicy policy);
const AggregationPolicy& aggregation_policy(const std::string& identifier);

// m = max(floor(len(active)*alpha), 1), clamped to len(active); uniform
// sample without replacement. Callers remove self from `active` first.
std::vector<PeerRecord> select_peers(const std::vector<PeerRecord>& active, double alpha, Rng& rng);

struct RoundSummary {
    int round = 0;
    double accuracy = 0.0;
    uint64_t published_version = 0;
    std::size_t models_fetched = 0;
};

struct RunOptions {
    double test_fraction = 0.2; // local train/test split of the node's partition
    uint64_t split_seed = 0;
    int round_pace_ms = 0; // fixed-pace rounds when > 0
    int round_offset = 0;  // shift logged round indices (mid-run joiners)
};

// An FL edge node: serves its latest model in the background, pulls models
// from a random peer subset, aggregates, trains, publishes.
class Peer {
public:
    explicit Peer(PeerConfig cfg);
    ~Peer();

    Peer(const Peer&) = delete;
    Peer& operator=(const Peer&) = delete;

    // Registers with the first reachable registry and brings the model
    // serving endpoint up. Throws NoRegistryReachable, PortInUse.
    void start();

    // Atomically swaps the served snapshot; records a deploy event.
    void publish(WeightSet w);

    // One pull-aggregate pass: peer list -> drop self -> select -> parallel
    // fetch -> drop failures -> combine. Returns own model when every fetch
    // fails; throws NoPeersAvailable when nothing was fetched and no own
    // model exists.
    WeightSet aggregation_func();

    // Removes this node from the registry (best effort) and transitions to
    // left. Serving stays up when stay_resident is set.
    void unregister_peer();

    // The full per-round loop: aggregate -> train -> publish -> evaluate,
    // with init_weights(spec) as the fallback when the network is empty.
    std::vector<RoundSummary> run_rounds(const Dataset& data, const ModelSpec& spec,
                                         const TrainConfig& cfg, int rounds,
                                         const RunOptions& opts = {});

    // Aggregation with the fresh-network fallback; used by run_rounds and by
    // the lockstep orchestrator, which drives phases itself.
    WeightSet aggregate_or_init(const ModelSpec& spec);
    void set_round(int round);

    std::shared_ptr<const WeightSet> latest() const;
    PeerState state() const;
    int port() const;               // actual bound port once started
    std::string address() const;    // advertised host:port
    EventLog& events();
    const PeerConfig& config() const;

private:
    std::optional<WeightSet> fetch_one(const PeerRecord& target, int round);

    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace edgefl
