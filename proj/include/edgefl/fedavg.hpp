#pragma once

#include <cstdint>
#include <vector>

#include "edgefl/data.hpp"
#include "edgefl/partitioner.hpp"
#include "edgefl/trainer.hpp"
#include "edgefl/weights.hpp"

namespace edgefl {

enum class ClientWeighting { uniform, by_sample_count };

// Centralized FedAvg reference arm, run in-process with no network.
struct FedAvgConfig {
    uint32_t node_count = 0;
    double client_fraction = 1.0; // fraction of clients trained per round
    int rounds = 0;
    TrainConfig train;
    ModelSpec model;
    PartitionPlan partition;
    uint64_t seed = 0;
    double test_fraction = 0.2;
    ClientWeighting weighting = ClientWeighting::uniform;
};

struct FedAvgRound {
    WeightSet global;
    std::vector<double> node_accuracy; // NaN for nodes skipped this round
};

struct FedAvgResult {
    std::vector<FedAvgRound> rounds;
};

// Per round: broadcast the global weights, train each selected node on its
// local train split, average the returned sets, evaluate each trained node
// on its local test split. Fully deterministic given the seed. Per-node
// shuffle and split seeds come from derive_node_seeds so the trajectory is
// directly comparable with a lockstep EdgeFL run.
FedAvgResult run_fedavg(const FedAvgConfig& cfg, const Dataset& data);

} // namespace edgefl
