#include "edgefl/fedavg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edgefl/errors.hpp"
#include "edgefl/rng.hpp"

namespace edgefl {

FedAvgResult run_fedavg(const FedAvgConfig& cfg, const Dataset& data) {
    if (cfg.node_count == 0) throw Error("run_fedavg: node_count must be >= 1");
    if (cfg.partition.assignments.size() != cfg.node_count)
        throw CountMismatch("run_fedavg: partition has " +
                            std::to_string(cfg.partition.assignments.size()) + " nodes, config says " +
                            std::to_string(cfg.node_count));
    if (cfg.client_fraction <= 0.0 || cfg.client_fraction > 1.0)
        throw Error("run_fedavg: client_fraction must be in (0, 1]");

    const uint32_t K = cfg.node_count;
    struct NodeData {
        Dataset train;
        Dataset test;
        TrainConfig cfg;
        std::string name;
    };
    const auto seeds = derive_experiment_seeds(cfg.seed);
    std::vector<NodeData> nodes(K);
    for (uint32_t k = 0; k < K; ++k) {
        Dataset local = subset(data, cfg.partition.assignments[k]);
        if (local.size() == 0)
            throw EmptyDataset("run_fedavg: node " + std::to_string(k + 1) + " has no samples");
        auto [train, test] = split_train_test(local, cfg.test_fraction, seeds.split_seed);
        nodes[k].train = std::move(train);
        nodes[k].test = std::move(test);
        nodes[k].cfg = cfg.train;
        nodes[k].cfg.shuffle_seed = seeds.shuffle_seed;
        nodes[k].name = "node-" + std::to_string(k + 1);
    }

    Rng selection_rng(splitmix64(cfg.seed ^ 0xFEDAFEDAULL));
    WeightSet global = init_weights(cfg.model);

    FedAvgResult result;
    for (int r = 0; r < cfg.rounds; ++r) {
        std::vector<uint32_t> participating(K);
        for (uint32_t k = 0; k < K; ++k) participating[k] = k;
        if (cfg.client_fraction < 1.0) {
            auto m = static_cast<std::size_t>(
                std::max(std::floor(static_cast<double>(K) * cfg.client_fraction), 1.0));
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t j =
                    i + static_cast<std::size_t>(selection_rng.next_below(participating.size() - i));
                std::swap(participating[i], participating[j]);
            }
            participating.resize(m);
            std::sort(participating.begin(), participating.end());
        }

        FedAvgRound round;
        round.node_accuracy.assign(K, std::numeric_limits<double>::quiet_NaN());

        std::vector<WeightSet> updates;
        updates.reserve(participating.size());
        for (uint32_t k : participating) {
            WeightSet u = node_training(global, nodes[k].train, nodes[k].cfg);
            u.producer = nodes[k].name;
            round.node_accuracy[k] = evaluate(u, nodes[k].test);
            updates.push_back(std::move(u));
        }

        // Same combine path as the peers' default policy: sort by producer,
        // then average (uniform or sample-count weighted).
        std::sort(updates.begin(), updates.end(),
                  [](const WeightSet& a, const WeightSet& b) { return a.producer < b.producer; });
        if (cfg.weighting == ClientWeighting::uniform) {
            global = average(updates, std::nullopt, "fedavg-server");
        } else {
            std::vector<double> w(updates.size());
            double total = 0.0;
            for (std::size_t i = 0; i < updates.size(); ++i) {
                // updates are sorted by name; recover the node's train size
                for (uint32_t k = 0; k < K; ++k)
                    if (nodes[k].name == updates[i].producer)
                        w[i] = static_cast<double>(nodes[k].train.size());
                total += w[i];
            }
            for (double& x : w) x /= total;
            global = average(updates, w, "fedavg-server");
        }

        round.global = global;
        result.rounds.push_back(std::move(round));
    }
    return result;
}

} // namespace edgefl
