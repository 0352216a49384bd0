#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgefl/data.hpp"
#include "edgefl/fedavg.hpp"
#include "edgefl/metrics.hpp"
#include "edgefl/partitioner.hpp"
#include "edgefl/trainer.hpp"

namespace edgefl {

struct BlobSpec {
    int32_t classes = 3;
    std::size_t per_class = 100;
    std::size_t feature_dim = 8;
    double separation = 6.0;
    // dataset seed defaults to the experiment seed; override for ablations
    std::optional<uint64_t> seed;
};

struct IdxPaths {
    std::string images;
    std::string labels;
};

struct JoinEntry {
    int node_id = 0;
    int round = 0;
};

enum class ExperimentMode { lockstep, async_processes };

// Full description of one run. Serializes to/from the JSON config file the
// CLI consumes; every field has a flag override.
struct ExperimentConfig {
    uint32_t nodes = 3;
    int rounds = 5;
    double alpha = 1.0;
    ModelSpec model; // feature_dim/class_count 0 -> resolved from the dataset
    TrainConfig train; // shuffle_seed is derived from `seed`, not taken from here
    std::optional<BlobSpec> blobs;
    std::optional<IdxPaths> idx;
    PartitionScheme distribution = PartitionScheme::uniform;
    double spread = 0.2;
    std::vector<JoinEntry> join_schedule;
    std::vector<JoinEntry> leave_schedule;
    // async (free-running peer processes) is the normal operating mode;
    // lockstep exists for oracle comparisons and bit-reproducible runs
    ExperimentMode mode = ExperimentMode::async_processes;
    bool include_self = true;
    std::string aggregation = "uniform_average";
    uint64_t seed = 42;
    std::string out_dir = "edgefl-run";
    int port_base = 7000; // registry at base, node k at base+k; 0 = ephemeral (lockstep only)
    int round_pace_ms = 0;
    int serve_delay_ms = 0;
    double test_fraction = 0.2;
    std::string exe_path; // async mode; defaults to the running binary
    int timeout_s = 300;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

// Blobs or IDX per the config (blobs seed defaults to cfg.seed).
Dataset materialize_dataset(const ExperimentConfig& cfg);
// Partition over all node ids that ever participate (initial + joiners).
PartitionPlan compute_partition(const ExperimentConfig& cfg, const Dataset& data);
// Model spec with dataset-derived dims filled in.
ModelSpec resolve_model(const ExperimentConfig& cfg, const Dataset& data);

struct JoinOutcome {
    std::string node;
    int first_round = 0;
    double first_accuracy = 0.0;
    double incumbent_mean = 0.0; // incumbents' mean accuracy at first_round
};

struct ExperimentReport {
    std::vector<RoundEvent> events;
    std::map<int, double> round_mean_accuracy;
    std::map<std::pair<int, std::string>, double> accuracy_table;
    std::vector<WeightSet> consensus_per_round; // lockstep mode only
    std::vector<JoinOutcome> join_outcomes;
    std::string out_dir;
    bool all_completed = false;
};

// Materializes the config: registry + K peers (+ scheduled joins/leaves),
// merged event logs, report files under out_dir. Lockstep mode runs peers
// in-process with a per-round barrier; async mode launches one OS process
// per peer over loopback HTTP.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct ComparisonReport {
    ExperimentReport edgefl;
    FedAvgResult fedavg;
    std::map<int, double> edgefl_mean_accuracy;
    std::map<int, double> fedavg_mean_accuracy;
    std::string csv_path;
};

// Runs the EdgeFL arm and the centralized FedAvg arm on identical data,
// partition and seeds; writes side-by-side per-round accuracy CSV.
ComparisonReport run_comparison(const ExperimentConfig& cfg);

} // namespace edgefl
