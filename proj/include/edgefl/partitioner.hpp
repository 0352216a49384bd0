#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgefl/data.hpp"

namespace edgefl {

enum class PartitionScheme { uniform, normal };

// Assignment of dataset sample indices to each of K nodes. Node k (1-based
// id) owns assignments[k-1]. Assignments are disjoint; the normal scheme may
// leave a remainder of samples unassigned.
struct PartitionPlan {
    PartitionScheme scheme = PartitionScheme::uniform;
    uint32_t node_count = 0;
    uint64_t seed = 0;
    double spread = 0.2; // normal scheme only
    std::vector<std::vector<std::size_t>> assignments;
    std::vector<std::vector<std::size_t>> class_histogram; // K x N counts
};

// Per-class seeded shuffle dealt round-robin: per-class node counts differ by
// at most one and every sample is assigned.
PartitionPlan partition_uniform(const std::vector<int32_t>& labels, int32_t class_count,
                                uint32_t node_count, uint64_t seed);

// Class-skewed split where node k's class proportions follow the normal
// density with mu_k = k*N/K and sigma = spread*N (node ids 1..K). Every node
// receives exactly floor(total/K) samples; per-class demand beyond supply is
// capped proportionally and backfilled from the classes with the most
// remaining samples.
PartitionPlan partition_normal(const std::vector<int32_t>& labels, int32_t class_count,
                               uint32_t node_count, uint64_t seed, double spread = 0.2);

// The normalized class-proportion vector used by partition_normal for node k.
std::vector<double> normal_class_proportions(int32_t class_count, uint32_t node_count,
                                             uint32_t node_id, double spread);

// Node k's requested per-class counts before availability capping: the
// largest-remainder rounding of proportion*quota, summing to quota exactly.
std::vector<std::size_t> normal_demand_counts(int32_t class_count, uint32_t node_count,
                                              uint32_t node_id, double spread, std::size_t quota);

// Gaussian class clusters (unit noise) with means pairwise `separation`
// apart on a seeded random simplex. Requires feature_dim >= classes.
Dataset generate_blobs(int32_t classes, std::size_t per_class, std::size_t feature_dim,
                       double separation, uint64_t seed);

// IDX (MNIST-style) ingestion: big-endian magic 0x803 for images and 0x801
// for labels. Pixels scale to [0,1] floats, images flatten row-major.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// JSON round-trip of a plan, for experiment reproducibility.
std::string plan_to_json(const PartitionPlan& plan);
PartitionPlan plan_from_json(const std::string& json_text);
void save_plan(const PartitionPlan& plan, const std::string& path);
PartitionPlan load_plan(const std::string& path);

} // namespace edgefl
