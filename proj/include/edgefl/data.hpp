#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace edgefl {

// Labeled feature matrix. features is num_samples x feature_dim, row-major.
struct Dataset {
    std::vector<float> features;
    std::size_t feature_dim = 0;
    std::vector<int32_t> labels;
    int32_t class_count = 0;

    std::size_t size() const { return labels.size(); }
    const float* row(std::size_t i) const { return features.data() + i * feature_dim; }
};

// Throws EmptyDataset / BadLabel / CountMismatch on invariant violations.
void validate(const Dataset& d);

// New dataset holding the given sample indices, in order.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices);

// Seeded shuffle-then-cut split. Second element holds ceil(size*test_fraction)
// samples. Used for the per-node local train/test split.
std::pair<Dataset, Dataset> split_train_test(const Dataset& d, double test_fraction, uint64_t seed);

} // namespace edgefl
