#include "edgefl/data.hpp"

#include <cmath>
#include <numeric>

#include "edgefl/errors.hpp"
#include "edgefl/rng.hpp"

namespace edgefl {

void validate(const Dataset& d) {
    if (d.labels.empty()) throw EmptyDataset("dataset has no samples");
    if (d.feature_dim == 0) throw CountMismatch("dataset has feature_dim 0");
    if (d.features.size() != d.labels.size() * d.feature_dim)
        throw CountMismatch("feature matrix size " + std::to_string(d.features.size()) +
                            " != samples*dim " + std::to_string(d.labels.size() * d.feature_dim));
    for (int32_t l : d.labels) {
        if (l < 0 || l >= d.class_count)
            throw BadLabel("label " + std::to_string(l) + " outside [0, " +
                           std::to_string(d.class_count) + ")");
    }
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.feature_dim = d.feature_dim;
    out.class_count = d.class_count;
    out.features.reserve(indices.size() * d.feature_dim);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        const float* r = d.row(i);
        out.features.insert(out.features.end(), r, r + d.feature_dim);
        out.labels.push_back(d.labels[i]);
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& d, double test_fraction, uint64_t seed) {
    if (d.size() == 0) throw EmptyDataset("cannot split an empty dataset");
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(order, rng);
    auto n_test = static_cast<std::size_t>(std::ceil(static_cast<double>(d.size()) * test_fraction));
    if (n_test >= d.size()) n_test = d.size() - 1; // keep at least one training sample
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + n_test);
    std::vector<std::size_t> train_idx(order.begin() + n_test, order.end());
    return {subset(d, train_idx), subset(d, test_idx)};
}

} // namespace edgefl
