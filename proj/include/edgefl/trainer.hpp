#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgefl/data.hpp"
#include "edgefl/weights.hpp"

namespace edgefl {

enum class ModelKind { softmax_linear, mlp };

// Fully determines the (name, shape) sequence of a model's WeightSet.
// Same spec + same seed -> bit-identical initial weights.
struct ModelSpec {
    ModelKind kind = ModelKind::softmax_linear;
    uint32_t feature_dim = 0;
    uint32_t class_count = 0;
    std::vector<uint32_t> hidden_dims; // mlp only
    uint64_t init_seed = 0;
};

struct TrainConfig {
    uint32_t batch_size = 16;     // B
    uint32_t local_epochs = 1;    // E
    double learning_rate = 0.1;   // gamma
    uint64_t shuffle_seed = 0;
};

struct LossGrad {
    double loss = 0.0;
    WeightSet grad;
};

// Layer i contributes entries Wi [in, out] (row-major) and bi [out]. Hidden
// layers use ReLU, the output layer feeds a softmax. Biases start at zero,
// weight matrices are Glorot-uniform draws seeded by init_seed. version = 0.
WeightSet init_weights(const ModelSpec& spec);

// Parses a WeightSet produced with the W0/b0/W1/b1... layout back into layer
// dimensions. Throws ShapeMismatch if the entries do not form such a chain.
std::vector<std::pair<uint32_t, uint32_t>> layer_dims(const WeightSet& w);

// Mean cross-entropy over the batch and its exact gradient (same layout as
// w). Forward and backward run in 64-bit arithmetic.
LossGrad loss_and_grad(const WeightSet& w, const Dataset& batch);

// Plain mini-batch SGD per Node_Training: E epochs over batches of size B,
// reshuffled each epoch from shuffle_seed + epoch index; the final short
// batch is kept. Returns weights with version = w.version + 1. Deterministic
// in (w, data, cfg).
WeightSet node_training(const WeightSet& w, const Dataset& data, const TrainConfig& cfg);

// Fraction of samples whose argmax class equals the label. Ties break to the
// lowest class index.
double evaluate(const WeightSet& w, const Dataset& data);

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

} // namespace edgefl
