#include "edgefl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgefl/errors.hpp"
#include "edgefl/rng.hpp"

namespace edgefl {

namespace {

// Double-precision working copy of the layer parameters.
struct DoubleParams {
    std::vector<std::vector<double>> weights; // per layer, in*out row-major
    std::vector<std::vector<double>> biases;  // per layer, out
    std::vector<std::pair<uint32_t, uint32_t>> dims;
};

DoubleParams to_double(const WeightSet& w) {
    DoubleParams p;
    p.dims = layer_dims(w);
    p.weights.resize(p.dims.size());
    p.biases.resize(p.dims.size());
    for (std::size_t l = 0; l < p.dims.size(); ++l) {
        const auto& we = w.entries[2 * l].data;
        const auto& be = w.entries[2 * l + 1].data;
        p.weights[l].assign(we.begin(), we.end());
        p.biases[l].assign(be.begin(), be.end());
    }
    return p;
}

WeightSet from_double(const DoubleParams& p, const WeightSet& like) {
    WeightSet out = like;
    for (std::size_t l = 0; l < p.dims.size(); ++l) {
        auto& we = out.entries[2 * l].data;
        auto& be = out.entries[2 * l + 1].data;
        for (std::size_t i = 0; i < we.size(); ++i) we[i] = static_cast<float>(p.weights[l][i]);
        for (std::size_t i = 0; i < be.size(); ++i) be[i] = static_cast<float>(p.biases[l][i]);
    }
    return out;
}

void check_fits(const DoubleParams& p, const Dataset& data) {
    if (data.size() == 0) throw EmptyDataset("trainer: empty dataset");
    if (data.feature_dim != p.dims.front().first)
        throw ShapeMismatch("trainer: dataset feature_dim " + std::to_string(data.feature_dim) +
                            " != model input dim " + std::to_string(p.dims.front().first));
    for (int32_t l : data.labels) {
        if (l < 0 || static_cast<uint32_t>(l) >= p.dims.back().second)
            throw ShapeMismatch("trainer: label " + std::to_string(l) + " outside model's " +
                                std::to_string(p.dims.back().second) + " classes");
    }
}

// Forward pass over a set of sample indices; logits laid out n x classes.
// Keeps per-layer pre-activations and activations when grads are needed.
struct ForwardState {
    std::vector<std::vector<double>> pre;  // z per layer
    std::vector<std::vector<double>> act;  // a per layer boundary (act[0] = input)
};

void forward(const DoubleParams& p, const Dataset& data, const std::vector<std::size_t>& idx,
             ForwardState& st) {
    const std::size_t n = idx.size();
    const std::size_t L = p.dims.size();
    st.pre.assign(L, {});
    st.act.assign(L + 1, {});

    auto& input = st.act[0];
    input.resize(n * data.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const float* r = data.row(idx[i]);
        for (std::size_t j = 0; j < data.feature_dim; ++j)
            input[i * data.feature_dim + j] = static_cast<double>(r[j]);
    }

    for (std::size_t l = 0; l < L; ++l) {
        const auto [din, dout] = p.dims[l];
        const auto& a = st.act[l];
        auto& z = st.pre[l];
        z.assign(n * dout, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* arow = a.data() + i * din;
            double* zrow = z.data() + i * dout;
            for (uint32_t o = 0; o < dout; ++o) zrow[o] = p.biases[l][o];
            for (uint32_t k = 0; k < din; ++k) {
                const double av = arow[k];
                const double* wrow = p.weights[l].data() + static_cast<std::size_t>(k) * dout;
                for (uint32_t o = 0; o < dout; ++o) zrow[o] += av * wrow[o];
            }
        }
        auto& out = st.act[l + 1];
        out = z;
        if (l + 1 < L) {
            for (double& v : out) v = v > 0.0 ? v : 0.0; // ReLU on hidden layers
        }
    }
}

// Mean cross-entropy of the logits in st plus (optionally) the gradient.
double loss_from_logits(const ForwardState& st, const Dataset& data,
                        const std::vector<std::size_t>& idx, uint32_t classes,
                        std::vector<double>* dlogits) {
    const std::size_t n = idx.size();
    const auto& logits = st.act.back();
    double total = 0.0;
    if (dlogits) dlogits->assign(n * classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data() + i * classes;
        double m = z[0];
        for (uint32_t c = 1; c < classes; ++c) m = std::max(m, z[c]);
        double sum = 0.0;
        for (uint32_t c = 0; c < classes; ++c) sum += std::exp(z[c] - m);
        const double lse = m + std::log(sum);
        const int32_t y = data.labels[idx[i]];
        total += lse - z[y];
        if (dlogits) {
            double* d = dlogits->data() + i * classes;
            for (uint32_t c = 0; c < classes; ++c) d[c] = std::exp(z[c] - lse) / static_cast<double>(n);
            d[y] -= 1.0 / static_cast<double>(n);
        }
    }
    return total / static_cast<double>(n);
}

struct Grads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

double backward(const DoubleParams& p, const Dataset& data, const std::vector<std::size_t>& idx,
                Grads& g) {
    const std::size_t n = idx.size();
    const std::size_t L = p.dims.size();
    ForwardState st;
    forward(p, data, idx, st);

    std::vector<double> dz;
    const double loss = loss_from_logits(st, data, idx, p.dims.back().second, &dz);

    g.weights.assign(L, {});
    g.biases.assign(L, {});
    for (std::size_t li = L; li-- > 0;) {
        const auto [din, dout] = p.dims[li];
        auto& gw = g.weights[li];
        auto& gb = g.biases[li];
        gw.assign(static_cast<std::size_t>(din) * dout, 0.0);
        gb.assign(dout, 0.0);
        const auto& a = st.act[li];
        for (std::size_t i = 0; i < n; ++i) {
            const double* arow = a.data() + i * din;
            const double* drow = dz.data() + i * dout;
            for (uint32_t o = 0; o < dout; ++o) gb[o] += drow[o];
            for (uint32_t k = 0; k < din; ++k) {
                double* gwrow = gw.data() + static_cast<std::size_t>(k) * dout;
                const double av = arow[k];
                for (uint32_t o = 0; o < dout; ++o) gwrow[o] += av * drow[o];
            }
        }
        if (li > 0) {
            const uint32_t din_prev = p.dims[li - 1].first;
            (void)din_prev;
            std::vector<double> da(n * din, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* drow = dz.data() + i * dout;
                double* darow = da.data() + i * din;
                for (uint32_t k = 0; k < din; ++k) {
                    const double* wrow = p.weights[li].data() + static_cast<std::size_t>(k) * dout;
                    double acc = 0.0;
                    for (uint32_t o = 0; o < dout; ++o) acc += wrow[o] * drow[o];
                    darow[k] = acc;
                }
            }
            const auto& zprev = st.pre[li - 1];
            dz.assign(n * din, 0.0);
            for (std::size_t x = 0; x < dz.size(); ++x) dz[x] = zprev[x] > 0.0 ? da[x] : 0.0;
        }
    }
    return loss;
}

} // namespace

std::vector<std::pair<uint32_t, uint32_t>> layer_dims(const WeightSet& w) {
    if (w.entries.empty() || w.entries.size() % 2 != 0)
        throw ShapeMismatch("weight set does not hold W/b layer pairs");
    std::vector<std::pair<uint32_t, uint32_t>> dims;
    for (std::size_t l = 0; l * 2 < w.entries.size(); ++l) {
        const auto& we = w.entries[2 * l];
        const auto& be = w.entries[2 * l + 1];
        const std::string wname = "W" + std::to_string(l);
        const std::string bname = "b" + std::to_string(l);
        if (we.name != wname || be.name != bname)
            throw ShapeMismatch("expected entries '" + wname + "'/'" + bname + "', found '" +
                                we.name + "'/'" + be.name + "'");
        if (we.shape.size() != 2 || be.shape.size() != 1 || be.shape[0] != we.shape[1])
            throw ShapeMismatch("entry '" + wname + "' is not a [in,out] matrix with matching bias");
        if (!dims.empty() && dims.back().second != we.shape[0])
            throw ShapeMismatch("layer " + std::to_string(l) + " input dim " +
                                std::to_string(we.shape[0]) + " != previous output dim " +
                                std::to_string(dims.back().second));
        dims.emplace_back(we.shape[0], we.shape[1]);
    }
    return dims;
}

WeightSet init_weights(const ModelSpec& spec) {
    std::vector<uint32_t> dims;
    dims.push_back(spec.feature_dim);
    if (spec.kind == ModelKind::mlp)
        dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    dims.push_back(spec.class_count);

    Rng rng(spec.init_seed);
    WeightSet w;
    w.version = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const uint32_t fan_in = dims[l];
        const uint32_t fan_out = dims[l + 1];
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        WeightEntry we;
        we.name = "W" + std::to_string(l);
        we.shape = {fan_in, fan_out};
        we.data.resize(static_cast<std::size_t>(fan_in) * fan_out);
        for (float& v : we.data) v = static_cast<float>(rng.next_uniform(-s, s));
        WeightEntry be;
        be.name = "b" + std::to_string(l);
        be.shape = {fan_out};
        be.data.assign(fan_out, 0.0f);
        w.entries.push_back(std::move(we));
        w.entries.push_back(std::move(be));
    }
    return w;
}

LossGrad loss_and_grad(const WeightSet& w, const Dataset& batch) {
    DoubleParams p = to_double(w);
    check_fits(p, batch);
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), 0);
    Grads g;
    LossGrad out;
    out.loss = backward(p, batch, idx, g);
    DoubleParams gp;
    gp.dims = p.dims;
    gp.weights = std::move(g.weights);
    gp.biases = std::move(g.biases);
    out.grad = from_double(gp, w);
    out.grad.version = w.version;
    return out;
}

WeightSet node_training(const WeightSet& w, const Dataset& data, const TrainConfig& cfg) {
    DoubleParams p = to_double(w);
    check_fits(p, data);

    std::vector<std::size_t> order(data.size());
    for (uint32_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(cfg.shuffle_seed + epoch);
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
            Grads g;
            backward(p, data, batch, g);
            for (std::size_t l = 0; l < p.dims.size(); ++l) {
                for (std::size_t i = 0; i < p.weights[l].size(); ++i)
                    p.weights[l][i] -= cfg.learning_rate * g.weights[l][i];
                for (std::size_t i = 0; i < p.biases[l].size(); ++i)
                    p.biases[l][i] -= cfg.learning_rate * g.biases[l][i];
            }
        }
    }

    WeightSet out = from_double(p, w);
    out.version = w.version + 1;
    return out;
}

double evaluate(const WeightSet& w, const Dataset& data) {
    DoubleParams p = to_double(w);
    check_fits(p, data);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    ForwardState st;
    forward(p, data, idx, st);
    const uint32_t classes = p.dims.back().second;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double* z = st.act.back().data() + i * classes;
        uint32_t best = 0;
        for (uint32_t c = 1; c < classes; ++c) {
            if (z[c] > z[best]) best = c; // ties keep the lowest index
        }
        if (static_cast<int32_t>(best) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "softmax_linear") return ModelKind::softmax_linear;
    if (s == "mlp") return ModelKind::mlp;
    throw Error("unknown model kind '" + s + "'");
}

std::string to_string(ModelKind k) {
    return k == ModelKind::softmax_linear ? "softmax_linear" : "mlp";
}

} // namespace edgefl
