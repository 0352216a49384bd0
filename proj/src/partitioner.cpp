#include "edgefl/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "edgefl/errors.hpp"
#include "edgefl/rng.hpp"

namespace edgefl {

namespace {

using nlohmann::json;

void check_labels(const std::vector<int32_t>& labels, int32_t class_count) {
    for (int32_t l : labels) {
        if (l < 0 || l >= class_count)
            throw BadLabel("label " + std::to_string(l) + " outside [0, " +
                           std::to_string(class_count) + ")");
    }
}

// Per-class index pools, each shuffled with the plan's seed stream.
std::vector<std::vector<std::size_t>> shuffled_pools(const std::vector<int32_t>& labels,
                                                     int32_t class_count, Rng& rng) {
    std::vector<std::vector<std::size_t>> pools(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) pools[labels[i]].push_back(i);
    for (auto& p : pools) shuffle(p, rng);
    return pools;
}

// Round fractional targets to integers summing to `total` (largest
// remainder; ties resolved by position).
std::vector<std::size_t> largest_remainder(const std::vector<double>& targets, std::size_t total) {
    std::vector<std::size_t> base(targets.size());
    std::vector<std::pair<double, std::size_t>> rem(targets.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        base[i] = static_cast<std::size_t>(std::floor(targets[i]));
        assigned += base[i];
        rem[i] = {targets[i] - std::floor(targets[i]), i};
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t leftover = total > assigned ? total - assigned : 0;
    for (std::size_t i = 0; i < leftover; ++i) base[rem[i % rem.size()].second] += 1;
    return base;
}

void fill_histogram(PartitionPlan& plan, const std::vector<int32_t>& labels, int32_t class_count) {
    plan.class_histogram.assign(plan.node_count, std::vector<std::size_t>(class_count, 0));
    for (uint32_t k = 0; k < plan.node_count; ++k)
        for (std::size_t idx : plan.assignments[k]) plan.class_histogram[k][labels[idx]] += 1;
}

uint32_t read_be_u32(std::ifstream& f, std::size_t& offset, const std::string& path) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (f.gcount() != 4) throw Truncated("IDX file " + path, offset);
    offset += 4;
    return (static_cast<uint32_t>(buf[0]) << 24) | (static_cast<uint32_t>(buf[1]) << 16) |
           (static_cast<uint32_t>(buf[2]) << 8) | static_cast<uint32_t>(buf[3]);
}

} // namespace

PartitionPlan partition_uniform(const std::vector<int32_t>& labels, int32_t class_count,
                                uint32_t node_count, uint64_t seed) {
    if (node_count == 0) throw Error("partition_uniform: node_count must be >= 1");
    check_labels(labels, class_count);

    PartitionPlan plan;
    plan.scheme = PartitionScheme::uniform;
    plan.node_count = node_count;
    plan.seed = seed;
    plan.assignments.assign(node_count, {});

    Rng rng(seed);
    auto pools = shuffled_pools(labels, class_count, rng);
    for (int32_t c = 0; c < class_count; ++c) {
        // Rotate the dealing start per class so leftover samples spread out.
        const std::size_t start = static_cast<std::size_t>(c) % node_count;
        for (std::size_t i = 0; i < pools[c].size(); ++i)
            plan.assignments[(start + i) % node_count].push_back(pools[c][i]);
    }
    for (auto& a : plan.assignments) std::sort(a.begin(), a.end());
    fill_histogram(plan, labels, class_count);
    return plan;
}

std::vector<double> normal_class_proportions(int32_t class_count, uint32_t node_count,
                                             uint32_t node_id, double spread) {
    const double mu = static_cast<double>(node_id) * class_count / node_count;
    const double sigma = spread * class_count;
    std::vector<double> p(class_count);
    double z = 0.0;
    for (int32_t c = 0; c < class_count; ++c) {
        const double t = sigma > 0.0 ? (c - mu) / sigma : 0.0;
        p[c] = sigma > 0.0 ? std::exp(-0.5 * t * t) : (c == std::lround(mu) ? 1.0 : 0.0);
        z += p[c];
    }
    for (double& v : p) v /= z;
    return p;
}

std::vector<std::size_t> normal_demand_counts(int32_t class_count, uint32_t node_count,
                                              uint32_t node_id, double spread, std::size_t quota) {
    const auto p = normal_class_proportions(class_count, node_count, node_id, spread);
    std::vector<double> targets(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) targets[c] = p[c] * static_cast<double>(quota);
    return largest_remainder(targets, quota);
}

PartitionPlan partition_normal(const std::vector<int32_t>& labels, int32_t class_count,
                               uint32_t node_count, uint64_t seed, double spread) {
    if (node_count == 0) throw Error("partition_normal: node_count must be >= 1");
    check_labels(labels, class_count);
    if (labels.size() < node_count)
        throw InsufficientSamples("partition_normal: " + std::to_string(labels.size()) +
                                  " samples for " + std::to_string(node_count) + " nodes");

    const std::size_t K = node_count;
    const std::size_t N = static_cast<std::size_t>(class_count);
    const std::size_t quota = labels.size() / K;

    std::vector<std::size_t> avail(N, 0);
    for (int32_t l : labels) avail[l] += 1;

    // Per-node requested counts from the density, exact per-node quota.
    std::vector<std::vector<std::size_t>> desired(K);
    for (std::size_t k = 0; k < K; ++k)
        desired[k] = normal_demand_counts(class_count, node_count, static_cast<uint32_t>(k + 1),
                                          spread, quota);

    // Cap oversubscribed classes proportionally across nodes.
    std::vector<std::vector<std::size_t>> grant(K, std::vector<std::size_t>(N, 0));
    for (std::size_t c = 0; c < N; ++c) {
        std::size_t demand = 0;
        for (std::size_t k = 0; k < K; ++k) demand += desired[k][c];
        if (demand <= avail[c]) {
            for (std::size_t k = 0; k < K; ++k) grant[k][c] = desired[k][c];
        } else {
            std::vector<double> shares(K);
            for (std::size_t k = 0; k < K; ++k)
                shares[k] = static_cast<double>(desired[k][c]) * avail[c] / demand;
            auto g = largest_remainder(shares, avail[c]);
            for (std::size_t k = 0; k < K; ++k) grant[k][c] = g[k];
        }
    }

    // Backfill shortfalls one sample at a time, round-robin over nodes, from
    // whichever class currently has the most remaining supply.
    std::vector<std::size_t> remaining(N);
    for (std::size_t c = 0; c < N; ++c) {
        std::size_t granted = 0;
        for (std::size_t k = 0; k < K; ++k) granted += grant[k][c];
        remaining[c] = avail[c] - granted;
    }
    std::vector<std::size_t> shortfall(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t got = std::accumulate(grant[k].begin(), grant[k].end(), std::size_t{0});
        shortfall[k] = quota - got;
    }
    bool progress = true;
    while (progress) {
        progress = false;
        for (std::size_t k = 0; k < K; ++k) {
            if (shortfall[k] == 0) continue;
            std::size_t best = 0;
            for (std::size_t c = 1; c < N; ++c)
                if (remaining[c] > remaining[best]) best = c;
            if (remaining[best] == 0) continue;
            grant[k][best] += 1;
            remaining[best] -= 1;
            shortfall[k] -= 1;
            progress = true;
        }
    }

    PartitionPlan plan;
    plan.scheme = PartitionScheme::normal;
    plan.node_count = node_count;
    plan.seed = seed;
    plan.spread = spread;
    plan.assignments.assign(K, {});

    Rng rng(seed);
    auto pools = shuffled_pools(labels, class_count, rng);
    std::vector<std::size_t> cursor(N, 0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t c = 0; c < N; ++c) {
            for (std::size_t i = 0; i < grant[k][c]; ++i)
                plan.assignments[k].push_back(pools[c][cursor[c]++]);
        }
        std::sort(plan.assignments[k].begin(), plan.assignments[k].end());
    }
    fill_histogram(plan, labels, class_count);
    return plan;
}

Dataset generate_blobs(int32_t classes, std::size_t per_class, std::size_t feature_dim,
                       double separation, uint64_t seed) {
    if (classes <= 0) throw Error("generate_blobs: classes must be >= 1");
    if (feature_dim < static_cast<std::size_t>(classes))
        throw Error("generate_blobs: feature_dim must be >= classes");

    Rng rng(seed);

    // Orthonormal directions via Gram-Schmidt on seeded Gaussian vectors;
    // scaled by separation/sqrt(2) they sit pairwise `separation` apart.
    std::vector<std::vector<double>> basis;
    while (basis.size() < static_cast<std::size_t>(classes)) {
        std::vector<double> v(feature_dim);
        for (double& x : v) x = rng.next_gaussian();
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < feature_dim; ++i) dot += v[i] * b[i];
            for (std::size_t i = 0; i < feature_dim; ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-9) continue; // degenerate draw, retry
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    const double scale = separation / std::sqrt(2.0);

    Dataset d;
    d.feature_dim = feature_dim;
    d.class_count = classes;
    d.features.resize(static_cast<std::size_t>(classes) * per_class * feature_dim);
    d.labels.resize(static_cast<std::size_t>(classes) * per_class);
    std::size_t row = 0;
    for (int32_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s, ++row) {
            float* out = d.features.data() + row * feature_dim;
            for (std::size_t j = 0; j < feature_dim; ++j)
                out[j] = static_cast<float>(scale * basis[c][j] + rng.next_gaussian());
            d.labels[row] = c;
        }
    }
    return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgf(images_path, std::ios::binary);
    if (!imgf) throw Error("cannot open " + images_path);
    std::size_t off = 0;
    const uint32_t img_magic = read_be_u32(imgf, off, images_path);
    if (img_magic != 0x00000803u)
        throw BadMagic("images file " + images_path + ": magic " + std::to_string(img_magic));
    const uint32_t count = read_be_u32(imgf, off, images_path);
    const uint32_t rows = read_be_u32(imgf, off, images_path);
    const uint32_t cols = read_be_u32(imgf, off, images_path);
    const std::size_t pixels = static_cast<std::size_t>(count) * rows * cols;
    std::vector<unsigned char> raw(pixels);
    imgf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(imgf.gcount()) != pixels)
        throw Truncated("IDX images " + images_path, off + static_cast<std::size_t>(imgf.gcount()));

    std::ifstream labf(labels_path, std::ios::binary);
    if (!labf) throw Error("cannot open " + labels_path);
    std::size_t loff = 0;
    const uint32_t lab_magic = read_be_u32(labf, loff, labels_path);
    if (lab_magic != 0x00000801u)
        throw BadMagic("labels file " + labels_path + ": magic " + std::to_string(lab_magic));
    const uint32_t lab_count = read_be_u32(labf, loff, labels_path);
    if (lab_count != count)
        throw CountMismatch("IDX pair: " + std::to_string(count) + " images vs " +
                            std::to_string(lab_count) + " labels");
    std::vector<unsigned char> lab_raw(lab_count);
    labf.read(reinterpret_cast<char*>(lab_raw.data()), static_cast<std::streamsize>(lab_count));
    if (static_cast<std::size_t>(labf.gcount()) != lab_count)
        throw Truncated("IDX labels " + labels_path, loff + static_cast<std::size_t>(labf.gcount()));

    Dataset d;
    d.feature_dim = static_cast<std::size_t>(rows) * cols;
    d.features.resize(pixels);
    for (std::size_t i = 0; i < pixels; ++i) d.features[i] = static_cast<float>(raw[i]) / 255.0f;
    d.labels.resize(lab_count);
    int32_t max_label = 0;
    for (std::size_t i = 0; i < lab_count; ++i) {
        d.labels[i] = static_cast<int32_t>(lab_raw[i]);
        max_label = std::max(max_label, d.labels[i]);
    }
    d.class_count = max_label + 1;
    return d;
}

std::string plan_to_json(const PartitionPlan& plan) {
    json j;
    j["scheme"] = plan.scheme == PartitionScheme::uniform ? "uniform" : "normal";
    j["node_count"] = plan.node_count;
    j["seed"] = plan.seed;
    if (plan.scheme == PartitionScheme::normal) j["spread"] = plan.spread;
    j["assignments"] = plan.assignments;
    j["class_histogram"] = plan.class_histogram;
    return j.dump(2);
}

PartitionPlan plan_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    PartitionPlan plan;
    const std::string scheme = j.at("scheme").get<std::string>();
    if (scheme == "uniform") plan.scheme = PartitionScheme::uniform;
    else if (scheme == "normal") plan.scheme = PartitionScheme::normal;
    else throw Error("unknown partition scheme '" + scheme + "'");
    plan.node_count = j.at("node_count").get<uint32_t>();
    plan.seed = j.at("seed").get<uint64_t>();
    plan.spread = j.value("spread", 0.2);
    plan.assignments = j.at("assignments").get<std::vector<std::vector<std::size_t>>>();
    plan.class_histogram = j.value("class_histogram", std::vector<std::vector<std::size_t>>{});
    if (plan.assignments.size() != plan.node_count)
        throw CountMismatch("partition plan: " + std::to_string(plan.assignments.size()) +
                            " assignment lists for " + std::to_string(plan.node_count) + " nodes");
    return plan;
}

void save_plan(const PartitionPlan& plan, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << plan_to_json(plan) << "\n";
}

PartitionPlan load_plan(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return plan_from_json(text);
}

} // namespace edgefl
