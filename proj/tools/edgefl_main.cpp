#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgefl/errors.hpp"
#include "edgefl/experiment.hpp"
#include "edgefl/fedavg.hpp"
#include "edgefl/metrics.hpp"
#include "edgefl/partitioner.hpp"
#include "edgefl/peer.hpp"
#include "edgefl/registry.hpp"
#include "edgefl/rng.hpp"
#include "edgefl/trainer.hpp"

namespace {

using namespace edgefl;
using nlohmann::json;
namespace fs = std::filesystem;

volatile std::sig_atomic_t g_stop = 0;

void handle_signal(int) { g_stop = 1; }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Accepts "blobs:classes=5,per_class=400,dim=16,sep=6.0,seed=42",
// "idx:<images>,<labels>", or a directory holding an MNIST-style IDX pair.
Dataset load_data_arg(const std::string& arg, uint64_t default_seed) {
    if (arg.rfind("blobs:", 0) == 0) {
        int32_t classes = 3;
        std::size_t per_class = 100, dim = 8;
        double sep = 6.0;
        uint64_t seed = default_seed;
        for (const auto& kv : split(arg.substr(6), ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw Error("bad blobs spec item '" + kv + "'");
            const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (key == "classes") classes = std::stoi(val);
            else if (key == "per_class") per_class = std::stoul(val);
            else if (key == "dim") dim = std::stoul(val);
            else if (key == "sep") sep = std::stod(val);
            else if (key == "seed") seed = std::stoull(val);
            else throw Error("unknown blobs key '" + key + "'");
        }
        return generate_blobs(classes, per_class, dim, sep, seed);
    }
    if (arg.rfind("idx:", 0) == 0) {
        const auto parts = split(arg.substr(4), ',');
        if (parts.size() != 2) throw Error("idx spec must be idx:<images>,<labels>");
        return load_idx(parts[0], parts[1]);
    }
    // directory: try the conventional MNIST file names
    const fs::path dir(arg);
    for (const auto& [imgs, labs] :
         {std::pair{"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"},
          std::pair{"train-images-idx3-ubyte", "train-labels-idx1-ubyte"}}) {
        if (fs::exists(dir / imgs) && fs::exists(dir / labs))
            return load_idx((dir / imgs).string(), (dir / labs).string());
    }
    throw Error("no IDX pair found under '" + arg + "'");
}

int cmd_registry(int port, const std::string& bind) {
    RegistryServer server(port, bind);
    server.start();
    std::cout << "registry listening on " << server.base_url() << std::endl;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

struct PeerArgs {
    std::string hostname;
    int port = 0;
    std::string registry;
    double alpha = 1.0;
    uint32_t epochs = 1;
    uint32_t batch_size = 16;
    double lr = 0.1;
    int rounds = 1;
    std::string data;
    std::string partition_file;
    int node_id = 1;
    uint64_t seed = 42;
    bool no_include_self = false;
    bool stay_resident = false;
    std::string aggregation = "uniform_average";
    std::string metrics_out;
    std::string model_kind = "softmax_linear";
    std::string hidden_dims;
    uint64_t init_seed = 0;
    double test_fraction = 0.2;
    int round_offset = 0;
    int round_pace_ms = 0;
    int serve_delay_ms = 0;
    int linger_ms = 0;
};

int cmd_peer(const PeerArgs& a) {
    Dataset data = load_data_arg(a.data, a.seed);
    Dataset local = data;
    if (!a.partition_file.empty()) {
        const PartitionPlan plan = load_plan(a.partition_file);
        if (a.node_id < 1 || a.node_id > static_cast<int>(plan.node_count))
            throw Error("node id " + std::to_string(a.node_id) + " outside partition plan (K=" +
                        std::to_string(plan.node_count) + ")");
        local = subset(data, plan.assignments[a.node_id - 1]);
    }
    if (local.size() == 0) throw EmptyDataset("node partition is empty");

    const auto seeds = derive_experiment_seeds(a.seed);

    ModelSpec spec;
    spec.kind = model_kind_from_string(a.model_kind);
    spec.feature_dim = static_cast<uint32_t>(local.feature_dim);
    spec.class_count = static_cast<uint32_t>(local.class_count);
    spec.init_seed = a.init_seed != 0 ? a.init_seed : a.seed;
    if (!a.hidden_dims.empty()) {
        for (const auto& d : split(a.hidden_dims, ','))
            spec.hidden_dims.push_back(static_cast<uint32_t>(std::stoul(d)));
    }

    TrainConfig tcfg;
    tcfg.batch_size = a.batch_size;
    tcfg.local_epochs = a.epochs;
    tcfg.learning_rate = a.lr;
    tcfg.shuffle_seed = seeds.shuffle_seed;

    PeerConfig pc;
    pc.hostname = a.hostname.empty() ? "node-" + std::to_string(a.node_id) : a.hostname;
    pc.serve_port = a.port;
    pc.registries = split(a.registry, ',');
    pc.alpha = a.alpha;
    pc.aggregation = a.aggregation;
    pc.include_self = !a.no_include_self;
    pc.stay_resident = a.stay_resident;
    pc.rng_seed = derive_peer_rng_seed(a.seed, a.node_id);
    pc.serve_delay_ms = a.serve_delay_ms;
    pc.events_path = a.metrics_out;

    Peer peer(pc);
    peer.start();

    RunOptions opts;
    opts.test_fraction = a.test_fraction;
    opts.split_seed = seeds.split_seed;
    opts.round_pace_ms = a.round_pace_ms;
    opts.round_offset = a.round_offset;
    const auto summaries = peer.run_rounds(local, spec, tcfg, a.rounds, opts);
    peer.unregister_peer();
    if (a.stay_resident && a.linger_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(a.linger_ms));

    json out = json::array();
    for (const auto& s : summaries) {
        out.push_back({{"round", s.round},
                       {"accuracy", s.accuracy},
                       {"published_version", s.published_version},
                       {"models_fetched", s.models_fetched}});
    }
    std::cout << out.dump(2) << std::endl;
    return 0;
}

int cmd_baseline(uint32_t nodes, int rounds, double alpha_frac, const std::string& data_arg,
                 const std::string& partition_path, uint64_t seed, const std::string& metrics_out,
                 const std::string& model_kind, const std::string& hidden_dims, double test_fraction) {
    const Dataset data = load_data_arg(data_arg, seed);

    FedAvgConfig cfg;
    cfg.node_count = nodes;
    cfg.client_fraction = alpha_frac;
    cfg.rounds = rounds;
    cfg.seed = seed;
    cfg.test_fraction = test_fraction;
    cfg.model.kind = model_kind_from_string(model_kind);
    cfg.model.feature_dim = static_cast<uint32_t>(data.feature_dim);
    cfg.model.class_count = static_cast<uint32_t>(data.class_count);
    cfg.model.init_seed = seed;
    if (!hidden_dims.empty())
        for (const auto& d : split(hidden_dims, ','))
            cfg.model.hidden_dims.push_back(static_cast<uint32_t>(std::stoul(d)));
    cfg.partition = partition_path.empty()
                        ? partition_uniform(data.labels, data.class_count, nodes, seed)
                        : load_plan(partition_path);
    cfg.partition.assignments.resize(nodes);
    cfg.partition.node_count = nodes;

    const FedAvgResult result = run_fedavg(cfg, data);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!metrics_out.empty()) {
        file.open(metrics_out);
        out = &file;
    }
    *out << "round,node,metric,value\n";
    for (int r = 0; r < static_cast<int>(result.rounds.size()); ++r) {
        double sum = 0.0;
        std::size_t n = 0;
        for (uint32_t k = 0; k < nodes; ++k) {
            const double a = result.rounds[r].node_accuracy[k];
            if (std::isnan(a)) continue;
            *out << r << ",node-" << (k + 1) << ",accuracy," << a << "\n";
            sum += a;
            ++n;
        }
        if (n > 0) *out << r << ",network,mean_accuracy," << sum / static_cast<double>(n) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EdgeFL: decentralized edge-only federated learning"};
    app.require_subcommand(1);

    // registry
    auto* reg = app.add_subcommand("registry", "run a registration node");
    int reg_port = 7000;
    std::string reg_bind = "127.0.0.1";
    reg->add_option("--port", reg_port, "listen port")->required();
    reg->add_option("--bind", reg_bind, "bind address");

    // peer
    auto* peer = app.add_subcommand("peer", "run an FL edge node");
    PeerArgs pa;
    peer->add_option("--hostname", pa.hostname, "peer identity (default node-<id>)");
    peer->add_option("--port", pa.port, "model serving port (0 = auto)");
    peer->add_option("--registry", pa.registry, "comma-separated registry base URLs")->required();
    peer->add_option("--alpha", pa.alpha, "ratio of aggregated peers");
    peer->add_option("--epochs", pa.epochs, "local epochs E");
    peer->add_option("--batch-size", pa.batch_size, "mini-batch size B");
    peer->add_option("--lr", pa.lr, "learning rate");
    peer->add_option("--rounds", pa.rounds, "number of rounds");
    peer->add_option("--data", pa.data, "dataset: blobs:..., idx:<imgs>,<labels>, or directory")
        ->required();
    peer->add_option("--partition-file", pa.partition_file, "partition plan JSON");
    peer->add_option("--node-id", pa.node_id, "1-based node id into the partition plan");
    peer->add_option("--seed", pa.seed, "experiment seed");
    peer->add_flag("--no-include-self", pa.no_include_self, "exclude own model from aggregation");
    peer->add_flag("--stay-resident", pa.stay_resident, "keep serving after unregistering");
    peer->add_option("--aggregation", pa.aggregation, "aggregation policy id");
    peer->add_option("--metrics-out", pa.metrics_out, "JSONL event log path");
    peer->add_option("--model-kind", pa.model_kind, "softmax_linear | mlp");
    peer->add_option("--hidden-dims", pa.hidden_dims, "mlp hidden dims, comma separated");
    peer->add_option("--init-seed", pa.init_seed, "weight init seed (default: --seed)");
    peer->add_option("--test-fraction", pa.test_fraction, "local test split fraction");
    peer->add_option("--round-offset", pa.round_offset, "offset for logged round indices");
    peer->add_option("--round-pace-ms", pa.round_pace_ms, "fixed per-round pacing");
    peer->add_option("--serve-delay-ms", pa.serve_delay_ms, "artificial serving delay");
    peer->add_option("--linger-ms", pa.linger_ms, "serving time after leaving (stay-resident)");

    // simulate / compare
    auto* sim = app.add_subcommand("simulate", "run a full experiment from a config file");
    std::string sim_config;
    sim->add_option("--config", sim_config, "experiment config (JSON)")->required();
    uint32_t ov_nodes = 0;
    int ov_rounds = 0, ov_port_base = 0, ov_pace = 0, ov_delay = 0, ov_timeout = 0;
    std::string ov_mode, ov_out, ov_aggregation, ov_distribution;
    double ov_alpha = -1.0, ov_spread = 0.2;
    uint64_t ov_seed = 0;
    bool ov_no_include_self = false;
    sim->add_option("--nodes", ov_nodes, "override node count");
    sim->add_option("--rounds", ov_rounds, "override round count");
    sim->add_option("--alpha", ov_alpha, "override alpha");
    sim->add_option("--mode", ov_mode, "override mode: lockstep | async");
    sim->add_option("--out-dir", ov_out, "override output directory");
    sim->add_option("--seed", ov_seed, "override experiment seed");
    sim->add_option("--port-base", ov_port_base, "override port base");
    sim->add_option("--aggregation", ov_aggregation, "override aggregation policy");
    sim->add_option("--distribution", ov_distribution, "override scheme: uniform | normal");
    sim->add_option("--spread", ov_spread, "override normal-scheme spread");
    sim->add_option("--round-pace-ms", ov_pace, "override round pacing");
    sim->add_option("--serve-delay-ms", ov_delay, "override artificial serving delay");
    sim->add_option("--timeout-s", ov_timeout, "override wall-clock cap");
    sim->add_flag("--no-include-self", ov_no_include_self, "exclude own model from aggregation");

    auto* cmp = app.add_subcommand("compare", "run EdgeFL and FedAvg arms side by side");
    std::string cmp_config;
    cmp->add_option("--config", cmp_config, "experiment config (JSON)")->required();

    // baseline
    auto* base = app.add_subcommand("baseline", "run the centralized FedAvg arm only");
    uint32_t b_nodes = 3;
    int b_rounds = 5;
    double b_frac = 1.0;
    std::string b_data, b_partition, b_metrics, b_model = "softmax_linear", b_hidden;
    uint64_t b_seed = 42;
    double b_test_fraction = 0.2;
    base->add_option("--nodes", b_nodes, "client count K")->required();
    base->add_option("--rounds", b_rounds, "rounds")->required();
    base->add_option("--alpha-frac", b_frac, "client fraction per round");
    base->add_option("--data", b_data, "dataset spec")->required();
    base->add_option("--partition", b_partition, "partition plan JSON (default: uniform)");
    base->add_option("--seed", b_seed, "seed");
    base->add_option("--metrics-out", b_metrics, "CSV output path (default stdout)");
    base->add_option("--model-kind", b_model, "softmax_linear | mlp");
    base->add_option("--hidden-dims", b_hidden, "mlp hidden dims");
    base->add_option("--test-fraction", b_test_fraction, "local test split fraction");

    // report
    auto* rep = app.add_subcommand("report", "compute metrics from event logs");
    std::string rep_events, rep_out = ".";
    rep->add_option("--events", rep_events, "JSONL glob, e.g. run/events_*.jsonl")->required();
    rep->add_option("--out", rep_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*reg) return cmd_registry(reg_port, reg_bind);
        if (*peer) return cmd_peer(pa);
        if (*base)
            return cmd_baseline(b_nodes, b_rounds, b_frac, b_data, b_partition, b_seed, b_metrics,
                                b_model, b_hidden, b_test_fraction);
        if (*rep) {
            const auto events = load_events_glob(rep_events);
            write_report(events, rep_out);
            std::cout << "report written to " << rep_out << " (" << events.size() << " events)\n";
            return 0;
        }
        if (*sim) {
            ExperimentConfig cfg = load_experiment_config(sim_config);
            if (sim->count("--nodes")) cfg.nodes = ov_nodes;
            if (sim->count("--rounds")) cfg.rounds = ov_rounds;
            if (sim->count("--alpha")) cfg.alpha = ov_alpha;
            if (sim->count("--mode"))
                cfg.mode = ov_mode == "async" ? ExperimentMode::async_processes : ExperimentMode::lockstep;
            if (sim->count("--out-dir")) cfg.out_dir = ov_out;
            if (sim->count("--seed")) cfg.seed = ov_seed;
            if (sim->count("--port-base")) cfg.port_base = ov_port_base;
            if (sim->count("--aggregation")) cfg.aggregation = ov_aggregation;
            if (sim->count("--distribution"))
                cfg.distribution = ov_distribution == "normal" ? PartitionScheme::normal
                                                               : PartitionScheme::uniform;
            if (sim->count("--spread")) cfg.spread = ov_spread;
            if (sim->count("--round-pace-ms")) cfg.round_pace_ms = ov_pace;
            if (sim->count("--serve-delay-ms")) cfg.serve_delay_ms = ov_delay;
            if (sim->count("--timeout-s")) cfg.timeout_s = ov_timeout;
            if (ov_no_include_self) cfg.include_self = false;
            const ExperimentReport report = run_experiment(cfg);
            std::cout << "experiment finished; report in " << report.out_dir << "\n";
            if (!report.round_mean_accuracy.empty())
                std::cout << "final mean accuracy: " << report.round_mean_accuracy.rbegin()->second
                          << "\n";
            return report.all_completed ? 0 : 1;
        }
        if (*cmp) {
            const ExperimentConfig cfg = load_experiment_config(cmp_config);
            const ComparisonReport report = run_comparison(cfg);
            std::cout << "comparison written to " << report.csv_path << "\n";
            return report.edgefl.all_completed ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
