#include "edgefl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "edgefl/errors.hpp"
#include "edgefl/peer.hpp"
#include "edgefl/registry.hpp"
#include "edgefl/rng.hpp"

namespace edgefl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string self_exe_path() {
    char buf[4096];
    const ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n <= 0) throw Error("cannot resolve /proc/self/exe");
    buf[n] = '\0';
    return std::string(buf);
}

std::string node_name(int id) { return "node-" + std::to_string(id); }

int max_node_id(const ExperimentConfig& cfg) {
    int max_id = static_cast<int>(cfg.nodes);
    for (const auto& j : cfg.join_schedule) max_id = std::max(max_id, j.node_id);
    return max_id;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.nodes == 0) throw Error("experiment: nodes must be >= 1");
    if (cfg.rounds <= 0) throw Error("experiment: rounds must be >= 1");
    if (cfg.alpha <= 0.0 || cfg.alpha > 1.0) throw Error("experiment: alpha must be in (0, 1]");
    if (!cfg.blobs && !cfg.idx) throw Error("experiment: no dataset configured");
    std::set<int> ids;
    for (uint32_t k = 1; k <= cfg.nodes; ++k) ids.insert(static_cast<int>(k));
    for (const auto& j : cfg.join_schedule) {
        if (j.round < 0 || j.round > cfg.rounds) throw Error("experiment: join round outside [0, rounds]");
        if (!ids.insert(j.node_id).second)
            throw Error("experiment: duplicate node id " + std::to_string(j.node_id));
    }
    for (const auto& l : cfg.leave_schedule) {
        if (l.round < 0 || l.round > cfg.rounds) throw Error("experiment: leave round outside [0, rounds]");
        if (l.node_id < 1 || l.node_id > static_cast<int>(cfg.nodes))
            throw Error("experiment: leave schedule names unknown node " + std::to_string(l.node_id));
    }
    if (cfg.mode == ExperimentMode::async_processes && cfg.port_base <= 0)
        throw Error("experiment: async mode needs a positive port_base");
}

std::string blob_data_arg(const ExperimentConfig& cfg) {
    const BlobSpec& b = *cfg.blobs;
    const uint64_t seed = b.seed.value_or(cfg.seed);
    return "blobs:classes=" + std::to_string(b.classes) + ",per_class=" + std::to_string(b.per_class) +
           ",dim=" + std::to_string(b.feature_dim) + ",sep=" + std::to_string(b.separation) +
           ",seed=" + std::to_string(seed);
}

// ---------------------------------------------------------------- processes

struct ChildProcess {
    pid_t pid = -1;
    std::string name;
    bool reaped = false;
    int exit_code = -1;
};

pid_t spawn_process(const std::vector<std::string>& argv, const std::string& log_path) {
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = fork();
    if (pid < 0) throw LaunchFailure("fork failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
        const int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            dup2(fd, STDOUT_FILENO);
            dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        execv(cargv[0], cargv.data());
        _exit(127);
    }
    return pid;
}

// Kills and reaps every child on scope exit so failed runs leave no orphans.
class ProcessGroup {
public:
    ~ProcessGroup() {
        for (auto& c : children_) {
            if (!c.reaped && c.pid > 0) {
                kill(c.pid, SIGKILL);
                waitpid(c.pid, nullptr, 0);
                c.reaped = true;
            }
        }
    }

    // deque keeps references stable across add()
    ChildProcess& add(pid_t pid, std::string name) {
        children_.push_back(ChildProcess{pid, std::move(name)});
        return children_.back();
    }

    std::deque<ChildProcess>& children() { return children_; }

    bool try_reap(ChildProcess& c) {
        if (c.reaped) return true;
        int status = 0;
        const pid_t r = waitpid(c.pid, &status, WNOHANG);
        if (r == c.pid) {
            c.reaped = true;
            c.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
            return true;
        }
        return false;
    }

    void terminate(ChildProcess& c) {
        if (c.reaped) return;
        kill(c.pid, SIGTERM);
        for (int i = 0; i < 40; ++i) {
            if (try_reap(c)) return;
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        kill(c.pid, SIGKILL);
        waitpid(c.pid, nullptr, 0);
        c.reaped = true;
        c.exit_code = 137;
    }

private:
    std::deque<ChildProcess> children_;
};

int max_deploy_round(const std::string& events_path) {
    std::ifstream f(events_path);
    if (!f) return -1;
    int max_round = -1;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        try {
            const RoundEvent ev = event_from_json(line);
            if (ev.kind == EventKind::deploy) max_round = std::max(max_round, ev.round);
        } catch (...) {
            // partially written trailing line; ignore
        }
    }
    return max_round;
}

// ----------------------------------------------------------- join analysis

std::vector<JoinOutcome> analyze_joins(const std::vector<RoundEvent>& events,
                                       const ExperimentConfig& cfg) {
    std::vector<JoinOutcome> out;
    if (cfg.join_schedule.empty()) return out;

    std::set<std::string> incumbents;
    for (uint32_t k = 1; k <= cfg.nodes; ++k) incumbents.insert(node_name(static_cast<int>(k)));

    for (const auto& j : cfg.join_schedule) {
        const std::string joiner = node_name(j.node_id);
        int first_round = -1;
        double first_acc = 0.0;
        for (const auto& ev : events) {
            if (ev.kind != EventKind::evaluate || ev.node != joiner || !ev.accuracy) continue;
            if (first_round < 0 || ev.round < first_round) {
                first_round = ev.round;
                first_acc = *ev.accuracy;
            }
        }
        if (first_round < 0) continue; // joiner never evaluated

        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& ev : events) {
            if (ev.kind == EventKind::evaluate && ev.round == first_round && ev.accuracy &&
                incumbents.count(ev.node)) {
                sum += *ev.accuracy;
                ++n;
            }
        }
        JoinOutcome o;
        o.node = joiner;
        o.first_round = first_round;
        o.first_accuracy = first_acc;
        o.incumbent_mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
        out.push_back(o);
    }
    return out;
}

void finalize_report(ExperimentReport& rep, const ExperimentConfig& cfg) {
    const auto cls = classification_report(rep.events);
    rep.accuracy_table = cls.table;
    rep.round_mean_accuracy = cls.round_mean;
    rep.join_outcomes = analyze_joins(rep.events, cfg);
    rep.out_dir = cfg.out_dir;

    write_report(rep.events, cfg.out_dir);
    if (!rep.join_outcomes.empty()) {
        json joins = json::array();
        for (const auto& o : rep.join_outcomes) {
            joins.push_back({{"node", o.node},
                             {"first_round", o.first_round},
                             {"first_accuracy", o.first_accuracy},
                             {"incumbent_mean", o.incumbent_mean}});
        }
        std::ofstream f(fs::path(cfg.out_dir) / "joins.json");
        f << joins.dump(2) << "\n";
    }
}

// ------------------------------------------------------------- lockstep run

ExperimentReport run_lockstep(const ExperimentConfig& cfg, const Dataset& data,
                              const PartitionPlan& plan, const ModelSpec& model) {
    RegistryServer registry(cfg.port_base > 0 ? cfg.port_base : 0);
    registry.start();

    struct Node {
        int id = 0;
        std::unique_ptr<Peer> peer;
        Dataset train;
        Dataset test;
        TrainConfig tcfg;
        bool active = false;
    };

    std::vector<JoinEntry> joins = cfg.join_schedule;
    std::vector<Node> all;
    std::vector<int> ids;
    for (uint32_t k = 1; k <= cfg.nodes; ++k) ids.push_back(static_cast<int>(k));
    for (const auto& j : joins) ids.push_back(j.node_id);

    const auto seeds = derive_experiment_seeds(cfg.seed);
    for (int id : ids) {
        Node n;
        n.id = id;
        Dataset local = subset(data, plan.assignments[id - 1]);
        if (local.size() == 0) throw Error("node " + std::to_string(id) + " got an empty partition");
        auto [train, test] = split_train_test(local, cfg.test_fraction, seeds.split_seed);
        n.train = std::move(train);
        n.test = std::move(test);
        n.tcfg = cfg.train;
        n.tcfg.shuffle_seed = seeds.shuffle_seed;

        PeerConfig pc;
        pc.hostname = node_name(id);
        pc.serve_port = cfg.port_base > 0 ? cfg.port_base + id : 0;
        pc.registries = {registry.base_url()};
        pc.alpha = cfg.alpha;
        pc.aggregation = cfg.aggregation;
        pc.include_self = cfg.include_self;
        pc.rng_seed = derive_peer_rng_seed(cfg.seed, id);
        pc.serve_delay_ms = cfg.serve_delay_ms;
        pc.events_path = (fs::path(cfg.out_dir) / ("events_" + pc.hostname + ".jsonl")).string();
        n.peer = std::make_unique<Peer>(pc);
        all.push_back(std::move(n));
    }

    auto is_joiner = [&](int id) {
        return std::any_of(joins.begin(), joins.end(),
                           [&](const JoinEntry& j) { return j.node_id == id; });
    };
    for (auto& n : all) {
        if (!is_joiner(n.id)) {
            n.peer->start();
            n.active = true;
        }
    }

    const auto& policy = aggregation_policy(cfg.aggregation);
    ExperimentReport rep;
    const auto t0 = std::chrono::steady_clock::now();

    for (int r = 0; r < cfg.rounds; ++r) {
        for (const auto& j : joins) {
            if (j.round != r) continue;
            for (auto& n : all) {
                if (n.id == j.node_id) {
                    n.peer->start();
                    n.active = true;
                }
            }
        }
        for (const auto& l : cfg.leave_schedule) {
            if (l.round != r) continue;
            for (auto& n : all) {
                if (n.id == l.node_id && n.active) {
                    n.peer->unregister_peer();
                    n.active = false;
                }
            }
        }

        // Barrier phases: every aggregation happens against last round's
        // published models before anyone publishes this round's.
        std::vector<WeightSet> trained(all.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            auto& n = all[i];
            if (!n.active) continue;
            n.peer->set_round(r);
            WeightSet w_in = n.peer->aggregate_or_init(model);
            RoundEvent ts;
            ts.node = n.peer->config().hostname;
            ts.round = r;
            ts.kind = EventKind::train_start;
            ts.timestamp_ms = now_ms();
            n.peer->events().append(std::move(ts));
            trained[i] = node_training(w_in, n.train, n.tcfg);
        }

        if (cfg.round_pace_ms > 0)
            std::this_thread::sleep_until(t0 + std::chrono::milliseconds(cfg.round_pace_ms) * (r + 1));

        std::vector<WeightSet> published;
        for (std::size_t i = 0; i < all.size(); ++i) {
            auto& n = all[i];
            if (!n.active) continue;
            n.peer->publish(trained[i]);
            published.push_back(*n.peer->latest());
        }

        for (auto& n : all) {
            if (!n.active) continue;
            const double acc = evaluate(*n.peer->latest(), n.test);
            RoundEvent ev;
            ev.node = n.peer->config().hostname;
            ev.round = r;
            ev.kind = EventKind::evaluate;
            ev.timestamp_ms = now_ms();
            ev.accuracy = acc;
            n.peer->events().append(std::move(ev));
        }

        if (!published.empty())
            rep.consensus_per_round.push_back(policy.combine(std::nullopt, published));
    }

    for (auto& n : all)
        if (n.active) n.peer->unregister_peer();

    for (auto& n : all) {
        const auto evs = n.peer->events().snapshot();
        rep.events.insert(rep.events.end(), evs.begin(), evs.end());
    }
    rep.all_completed = true;
    registry.stop();
    return rep;
}

// ---------------------------------------------------------------- async run

ExperimentReport run_async(const ExperimentConfig& cfg, const Dataset& data,
                           const PartitionPlan& plan, const ModelSpec& model) {
    (void)data;
    const std::string exe = cfg.exe_path.empty() ? self_exe_path() : cfg.exe_path;
    const fs::path out(cfg.out_dir);
    const std::string plan_path = (out / "partition.json").string();
    save_plan(plan, plan_path);

    ProcessGroup procs;

    const int registry_port = cfg.port_base;
    const std::string registry_url = "http://127.0.0.1:" + std::to_string(registry_port);
    auto& reg_child = procs.add(
        spawn_process({exe, "registry", "--port", std::to_string(registry_port)},
                      (out / "registry.log").string()),
        "registry");

    {
        httplib::Client probe(registry_url);
        probe.set_connection_timeout(std::chrono::milliseconds(250));
        probe.set_read_timeout(std::chrono::milliseconds(250));
        bool up = false;
        for (int i = 0; i < 100 && !up; ++i) {
            auto res = probe.Get("/peers");
            up = res && res->status == 200;
            if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(50));
            if (procs.try_reap(reg_child))
                throw LaunchFailure("registry exited early with code " +
                                    std::to_string(reg_child.exit_code));
        }
        if (!up) throw LaunchFailure("registry did not come up on port " + std::to_string(registry_port));
    }

    const std::string data_arg =
        cfg.blobs ? blob_data_arg(cfg) : ("idx:" + cfg.idx->images + "," + cfg.idx->labels);

    auto peer_argv = [&](int id, int rounds, int round_offset) {
        std::vector<std::string> argv{
            exe, "peer",
            "--hostname", node_name(id),
            "--port", std::to_string(cfg.port_base + id),
            "--registry", registry_url,
            "--alpha", std::to_string(cfg.alpha),
            "--epochs", std::to_string(cfg.train.local_epochs),
            "--batch-size", std::to_string(cfg.train.batch_size),
            "--lr", std::to_string(cfg.train.learning_rate),
            "--rounds", std::to_string(rounds),
            "--data", data_arg,
            "--partition-file", plan_path,
            "--node-id", std::to_string(id),
            "--seed", std::to_string(cfg.seed),
            "--metrics-out", (out / ("events_" + node_name(id) + ".jsonl")).string(),
            "--model-kind", to_string(model.kind),
            "--init-seed", std::to_string(model.init_seed),
            "--aggregation", cfg.aggregation,
            "--test-fraction", std::to_string(cfg.test_fraction),
        };
        if (!model.hidden_dims.empty()) {
            std::string dims;
            for (uint32_t d : model.hidden_dims) dims += (dims.empty() ? "" : ",") + std::to_string(d);
            argv.push_back("--hidden-dims");
            argv.push_back(dims);
        }
        if (!cfg.include_self) argv.push_back("--no-include-self");
        if (round_offset > 0) {
            argv.push_back("--round-offset");
            argv.push_back(std::to_string(round_offset));
        }
        if (cfg.round_pace_ms > 0) {
            argv.push_back("--round-pace-ms");
            argv.push_back(std::to_string(cfg.round_pace_ms));
        }
        if (cfg.serve_delay_ms > 0) {
            argv.push_back("--serve-delay-ms");
            argv.push_back(std::to_string(cfg.serve_delay_ms));
        }
        return argv;
    };

    std::map<int, ChildProcess*> peer_children;
    for (uint32_t k = 1; k <= cfg.nodes; ++k) {
        const int id = static_cast<int>(k);
        int rounds = cfg.rounds;
        for (const auto& l : cfg.leave_schedule)
            if (l.node_id == id) rounds = std::min(rounds, l.round);
        peer_children[id] = &procs.add(
            spawn_process(peer_argv(id, rounds, 0), (out / (node_name(id) + ".log")).string()),
            node_name(id));
    }

    // Launch joiners once a majority of incumbents has deployed the round
    // before the join round.
    std::vector<JoinEntry> pending = cfg.join_schedule;
    std::sort(pending.begin(), pending.end(),
              [](const JoinEntry& a, const JoinEntry& b) { return a.round < b.round; });

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(cfg.timeout_s);
    for (;;) {
        bool all_done = true;
        for (auto& [id, child] : peer_children) {
            if (!procs.try_reap(*child)) all_done = false;
        }

        if (!pending.empty()) {
            all_done = false;
            const JoinEntry next = pending.front();
            std::size_t ready = 0;
            for (uint32_t k = 1; k <= cfg.nodes; ++k) {
                const auto path = (out / ("events_" + node_name(static_cast<int>(k)) + ".jsonl")).string();
                if (max_deploy_round(path) >= next.round - 1) ++ready;
            }
            if (next.round == 0 || ready * 2 >= cfg.nodes) {
                const int id = next.node_id;
                peer_children[id] = &procs.add(
                    spawn_process(peer_argv(id, cfg.rounds - next.round, next.round),
                                  (out / (node_name(id) + ".log")).string()),
                    node_name(id));
                pending.erase(pending.begin());
            }
        }

        if (all_done) break;
        if (std::chrono::steady_clock::now() > deadline)
            throw Timeout("experiment exceeded " + std::to_string(cfg.timeout_s) + " s");
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }

    procs.terminate(reg_child);

    std::vector<std::string> failures;
    for (auto& [id, child] : peer_children)
        if (child->exit_code != 0)
            failures.push_back(child->name + " exited with code " + std::to_string(child->exit_code));

    ExperimentReport rep;
    rep.events = load_events_glob((out / "events_*.jsonl").string());
    rep.all_completed = failures.empty();
    if (!failures.empty())
        std::cerr << "[edgefl] " << failures.size() << " peer(s) failed; first: " << failures.front()
                  << "\n";
    return rep;
}

} // namespace

// ------------------------------------------------------- config (de)serial

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig cfg;
    cfg.nodes = j.value("nodes", cfg.nodes);
    cfg.rounds = j.value("rounds", cfg.rounds);
    cfg.alpha = j.value("alpha", cfg.alpha);
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.kind = model_kind_from_string(m.value("kind", "softmax_linear"));
        cfg.model.feature_dim = m.value("feature_dim", 0u);
        cfg.model.class_count = m.value("class_count", 0u);
        cfg.model.hidden_dims = m.value("hidden_dims", std::vector<uint32_t>{});
        cfg.model.init_seed = m.value("init_seed", uint64_t{0});
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.local_epochs = t.value("local_epochs", cfg.train.local_epochs);
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        if (d.contains("blobs")) {
            const auto& b = d["blobs"];
            BlobSpec bs;
            bs.classes = b.value("classes", bs.classes);
            bs.per_class = b.value("per_class", bs.per_class);
            bs.feature_dim = b.value("feature_dim", bs.feature_dim);
            bs.separation = b.value("separation", bs.separation);
            if (b.contains("seed")) bs.seed = b["seed"].get<uint64_t>();
            cfg.blobs = bs;
        }
        if (d.contains("idx")) {
            cfg.idx = IdxPaths{d["idx"].at("images").get<std::string>(),
                               d["idx"].at("labels").get<std::string>()};
        }
    }
    if (j.contains("distribution")) {
        const auto& d = j["distribution"];
        const std::string scheme = d.value("scheme", "uniform");
        if (scheme == "uniform") cfg.distribution = PartitionScheme::uniform;
        else if (scheme == "normal") cfg.distribution = PartitionScheme::normal;
        else throw Error("unknown distribution scheme '" + scheme + "'");
        cfg.spread = d.value("spread", cfg.spread);
    }
    for (const auto& e : j.value("join_schedule", json::array()))
        cfg.join_schedule.push_back({e.at("node_id").get<int>(), e.at("round").get<int>()});
    for (const auto& e : j.value("leave_schedule", json::array()))
        cfg.leave_schedule.push_back({e.at("node_id").get<int>(), e.at("round").get<int>()});
    const std::string mode = j.value("mode", "async");
    if (mode == "lockstep") cfg.mode = ExperimentMode::lockstep;
    else if (mode == "async") cfg.mode = ExperimentMode::async_processes;
    else throw Error("unknown mode '" + mode + "'");
    cfg.include_self = j.value("include_self", cfg.include_self);
    cfg.aggregation = j.value("aggregation", cfg.aggregation);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.port_base = j.value("port_base", cfg.port_base);
    cfg.round_pace_ms = j.value("round_pace_ms", cfg.round_pace_ms);
    cfg.serve_delay_ms = j.value("serve_delay_ms", cfg.serve_delay_ms);
    cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
    cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
    return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["nodes"] = cfg.nodes;
    j["rounds"] = cfg.rounds;
    j["alpha"] = cfg.alpha;
    j["model"] = {{"kind", to_string(cfg.model.kind)},
                  {"feature_dim", cfg.model.feature_dim},
                  {"class_count", cfg.model.class_count},
                  {"hidden_dims", cfg.model.hidden_dims},
                  {"init_seed", cfg.model.init_seed}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"local_epochs", cfg.train.local_epochs},
                  {"learning_rate", cfg.train.learning_rate}};
    if (cfg.blobs) {
        json b{{"classes", cfg.blobs->classes},
               {"per_class", cfg.blobs->per_class},
               {"feature_dim", cfg.blobs->feature_dim},
               {"separation", cfg.blobs->separation}};
        if (cfg.blobs->seed) b["seed"] = *cfg.blobs->seed;
        j["dataset"]["blobs"] = b;
    }
    if (cfg.idx) j["dataset"]["idx"] = {{"images", cfg.idx->images}, {"labels", cfg.idx->labels}};
    j["distribution"] = {{"scheme", cfg.distribution == PartitionScheme::uniform ? "uniform" : "normal"},
                         {"spread", cfg.spread}};
    json joins = json::array();
    for (const auto& e : cfg.join_schedule) joins.push_back({{"node_id", e.node_id}, {"round", e.round}});
    j["join_schedule"] = joins;
    json leaves = json::array();
    for (const auto& e : cfg.leave_schedule) leaves.push_back({{"node_id", e.node_id}, {"round", e.round}});
    j["leave_schedule"] = leaves;
    j["mode"] = cfg.mode == ExperimentMode::lockstep ? "lockstep" : "async";
    j["include_self"] = cfg.include_self;
    j["aggregation"] = cfg.aggregation;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["port_base"] = cfg.port_base;
    j["round_pace_ms"] = cfg.round_pace_ms;
    j["serve_delay_ms"] = cfg.serve_delay_ms;
    j["test_fraction"] = cfg.test_fraction;
    j["timeout_s"] = cfg.timeout_s;
    return j.dump(2);
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return experiment_config_from_json(text);
}

Dataset materialize_dataset(const ExperimentConfig& cfg) {
    if (cfg.blobs) {
        const BlobSpec& b = *cfg.blobs;
        return generate_blobs(b.classes, b.per_class, b.feature_dim, b.separation,
                              b.seed.value_or(cfg.seed));
    }
    if (cfg.idx) return load_idx(cfg.idx->images, cfg.idx->labels);
    throw Error("experiment: no dataset configured");
}

PartitionPlan compute_partition(const ExperimentConfig& cfg, const Dataset& data) {
    const auto K = static_cast<uint32_t>(max_node_id(cfg));
    if (cfg.distribution == PartitionScheme::uniform)
        return partition_uniform(data.labels, data.class_count, K, cfg.seed);
    return partition_normal(data.labels, data.class_count, K, cfg.seed, cfg.spread);
}

ModelSpec resolve_model(const ExperimentConfig& cfg, const Dataset& data) {
    ModelSpec m = cfg.model;
    if (m.feature_dim == 0) m.feature_dim = static_cast<uint32_t>(data.feature_dim);
    if (m.class_count == 0) m.class_count = static_cast<uint32_t>(data.class_count);
    if (m.init_seed == 0) m.init_seed = cfg.seed;
    return m;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream f(fs::path(cfg.out_dir) / "config.json");
        f << experiment_config_to_json(cfg) << "\n";
    }

    const Dataset data = materialize_dataset(cfg);
    const PartitionPlan plan = compute_partition(cfg, data);
    save_plan(plan, (fs::path(cfg.out_dir) / "partition.json").string());
    const ModelSpec model = resolve_model(cfg, data);

    ExperimentReport rep = cfg.mode == ExperimentMode::lockstep
                               ? run_lockstep(cfg, data, plan, model)
                               : run_async(cfg, data, plan, model);
    finalize_report(rep, cfg);
    return rep;
}

ComparisonReport run_comparison(const ExperimentConfig& cfg) {
    validate_config(cfg);
    fs::create_directories(cfg.out_dir);

    ComparisonReport cmp;
    cmp.edgefl = run_experiment(cfg);
    cmp.edgefl_mean_accuracy = cmp.edgefl.round_mean_accuracy;

    const Dataset data = materialize_dataset(cfg);
    FedAvgConfig fed;
    fed.node_count = cfg.nodes;
    fed.client_fraction = 1.0;
    fed.rounds = cfg.rounds;
    fed.train = cfg.train;
    fed.model = resolve_model(cfg, data);
    // FedAvg is the no-join arm: partition over the initial K only when
    // there are no joiners, otherwise reuse the shared plan's first K rows.
    fed.partition = compute_partition(cfg, data);
    fed.partition.assignments.resize(cfg.nodes);
    fed.partition.node_count = cfg.nodes;
    fed.seed = cfg.seed;
    fed.test_fraction = cfg.test_fraction;
    cmp.fedavg = run_fedavg(fed, data);

    for (int r = 0; r < static_cast<int>(cmp.fedavg.rounds.size()); ++r) {
        const auto& accs = cmp.fedavg.rounds[r].node_accuracy;
        double sum = 0.0;
        std::size_t n = 0;
        for (double a : accs) {
            if (!std::isnan(a)) {
                sum += a;
                ++n;
            }
        }
        if (n > 0) cmp.fedavg_mean_accuracy[r] = sum / static_cast<double>(n);
    }

    const fs::path csv_path = fs::path(cfg.out_dir) / "comparison.csv";
    std::ofstream csv(csv_path);
    csv << "round,edgefl_mean_accuracy,fedavg_mean_accuracy\n";
    for (int r = 0; r < cfg.rounds; ++r) {
        csv << r << ",";
        if (auto it = cmp.edgefl_mean_accuracy.find(r); it != cmp.edgefl_mean_accuracy.end())
            csv << it->second;
        csv << ",";
        if (auto it = cmp.fedavg_mean_accuracy.find(r); it != cmp.fedavg_mean_accuracy.end())
            csv << it->second;
        csv << "\n";
    }
    cmp.csv_path = csv_path.string();
    return cmp;
}

} // namespace edgefl
