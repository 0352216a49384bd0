#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <httplib.h>
#include <json.hpp>

#include "edgefl/errors.hpp"
#include "edgefl/experiment.hpp"
#include "edgefl/peer.hpp"
#include "edgefl/registry.hpp"
#include "edgefl/rng.hpp"

using namespace edgefl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_lockstep(const std::string& name) {
    ExperimentConfig cfg;
    cfg.nodes = 3;
    cfg.rounds = 3;
    cfg.alpha = 1.0;
    cfg.blobs = BlobSpec{3, 60, 8, 6.0, std::nullopt};
    cfg.train = TrainConfig{16, 1, 0.1, 0};
    cfg.mode = ExperimentMode::lockstep;
    cfg.seed = 42;
    cfg.port_base = 0; // ephemeral ports
    cfg.out_dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(cfg.out_dir);
    return cfg;
}

bool bits_equal(const WeightSet& a, const WeightSet& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].data.size() != b.entries[i].data.size()) return false;
        if (std::memcmp(a.entries[i].data.data(), b.entries[i].data.data(),
                        a.entries[i].data.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

} // namespace

TEST_CASE("config JSON round-trips every field") {
    ExperimentConfig cfg = small_lockstep("edgefl_cfg_rt");
    cfg.join_schedule = {{4, 2}};
    cfg.leave_schedule = {{1, 2}};
    cfg.distribution = PartitionScheme::normal;
    cfg.spread = 0.3;
    cfg.model.kind = ModelKind::mlp;
    cfg.model.hidden_dims = {8, 4};
    cfg.aggregation = "trimmed_mean";
    cfg.round_pace_ms = 5;
    const auto back = experiment_config_from_json(experiment_config_to_json(cfg));
    CHECK(back.nodes == cfg.nodes);
    CHECK(back.rounds == cfg.rounds);
    CHECK(back.alpha == cfg.alpha);
    CHECK(back.model.kind == cfg.model.kind);
    CHECK(back.model.hidden_dims == cfg.model.hidden_dims);
    CHECK(back.train.batch_size == cfg.train.batch_size);
    REQUIRE(back.blobs.has_value());
    CHECK(back.blobs->classes == cfg.blobs->classes);
    CHECK(back.blobs->separation == cfg.blobs->separation);
    CHECK(back.distribution == cfg.distribution);
    CHECK(back.spread == cfg.spread);
    REQUIRE(back.join_schedule.size() == 1);
    CHECK(back.join_schedule[0].node_id == 4);
    CHECK(back.leave_schedule[0].round == 2);
    CHECK(back.mode == cfg.mode);
    CHECK(back.aggregation == cfg.aggregation);
    CHECK(back.seed == cfg.seed);
    CHECK(back.round_pace_ms == cfg.round_pace_ms);
}

TEST_CASE("config validation rejects inconsistent schedules") {
    auto cfg = small_lockstep("edgefl_cfg_bad");
    cfg.join_schedule = {{2, 1}}; // id 2 already among initial nodes
    CHECK_THROWS_AS(run_experiment(cfg), Error);
    cfg = small_lockstep("edgefl_cfg_bad2");
    cfg.join_schedule = {{4, 99}}; // round outside range
    CHECK_THROWS_AS(run_experiment(cfg), Error);
    cfg = small_lockstep("edgefl_cfg_bad3");
    cfg.mode = ExperimentMode::async_processes;
    cfg.port_base = 0; // async needs explicit ports
    CHECK_THROWS_AS(run_experiment(cfg), Error);
}

TEST_CASE("lockstep consensus: alpha=1 peers agree bit-exactly on every aggregate") {
    // identical TrainConfig and partition (all peers hold the same data):
    // every node's aggregate and trained model coincide round after round
    RegistryServer registry(0);
    registry.start();
    const auto data = generate_blobs(3, 60, 8, 6.0, 3);
    ModelSpec spec{ModelKind::softmax_linear, 8, 3, {}, 3};
    TrainConfig tcfg{16, 1, 0.1, 9};

    std::vector<std::unique_ptr<Peer>> peers;
    for (int k = 1; k <= 3; ++k) {
        PeerConfig pc;
        pc.hostname = "node-" + std::to_string(k);
        pc.serve_port = 0;
        pc.registries = {registry.base_url()};
        pc.alpha = 1.0;
        peers.push_back(std::make_unique<Peer>(pc));
        peers.back()->start();
    }

    for (int r = 0; r < 3; ++r) {
        std::vector<WeightSet> aggregates;
        for (auto& p : peers) {
            p->set_round(r);
            aggregates.push_back(p->aggregate_or_init(spec));
        }
        for (std::size_t k = 1; k < aggregates.size(); ++k)
            CHECK(bits_equal(aggregates[0], aggregates[k]));
        std::vector<WeightSet> trained;
        for (std::size_t k = 0; k < peers.size(); ++k)
            trained.push_back(node_training(aggregates[k], data, tcfg));
        for (std::size_t k = 1; k < trained.size(); ++k)
            CHECK(bits_equal(trained[0], trained[k]));
        for (std::size_t k = 0; k < peers.size(); ++k) peers[k]->publish(trained[k]);
        // identical data: identical accuracies as well
        const double acc0 = evaluate(trained[0], data);
        for (std::size_t k = 1; k < trained.size(); ++k)
            CHECK(evaluate(trained[k], data) == doctest::Approx(acc0).epsilon(1e-15));
    }
    for (auto& p : peers) p->unregister_peer();
    registry.stop();
}

TEST_CASE("lockstep runs are bit-reproducible") {
    auto cfg1 = small_lockstep("edgefl_repro_a");
    const auto a = run_experiment(cfg1);
    auto cfg2 = small_lockstep("edgefl_repro_b");
    const auto b = run_experiment(cfg2);
    REQUIRE(a.consensus_per_round.size() == b.consensus_per_round.size());
    for (std::size_t r = 0; r < a.consensus_per_round.size(); ++r)
        CHECK(bits_equal(a.consensus_per_round[r], b.consensus_per_round[r]));
    CHECK(a.round_mean_accuracy == b.round_mean_accuracy);
    CHECK(a.accuracy_table == b.accuracy_table);
}

TEST_CASE("a single isolated node trains purely locally") {
    auto cfg = small_lockstep("edgefl_single");
    cfg.nodes = 1;
    cfg.rounds = 3;
    const auto rep = run_experiment(cfg);
    REQUIRE(rep.all_completed);

    // standalone oracle with the same data pipeline
    const Dataset data = materialize_dataset(cfg);
    const auto plan = compute_partition(cfg, data);
    const auto model = resolve_model(cfg, data);
    const auto seeds = derive_experiment_seeds(cfg.seed);
    Dataset local = subset(data, plan.assignments[0]);
    auto [train, test] = split_train_test(local, cfg.test_fraction, seeds.split_seed);
    TrainConfig tcfg = cfg.train;
    tcfg.shuffle_seed = seeds.shuffle_seed;
    WeightSet w = init_weights(model);
    for (int r = 0; r < 3; ++r) {
        w = node_training(w, train, tcfg);
        CHECK(rep.accuracy_table.at({r, "node-1"}) == doctest::Approx(evaluate(w, test)));
    }
    // no send/receive pairs can exist with one node
    for (const auto& ev : rep.events) CHECK(ev.kind != EventKind::receive);
}

TEST_CASE("lockstep joiner starts inside the convex hull of incumbent models") {
    auto cfg = small_lockstep("edgefl_join_lockstep");
    cfg.rounds = 4;
    cfg.join_schedule = {{4, 2}};
    const auto rep = run_experiment(cfg);
    REQUIRE(rep.all_completed);
    REQUIRE(rep.join_outcomes.size() == 1);
    CHECK(rep.join_outcomes[0].node == "node-4");
    CHECK(rep.join_outcomes[0].first_round == 2);
    // converged blobs: the joiner lands within 2 points immediately
    CHECK(std::abs(rep.join_outcomes[0].first_accuracy - rep.join_outcomes[0].incumbent_mean) <=
          0.02 + 1e-9);
    // joins.json is written
    CHECK(fs::exists(fs::path(cfg.out_dir) / "joins.json"));
}

TEST_CASE("leaver drops out of later rounds") {
    auto cfg = small_lockstep("edgefl_leave");
    cfg.rounds = 4;
    cfg.leave_schedule = {{3, 2}};
    const auto rep = run_experiment(cfg);
    REQUIRE(rep.all_completed);
    CHECK(rep.accuracy_table.count({1, "node-3"}) == 1);
    CHECK(rep.accuracy_table.count({2, "node-3"}) == 0);
    CHECK(rep.accuracy_table.count({3, "node-3"}) == 0);
    CHECK(rep.accuracy_table.count({3, "node-1"}) == 1);
}

TEST_CASE("report files conform to their schemas") {
    auto cfg = small_lockstep("edgefl_files");
    const auto rep = run_experiment(cfg);
    REQUIRE(rep.all_completed);
    const fs::path out(cfg.out_dir);
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "partition.json"));
    CHECK(fs::exists(out / "report.csv"));
    CHECK(fs::exists(out / "summary.json"));
    for (uint32_t k = 1; k <= 3; ++k)
        CHECK(fs::exists(out / ("events_node-" + std::to_string(k) + ".jsonl")));

    std::ifstream csv(out / "report.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "round,node,metric,value");

    std::ifstream js(out / "summary.json");
    const json summary = json::parse(js);
    CHECK(summary.contains("rounds"));
    CHECK(summary.contains("clock_note"));
    CHECK(summary.contains("mean_weights_update_latency_ms"));

    std::ifstream cj(out / "config.json");
    CHECK_NOTHROW(json::parse(cj));
}

TEST_CASE("comparison: lockstep alpha=1 EdgeFL equals FedAvg per round") {
    auto cfg = small_lockstep("edgefl_compare");
    const auto cmp = run_comparison(cfg);
    REQUIRE(cmp.edgefl.all_completed);
    REQUIRE(cmp.fedavg.rounds.size() == 3);
    for (int r = 0; r < 3; ++r) {
        REQUIRE(cmp.edgefl_mean_accuracy.count(r));
        REQUIRE(cmp.fedavg_mean_accuracy.count(r));
        CHECK(std::abs(cmp.edgefl_mean_accuracy.at(r) - cmp.fedavg_mean_accuracy.at(r)) < 1e-6);
        // weight-level equivalence: consensus == fedavg global
        REQUIRE(r < static_cast<int>(cmp.edgefl.consensus_per_round.size()));
        const auto& ec = cmp.edgefl.consensus_per_round[r];
        const auto& fg = cmp.fedavg.rounds[r].global;
        REQUIRE(ec.entries.size() == fg.entries.size());
        for (std::size_t j = 0; j < ec.entries.size(); ++j)
            for (std::size_t x = 0; x < ec.entries[j].data.size(); ++x)
                CHECK(std::abs(ec.entries[j].data[x] - fg.entries[j].data[x]) <= 1e-6);
    }
    CHECK(fs::exists(cmp.csv_path));
    std::ifstream csv(cmp.csv_path);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "round,edgefl_mean_accuracy,fedavg_mean_accuracy");
}

TEST_CASE("async mode: processes over loopback, clean teardown, valid report") {
    auto cfg = small_lockstep("edgefl_async_small");
    cfg.mode = ExperimentMode::async_processes;
    cfg.nodes = 2;
    cfg.rounds = 2;
    cfg.port_base = 18750;
    cfg.exe_path = EDGEFL_BIN;
    cfg.timeout_s = 60;
    const auto rep = run_experiment(cfg);
    CHECK(rep.all_completed);
    CHECK(rep.round_mean_accuracy.size() == 2);
    CHECK(rep.accuracy_table.count({1, "node-1"}) == 1);
    CHECK(rep.accuracy_table.count({1, "node-2"}) == 1);

    // round phases stay ordered: receive <= train_start <= deploy
    std::map<std::pair<std::string, int>, uint64_t> train_start, deploy, last_receive;
    for (const auto& ev : rep.events) {
        const auto key = std::make_pair(ev.node, ev.round);
        if (ev.kind == EventKind::train_start) train_start[key] = ev.timestamp_ms;
        if (ev.kind == EventKind::deploy) deploy[key] = ev.timestamp_ms;
        if (ev.kind == EventKind::receive)
            last_receive[key] = std::max(last_receive[key], ev.timestamp_ms);
    }
    for (const auto& [key, ts] : train_start) {
        if (last_receive.count(key)) CHECK(last_receive[key] <= ts);
        REQUIRE(deploy.count(key));
        CHECK(ts <= deploy[key]);
    }

    // ports are released after completion
    httplib::Server probe;
    CHECK(probe.bind_to_port("127.0.0.1", cfg.port_base));
    probe.stop();
    httplib::Server probe2;
    CHECK(probe2.bind_to_port("127.0.0.1", cfg.port_base + 1));
    probe2.stop();
}

TEST_CASE("normal-distribution async comparison keeps the CSV schema") {
    auto cfg = small_lockstep("edgefl_async_normal");
    cfg.mode = ExperimentMode::async_processes;
    cfg.nodes = 2;
    cfg.rounds = 2;
    cfg.port_base = 18850;
    cfg.exe_path = EDGEFL_BIN;
    cfg.distribution = PartitionScheme::normal;
    cfg.blobs = BlobSpec{3, 120, 8, 6.0, std::nullopt};
    cfg.timeout_s = 60;
    const auto cmp = run_comparison(cfg);
    std::ifstream csv(cmp.csv_path);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "round,edgefl_mean_accuracy,fedavg_mean_accuracy");
    int rows = 0;
    while (std::getline(csv, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        REQUIRE(c1 != std::string::npos);
        REQUIRE(c2 != std::string::npos);
        CHECK_NOTHROW(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        CHECK_NOTHROW(std::stod(line.substr(c2 + 1)));
        ++rows;
    }
    CHECK(rows == 2);
}
