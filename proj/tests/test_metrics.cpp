#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "edgefl/errors.hpp"
#include "edgefl/metrics.hpp"

using namespace edgefl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

RoundEvent ev(std::string node, int round, EventKind kind, uint64_t ts) {
    RoundEvent e;
    e.node = std::move(node);
    e.round = round;
    e.kind = kind;
    e.timestamp_ms = ts;
    return e;
}

RoundEvent send_ev(std::string from, std::string to, int round, uint64_t version, uint64_t ts) {
    auto e = ev(std::move(from), round, EventKind::send, ts);
    e.counterpart = std::move(to);
    e.payload_version = version;
    return e;
}

RoundEvent recv_ev(std::string at, std::string from, int round, uint64_t version, uint64_t ts) {
    auto e = ev(std::move(at), round, EventKind::receive, ts);
    e.counterpart = std::move(from);
    e.payload_version = version;
    return e;
}

} // namespace

TEST_CASE("one matched pair: latency is the plain difference") {
    std::vector<RoundEvent> events{send_ev("a", "b", 0, 5, 100), recv_ev("b", "a", 0, 5, 130)};
    CHECK(weights_update_latency(events, 0) == doctest::Approx(30.0));
}

TEST_CASE("multiple pairs average: (10+20+30)/3") {
    std::vector<RoundEvent> events{
        send_ev("a", "b", 1, 1, 100), recv_ev("b", "a", 1, 1, 110),
        send_ev("b", "c", 1, 2, 200), recv_ev("c", "b", 1, 2, 220),
        send_ev("c", "a", 1, 3, 300), recv_ev("a", "c", 1, 3, 330),
    };
    CHECK(weights_update_latency(events, 1) == doctest::Approx(20.0));
}

TEST_CASE("unmatched events raise NoPairs") {
    std::vector<RoundEvent> events{send_ev("a", "b", 0, 5, 100), recv_ev("b", "a", 1, 5, 130),
                                   recv_ev("b", "a", 0, 6, 130)};
    CHECK_THROWS_AS(weights_update_latency(events, 0), NoPairs);
}

TEST_CASE("evolution time: deploys at 0/100/300 -> mean 150") {
    std::vector<RoundEvent> events{ev("n", 0, EventKind::deploy, 0), ev("n", 1, EventKind::deploy, 100),
                                   ev("n", 2, EventKind::deploy, 300),
                                   ev("other", 0, EventKind::deploy, 5000)};
    CHECK(model_evolution_time(events, "n") == doctest::Approx(150.0));
}

TEST_CASE("a single deploy is not enough for evolution time") {
    std::vector<RoundEvent> events{ev("n", 0, EventKind::deploy, 0)};
    CHECK_THROWS_AS(model_evolution_time(events, "n"), InsufficientDeploys);
    CHECK_THROWS_AS(model_evolution_time(events, "missing"), InsufficientDeploys);
}

TEST_CASE("classification report: single node constant accuracy") {
    std::vector<RoundEvent> events;
    for (int r = 0; r < 3; ++r) {
        auto e = ev("n", r, EventKind::evaluate, 100 + r);
        e.accuracy = 0.5;
        events.push_back(e);
    }
    const auto rep = classification_report(events);
    for (int r = 0; r < 3; ++r) {
        CHECK(rep.round_mean.at(r) == doctest::Approx(0.5));
        CHECK(rep.table.at({r, "n"}) == doctest::Approx(0.5));
    }
}

TEST_CASE("classification report: mean of 0.4 and 0.6 is 0.5") {
    std::vector<RoundEvent> events;
    auto a = ev("a", 0, EventKind::evaluate, 1);
    a.accuracy = 0.4;
    auto b = ev("b", 0, EventKind::evaluate, 2);
    b.accuracy = 0.6;
    events = {a, b};
    CHECK(classification_report(events).round_mean.at(0) == doctest::Approx(0.5));
}

TEST_CASE("event JSON round-trip keeps every field") {
    auto e = send_ev("node-1", "node-2", 7, 42, 123456789);
    const auto back = event_from_json(event_to_json(e));
    CHECK(back.node == e.node);
    CHECK(back.round == e.round);
    CHECK(back.kind == e.kind);
    CHECK(back.timestamp_ms == e.timestamp_ms);
    CHECK(back.counterpart == e.counterpart);
    CHECK(back.payload_version == e.payload_version);
    CHECK_FALSE(back.accuracy.has_value());

    auto acc = ev("node-3", 2, EventKind::evaluate, 99);
    acc.accuracy = 0.875;
    const auto acc_back = event_from_json(event_to_json(acc));
    CHECK(acc_back.accuracy == acc.accuracy);
}

TEST_CASE("event log writes through to JSONL and loads back") {
    const auto dir = fs::temp_directory_path() / "edgefl_metrics_test";
    fs::create_directories(dir);
    const auto path = (dir / "events_a.jsonl").string();

    EventLog log(path);
    log.append(send_ev("a", "b", 0, 1, 10));
    auto e = ev("a", 0, EventKind::evaluate, 20);
    e.accuracy = 1.0;
    log.append(e);

    const auto loaded = load_events(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].kind == EventKind::send);
    CHECK(loaded[1].accuracy == 1.0);

    // a second file, then glob-merge
    EventLog log2((dir / "events_b.jsonl").string());
    log2.append(recv_ev("b", "a", 0, 1, 15));
    const auto merged = load_events_glob((dir / "events_*.jsonl").string());
    CHECK(merged.size() == 3);
    CHECK(weights_update_latency(merged, 0) == doctest::Approx(5.0));
}

TEST_CASE("write_report emits schema-conformant CSV and JSON") {
    const auto dir = (fs::temp_directory_path() / "edgefl_report_test").string();
    fs::remove_all(dir);

    std::vector<RoundEvent> events{send_ev("a", "b", 0, 1, 100), recv_ev("b", "a", 0, 1, 125),
                                   ev("a", 0, EventKind::deploy, 100),
                                   ev("a", 1, EventKind::deploy, 400)};
    auto e1 = ev("a", 0, EventKind::evaluate, 130);
    e1.accuracy = 0.75;
    auto e2 = ev("b", 0, EventKind::evaluate, 131);
    e2.accuracy = 0.25;
    events.push_back(e1);
    events.push_back(e2);

    write_report(events, dir);

    std::ifstream csv(fs::path(dir) / "report.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "round,node,metric,value");
    std::string line;
    std::size_t rows = 0;
    bool saw_mean = false, saw_latency = false, saw_evolution = false;
    while (std::getline(csv, line)) {
        ++rows;
        std::stringstream ss(line);
        std::string round, node, metric, value;
        REQUIRE(std::getline(ss, round, ','));
        REQUIRE(std::getline(ss, node, ','));
        REQUIRE(std::getline(ss, metric, ','));
        REQUIRE(std::getline(ss, value, ','));
        CHECK_NOTHROW(std::stod(value));
        CHECK_NOTHROW(std::stoi(round));
        if (metric == "mean_accuracy") {
            saw_mean = true;
            CHECK(std::stod(value) == doctest::Approx(0.5));
        }
        if (metric == "weights_update_latency_ms") {
            saw_latency = true;
            CHECK(std::stod(value) == doctest::Approx(25.0));
        }
        if (metric == "model_evolution_time_ms") {
            saw_evolution = true;
            CHECK(std::stod(value) == doctest::Approx(300.0));
        }
    }
    CHECK(rows >= 5);
    CHECK(saw_mean);
    CHECK(saw_latency);
    CHECK(saw_evolution);

    std::ifstream js(fs::path(dir) / "summary.json");
    REQUIRE(js.good());
    json summary = json::parse(js);
    CHECK(summary.contains("clock_note"));
    CHECK(summary["mean_weights_update_latency_ms"].get<double>() == doctest::Approx(25.0));
    CHECK(summary["per_node_model_evolution_ms"]["a"].get<double>() == doctest::Approx(300.0));
    CHECK(summary["rounds"][0]["mean_accuracy"].get<double>() == doctest::Approx(0.5));
}

TEST_CASE("reported latencies and evolution times are non-negative") {
    std::vector<RoundEvent> events{send_ev("a", "b", 0, 1, 100), recv_ev("b", "a", 0, 1, 100),
                                   ev("a", 0, EventKind::deploy, 50), ev("a", 1, EventKind::deploy, 50)};
    CHECK(weights_update_latency(events, 0) >= 0.0);
    CHECK(model_evolution_time(events, "a") >= 0.0);
}
