#include "edgefl/peer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "edgefl/errors.hpp"

namespace edgefl {

namespace {

using nlohmann::json;

constexpr int kMaxParallelFetches = 16;

std::mutex g_policies_mu;

std::map<std::string, AggregationPolicy>& policies() {
    static std::map<std::string, AggregationPolicy> map = [] {
        std::map<std::string, AggregationPolicy> m;

        // Default: uniform mean over own + fetched, inputs sorted by
        // producer so every node combines the same multiset identically.
        AggregationPolicy uniform;
        uniform.identifier = "uniform_average";
        uniform.combine = [](const std::optional<WeightSet>& own, const std::vector<WeightSet>& fetched) {
            std::vector<WeightSet> inputs = fetched;
            if (own) inputs.push_back(*own);
            std::sort(inputs.begin(), inputs.end(),
                      [](const WeightSet& a, const WeightSet& b) { return a.producer < b.producer; });
            return average(inputs);
        };
        m[uniform.identifier] = uniform;

        // Element-wise trimmed mean: drops one min and one max per element
        // when there are at least three inputs.
        AggregationPolicy trimmed;
        trimmed.identifier = "trimmed_mean";
        trimmed.combine = [](const std::optional<WeightSet>& own, const std::vector<WeightSet>& fetched) {
            std::vector<WeightSet> inputs = fetched;
            if (own) inputs.push_back(*own);
            std::sort(inputs.begin(), inputs.end(),
                      [](const WeightSet& a, const WeightSet& b) { return a.producer < b.producer; });
            if (inputs.size() < 3) return average(inputs);
            WeightSet out = average(inputs); // shape checks + version bookkeeping
            for (std::size_t j = 0; j < out.entries.size(); ++j) {
                auto& data = out.entries[j].data;
                for (std::size_t x = 0; x < data.size(); ++x) {
                    double lo = inputs[0].entries[j].data[x], hi = lo, sum = 0.0;
                    for (const auto& in : inputs) {
                        const double v = in.entries[j].data[x];
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                        sum += v;
                    }
                    data[x] = static_cast<float>((sum - lo - hi) / static_cast<double>(inputs.size() - 2));
                }
            }
            return out;
        };
        m[trimmed.identifier] = trimmed;
        return m;
    }();
    return map;
}

struct Published {
    WeightSet weights;
    std::vector<uint8_t> bytes; // serialized once at publish time
};

httplib::Client make_client(const std::string& base_url, int timeout_ms) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
    cli.set_read_timeout(std::chrono::milliseconds(timeout_ms));
    cli.set_write_timeout(std::chrono::milliseconds(timeout_ms));
    return cli;
}

} // namespace

void register_aggregation_policy(AggregationPolicy policy) {
    std::lock_guard lock(g_policies_mu);
    policies()[policy.identifier] = std::move(policy);
}

const AggregationPolicy& aggregation_policy(const std::string& identifier) {
    std::lock_guard lock(g_policies_mu);
    auto it = policies().find(identifier);
    if (it == policies().end()) throw Error("unknown aggregation policy '" + identifier + "'");
    return it->second;
}

std::vector<PeerRecord> select_peers(const std::vector<PeerRecord>& active, double alpha, Rng& rng) {
    if (active.empty()) return {};
    auto m = static_cast<std::size_t>(
        std::max(std::floor(static_cast<double>(active.size()) * alpha), 1.0));
    m = std::min(m, active.size());
    std::vector<std::size_t> idx(active.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // Partial Fisher-Yates: the first m slots become the sample.
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<PeerRecord> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(active[idx[i]]);
    return out;
}

struct Peer::Impl {
    PeerConfig cfg;
    std::atomic<PeerState> state{PeerState::created};
    std::atomic<int> round{-1};

    httplib::Server server;
    std::thread serve_thread;
    int bound_port = -1;

    mutable std::mutex latest_mu;
    std::shared_ptr<const Published> latest;

    Rng rng{0};
    EventLog log;

    std::shared_ptr<const Published> snapshot() const {
        std::lock_guard lock(latest_mu);
        return latest;
    }

    void swap_in(std::shared_ptr<const Published> next) {
        std::lock_guard lock(latest_mu);
        latest = std::move(next);
    }

    // First registry that answers wins; nullopt when none do.
    template <typename Fn>
    bool with_first_reachable_registry(Fn&& fn) {
        for (const auto& base : cfg.registries) {
            auto cli = make_client(base, cfg.fetch_timeout_ms);
            if (fn(cli)) return true;
        }
        return false;
    }
};

Peer::Peer(PeerConfig cfg) : impl_(std::make_unique<Impl>()) {
    impl_->cfg = std::move(cfg);
    impl_->rng = Rng(impl_->cfg.rng_seed);
    if (!impl_->cfg.events_path.empty()) impl_->log.open(impl_->cfg.events_path);

    auto* im = impl_.get();
    // SO_REUSEADDR only; a port collision must surface as PortInUse
    impl_->server.set_socket_options([](socket_t sock) {
        int opt = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&opt), sizeof(opt));
    });
    impl_->server.Get("/latest_model", [im](const httplib::Request& req, httplib::Response& res) {
        auto snap = im->snapshot();
        if (!snap) {
            res.status = 404;
            res.set_content(R"({"error":"no model"})", "application/json");
            return;
        }
        RoundEvent ev;
        ev.node = im->cfg.hostname;
        ev.kind = EventKind::send;
        ev.timestamp_ms = now_ms();
        ev.payload_version = snap->weights.version;
        if (req.has_header("X-EdgeFL-Requester")) ev.counterpart = req.get_header_value("X-EdgeFL-Requester");
        ev.round = req.has_header("X-EdgeFL-Round")
                       ? std::atoi(req.get_header_value("X-EdgeFL-Round").c_str())
                       : -1;
        im->log.append(std::move(ev));

        if (im->cfg.serve_delay_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(im->cfg.serve_delay_ms));

        res.set_header("X-EdgeFL-Version", std::to_string(snap->weights.version));
        res.set_header("X-EdgeFL-Producer", snap->weights.producer);
        res.set_content(reinterpret_cast<const char*>(snap->bytes.data()), snap->bytes.size(),
                        "application/octet-stream");
    });
}

Peer::~Peer() {
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
}

void Peer::start() {
    if (impl_->state.load() != PeerState::created) throw Error("peer already started");
    if (impl_->cfg.registries.empty()) throw Error("peer config has no registries");

    auto& srv = impl_->server;
    if (impl_->cfg.serve_port == 0) {
        impl_->bound_port = srv.bind_to_any_port("0.0.0.0");
        if (impl_->bound_port < 0) throw PortInUse("peer: cannot bind an ephemeral port");
    } else {
        if (!srv.bind_to_port("0.0.0.0", impl_->cfg.serve_port))
            throw PortInUse("peer: port " + std::to_string(impl_->cfg.serve_port) + " unavailable");
        impl_->bound_port = impl_->cfg.serve_port;
    }
    impl_->serve_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();

    json body{{"hostname", impl_->cfg.hostname}, {"address", address()}};
    const bool registered = impl_->with_first_reachable_registry([&](httplib::Client& cli) {
        auto res = cli.Post("/register", body.dump(), "application/json");
        return res && res->status == 200;
    });
    if (!registered) {
        srv.stop();
        if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
        throw NoRegistryReachable("peer '" + impl_->cfg.hostname + "': no registry reachable");
    }
    impl_->state.store(PeerState::started);
}

void Peer::publish(WeightSet w) {
    if (impl_->state.load() == PeerState::created) throw NotStarted("publish before start()");
    w.producer = impl_->cfg.hostname;
    w.produced_at_ms = now_ms();
    auto pub = std::make_shared<Published>();
    pub->bytes = serialize(w);
    pub->weights = std::move(w);
    const uint64_t version = pub->weights.version;
    const uint64_t ts = pub->weights.produced_at_ms;
    impl_->swap_in(std::move(pub));

    RoundEvent ev;
    ev.node = impl_->cfg.hostname;
    ev.round = impl_->round.load();
    ev.kind = EventKind::deploy;
    ev.timestamp_ms = ts;
    ev.payload_version = version;
    impl_->log.append(std::move(ev));
}

WeightSet Peer::aggregation_func() {
    if (impl_->state.load() == PeerState::created) throw NotStarted("aggregation before start()");

    // 1. active peer list C from the first reachable registry
    std::vector<PeerRecord> active;
    const bool got_list = impl_->with_first_reachable_registry([&](httplib::Client& cli) {
        auto res = cli.Get("/peers");
        if (!res || res->status != 200) return false;
        json j = json::parse(res->body);
        for (const auto& p : j.at("peers")) {
            active.push_back(PeerRecord{p.at("hostname").get<std::string>(),
                                        p.at("address").get<std::string>(),
                                        p.value("registered_at", uint64_t{0})});
        }
        return true;
    });
    if (!got_list) {
        auto snap = impl_->snapshot();
        if (snap) return snap->weights;
        throw NoPeersAvailable("no registry reachable and no local model");
    }

    // 2. drop self, 3. random subset of m peers
    active.erase(std::remove_if(active.begin(), active.end(),
                                [&](const PeerRecord& r) { return r.hostname == impl_->cfg.hostname; }),
                 active.end());
    const auto targets = select_peers(active, impl_->cfg.alpha, impl_->rng);

    // 4. parallel fetch with a bounded worker pool
    const int round = impl_->round.load();
    std::vector<std::optional<WeightSet>> slots(targets.size());
    if (!targets.empty()) {
        std::atomic<std::size_t> cursor{0};
        const std::size_t workers = std::min<std::size_t>(targets.size(), kMaxParallelFetches);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= targets.size()) return;
                    slots[i] = fetch_one(targets[i], round);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    std::vector<WeightSet> fetched;
    for (auto& s : slots)
        if (s) fetched.push_back(std::move(*s));

    // 5./6. combine; degrade to the local model when nothing arrived
    auto snap = impl_->snapshot();
    if (fetched.empty()) {
        if (snap) return snap->weights;
        throw NoPeersAvailable("zero models fetched and no local model");
    }
    std::optional<WeightSet> own;
    if (impl_->cfg.include_self && snap) own = snap->weights;
    const auto& policy = aggregation_policy(impl_->cfg.aggregation);
    WeightSet combined = policy.combine(own, fetched);
    combined.producer = impl_->cfg.hostname;
    return combined;
}

std::optional<WeightSet> Peer::fetch_one(const PeerRecord& target, int round) {
    auto cli = make_client("http://" + target.address, impl_->cfg.fetch_timeout_ms);
    httplib::Headers headers{{"X-EdgeFL-Requester", impl_->cfg.hostname},
                             {"X-EdgeFL-Round", std::to_string(round)}};
    auto res = cli.Get("/latest_model", headers);
    if (!res || res->status != 200) return std::nullopt; // unreachable or NoModelYet
    try {
        WeightSet w = deserialize(reinterpret_cast<const uint8_t*>(res->body.data()), res->body.size());
        RoundEvent ev;
        ev.node = impl_->cfg.hostname;
        ev.round = round;
        ev.kind = EventKind::receive;
        ev.timestamp_ms = now_ms();
        ev.counterpart = target.hostname;
        ev.payload_version = w.version;
        impl_->log.append(std::move(ev));
        return w;
    } catch (const std::exception&) {
        return std::nullopt; // undecodable response is dropped
    }
}

void Peer::unregister_peer() {
    if (impl_->state.load() != PeerState::started) return; // double unregister is a no-op
    json body{{"hostname", impl_->cfg.hostname}};
    const bool ok = impl_->with_first_reachable_registry([&](httplib::Client& cli) {
        auto res = cli.Post("/unregister", body.dump(), "application/json");
        return res && res->status == 200;
    });
    if (!ok)
        std::cerr << "[edgefl] warning: peer '" << impl_->cfg.hostname
                  << "' could not reach a registry to unregister\n";
    impl_->state.store(PeerState::left);
    if (!impl_->cfg.stay_resident) {
        impl_->server.stop();
        if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
    }
}

WeightSet Peer::aggregate_or_init(const ModelSpec& spec) {
    try {
        return aggregation_func();
    } catch (const NoPeersAvailable&) {
        return init_weights(spec); // fresh network: start from w0
    }
}

void Peer::set_round(int round) { impl_->round.store(round); }

std::vector<RoundSummary> Peer::run_rounds(const Dataset& data, const ModelSpec& spec,
                                           const TrainConfig& cfg, int rounds,
                                           const RunOptions& opts) {
    if (impl_->state.load() != PeerState::started) throw NotStarted("run_rounds before start()");
    auto [train_set, test_set] = split_train_test(data, opts.test_fraction, opts.split_seed);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<RoundSummary> summaries;
    for (int i = 0; i < rounds; ++i) {
        const int r = opts.round_offset + i;
        set_round(r);
        WeightSet w_in = aggregate_or_init(spec);

        RoundEvent ts;
        ts.node = impl_->cfg.hostname;
        ts.round = r;
        ts.kind = EventKind::train_start;
        ts.timestamp_ms = now_ms();
        impl_->log.append(std::move(ts));

        WeightSet w_out = node_training(w_in, train_set, cfg);

        if (opts.round_pace_ms > 0)
            std::this_thread::sleep_until(t0 + std::chrono::milliseconds(opts.round_pace_ms) * (i + 1));

        publish(w_out);
        const double acc = evaluate(w_out, test_set);

        RoundEvent ev;
        ev.node = impl_->cfg.hostname;
        ev.round = r;
        ev.kind = EventKind::evaluate;
        ev.timestamp_ms = now_ms();
        ev.accuracy = acc;
        impl_->log.append(std::move(ev));

        RoundSummary s;
        s.round = r;
        s.accuracy = acc;
        s.published_version = w_out.version;
        for (const auto& e : impl_->log.snapshot())
            if (e.kind == EventKind::receive && e.round == r && e.node == impl_->cfg.hostname)
                ++s.models_fetched;
        summaries.push_back(s);
    }
    return summaries;
}

std::shared_ptr<const WeightSet> Peer::latest() const {
    auto snap = impl_->snapshot();
    if (!snap) return nullptr;
    return std::shared_ptr<const WeightSet>(snap, &snap->weights);
}

PeerState Peer::state() const { return impl_->state.load(); }

int Peer::port() const { return impl_->bound_port; }

std::string Peer::address() const {
    return impl_->cfg.advertise_host + ":" + std::to_string(impl_->bound_port);
}

EventLog& Peer::events() { return impl_->log; }

const PeerConfig& Peer::config() const { return impl_->cfg; }

} // namespace edgefl
