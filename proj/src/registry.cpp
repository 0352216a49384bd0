#include "edgefl/registry.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "edgefl/errors.hpp"
#include "edgefl/metrics.hpp"

namespace edgefl {

namespace {
using nlohmann::json;
}

void validate_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size())
        throw BadRequest("address '" + address + "' is not host:port");
    const std::string port_str = address.substr(colon + 1);
    int port = 0;
    for (char c : port_str) {
        if (c < '0' || c > '9') throw BadRequest("address '" + address + "' has a non-numeric port");
        port = port * 10 + (c - '0');
        if (port > 65535) break;
    }
    if (port < 1 || port > 65535)
        throw BadRequest("address '" + address + "' port outside [1, 65535]");
}

void Registry::register_peer(const std::string& hostname, const std::string& address) {
    if (hostname.empty()) throw BadRequest("empty hostname");
    validate_address(address);
    PeerRecord rec{hostname, address, now_ms()};
    std::lock_guard lock(mu_);
    peers_[hostname] = std::move(rec);
}

void Registry::unregister_peer(const std::string& hostname) {
    if (hostname.empty()) throw BadRequest("empty hostname");
    std::lock_guard lock(mu_);
    peers_.erase(hostname); // absent hostname: silently ok
}

std::vector<PeerRecord> Registry::peers() const {
    std::lock_guard lock(mu_);
    std::vector<PeerRecord> out;
    out.reserve(peers_.size());
    for (const auto& [_, rec] : peers_) out.push_back(rec);
    return out; // std::map iterates sorted by hostname
}

std::size_t Registry::size() const {
    std::lock_guard lock(mu_);
    return peers_.size();
}

struct RegistryServer::Impl {
    Registry registry;
    httplib::Server server;
    std::thread thread;
    std::string bind_addr;
    int requested_port = 0;
    int bound_port = -1;
};

RegistryServer::RegistryServer(int port, std::string bind_addr) : impl_(std::make_unique<Impl>()) {
    impl_->requested_port = port;
    impl_->bind_addr = std::move(bind_addr);

    auto& srv = impl_->server;
    auto* reg = &impl_->registry;

    // SO_REUSEADDR only: a second bind on a live port must fail loudly
    // instead of silently sharing it via SO_REUSEPORT.
    srv.set_socket_options([](socket_t sock) {
        int opt = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&opt), sizeof(opt));
    });

    srv.Post("/register", [reg](const httplib::Request& req, httplib::Response& res) {
        try {
            json body = json::parse(req.body);
            reg->register_peer(body.at("hostname").get<std::string>(),
                               body.at("address").get<std::string>());
            res.set_content(R"({"status":"ok"})", "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
    });

    srv.Post("/unregister", [reg](const httplib::Request& req, httplib::Response& res) {
        try {
            json body = json::parse(req.body);
            reg->unregister_peer(body.at("hostname").get<std::string>());
            res.set_content(R"({"status":"ok"})", "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
    });

    srv.Get("/peers", [reg](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& rec : reg->peers()) {
            arr.push_back({{"hostname", rec.hostname},
                           {"address", rec.address},
                           {"registered_at", rec.registered_at}});
        }
        res.set_content(json{{"peers", arr}}.dump(), "application/json");
    });
}

RegistryServer::~RegistryServer() {
    stop();
}

void RegistryServer::start() {
    auto& srv = impl_->server;
    if (impl_->requested_port == 0) {
        impl_->bound_port = srv.bind_to_any_port(impl_->bind_addr);
        if (impl_->bound_port < 0) throw PortInUse("registry: cannot bind an ephemeral port");
    } else {
        if (!srv.bind_to_port(impl_->bind_addr, impl_->requested_port))
            throw PortInUse("registry: port " + std::to_string(impl_->requested_port) + " unavailable");
        impl_->bound_port = impl_->requested_port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void RegistryServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int RegistryServer::port() const { return impl_->bound_port; }

std::string RegistryServer::base_url() const {
    return "http://" + impl_->bind_addr + ":" + std::to_string(impl_->bound_port);
}

Registry& RegistryServer::state() { return impl_->registry; }

} // namespace edgefl
