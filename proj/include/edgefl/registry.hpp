#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace edgefl {

// One entry of the active peer list C. hostname is the identity key; address
// is where /latest_model is served.
struct PeerRecord {
    std::string hostname;
    std::string address; // host:port
    uint64_t registered_at = 0;

    bool operator==(const PeerRecord&) const = default;
};

// Throws BadRequest unless address parses as host:port with port in [1,65535].
void validate_address(const std::string& address);

// The coordination state: a linearizable hostname -> PeerRecord map.
// register/unregister are idempotent upserts/deletes; the registry never
// contacts peers.
class Registry {
public:
    void register_peer(const std::string& hostname, const std::string& address);
    void unregister_peer(const std::string& hostname);
    std::vector<PeerRecord> peers() const; // sorted by hostname
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, PeerRecord> peers_;
};

// HTTP front end (Table-style API):
//   POST /register   {"hostname","address"} -> {"status":"ok"} | 400
//   POST /unregister {"hostname"}           -> {"status":"ok"} | 400
//   GET  /peers                             -> {"peers":[...]}
class RegistryServer {
public:
    // port 0 picks a free port; see port() after start().
    explicit RegistryServer(int port, std::string bind_addr = "127.0.0.1");
    ~RegistryServer();

    RegistryServer(const RegistryServer&) = delete;
    RegistryServer& operator=(const RegistryServer&) = delete;

    void start(); // throws PortInUse
    void stop();
    int port() const;
    std::string base_url() const;
    Registry& state();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace edgefl
