#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edgefl {

// Base for everything the framework can throw deliberately.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// weights-core
class EmptyInput : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class BadWeights : public Error { public: using Error::Error; };
class NonFiniteInput : public Error { public: using Error::Error; };
class BadMagic : public Error { public: using Error::Error; };
class ShapeDataMismatch : public Error { public: using Error::Error; };

class Truncated : public Error {
public:
    Truncated(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// trainer / partitioner
class EmptyDataset : public Error { public: using Error::Error; };
class BadLabel : public Error { public: using Error::Error; };
class InsufficientSamples : public Error { public: using Error::Error; };
class CountMismatch : public Error { public: using Error::Error; };

// registry / peer
class BadRequest : public Error { public: using Error::Error; };
class NoRegistryReachable : public Error { public: using Error::Error; };
class PortInUse : public Error { public: using Error::Error; };
class NotStarted : public Error { public: using Error::Error; };
class NoModelYet : public Error { public: using Error::Error; };
class NoPeersAvailable : public Error { public: using Error::Error; };

// metrics
class NoPairs : public Error { public: using Error::Error; };
class InsufficientDeploys : public Error { public: using Error::Error; };

// orchestrator
class LaunchFailure : public Error { public: using Error::Error; };
class Timeout : public Error { public: using Error::Error; };

} // namespace edgefl
