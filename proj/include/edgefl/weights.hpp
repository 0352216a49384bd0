#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace edgefl {

// One named parameter tensor. Data is a flat row-major array of 32-bit
// floats; product(shape) must equal data.size().
struct WeightEntry {
    std::string name;
    std::vector<uint32_t> shape;
    std::vector<float> data;

    uint64_t element_count() const {
        uint64_t n = 1;
        for (uint32_t d : shape) n *= d;
        return n;
    }
};

// Ordered collection of parameter tensors plus provenance. Immutable by
// convention once published: treat instances as values.
struct WeightSet {
    std::vector<WeightEntry> entries;
    uint64_t version = 0;
    std::string producer;
    uint64_t produced_at_ms = 0;

    bool shape_compatible(const WeightSet& other) const;
};

// Throws Error subclasses if the structural invariants do not hold
// (shape/data length agreement, unique entry names, positive dims).
void validate(const WeightSet& w);

// Weighted or uniform element-wise mean of shape-compatible sets.
// Accumulates in 64-bit floats, stores 32-bit. version = max(inputs)+1.
// Throws EmptyInput, ShapeMismatch, BadWeights, NonFiniteInput.
WeightSet average(const std::vector<WeightSet>& inputs,
                  const std::optional<std::vector<double>>& weights = std::nullopt,
                  const std::string& producer = {});

// Binary model format (little-endian):
//   magic "EFL1"
//   version u64 | producer_len u16 | producer bytes | produced_at_ms u64
//   entry_count u32
//   per entry: name_len u16 | name | rank u8 | dims rank*u32 | data product*f32
// Deterministic: the same WeightSet always yields identical bytes.
std::vector<uint8_t> serialize(const WeightSet& w);

// Inverse of serialize. Throws BadMagic, Truncated (with offset),
// ShapeDataMismatch (entry name in message).
WeightSet deserialize(const std::vector<uint8_t>& bytes);
WeightSet deserialize(const uint8_t* data, std::size_t size);

} // namespace edgefl
