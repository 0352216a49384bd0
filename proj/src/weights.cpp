#include "edgefl/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "edgefl/errors.hpp"

namespace edgefl {

namespace {

constexpr char kMagic[4] = {'E', 'F', 'L', '1'};

// Little-endian primitive writers. The build targets are little-endian, but
// going through byte arithmetic keeps the format bit-exact everywhere.
void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32(out, bits);
}

class Reader {
public:
    Reader(const uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t offset() const { return pos_; }

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > size_) throw Truncated(std::string("truncated reading ") + what, pos_);
    }

    uint8_t u8(const char* what) {
        need(1, what);
        return data_[pos_++];
    }

    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = static_cast<uint16_t>(data_[pos_]) | static_cast<uint16_t>(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return size_ - pos_; }

    float f32(const char* what) {
        uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        return f;
    }

    bool done() const { return pos_ == size_; }

private:
    const uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

} // namespace

bool WeightSet::shape_compatible(const WeightSet& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != other.entries[i].name) return false;
        if (entries[i].shape != other.entries[i].shape) return false;
    }
    return true;
}

void validate(const WeightSet& w) {
    std::unordered_set<std::string> names;
    for (const auto& e : w.entries) {
        if (!names.insert(e.name).second)
            throw ShapeDataMismatch("duplicate entry name '" + e.name + "'");
        for (uint32_t d : e.shape) {
            if (d == 0) throw ShapeDataMismatch("entry '" + e.name + "' has a zero dimension");
        }
        if (e.element_count() != e.data.size())
            throw ShapeDataMismatch("entry '" + e.name + "': shape product " +
                                    std::to_string(e.element_count()) + " != data length " +
                                    std::to_string(e.data.size()));
    }
}

WeightSet average(const std::vector<WeightSet>& inputs,
                  const std::optional<std::vector<double>>& weights,
                  const std::string& producer) {
    if (inputs.empty()) throw EmptyInput("average: input list is empty");

    const WeightSet& ref = inputs.front();
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        const WeightSet& other = inputs[i];
        if (other.entries.size() != ref.entries.size())
            throw ShapeMismatch("average: input " + std::to_string(i) + " has " +
                                std::to_string(other.entries.size()) + " entries, expected " +
                                std::to_string(ref.entries.size()));
        for (std::size_t j = 0; j < ref.entries.size(); ++j) {
            if (other.entries[j].name != ref.entries[j].name ||
                other.entries[j].shape != ref.entries[j].shape)
                throw ShapeMismatch("average: entry '" + ref.entries[j].name +
                                    "' diverges in input " + std::to_string(i));
        }
    }

    if (weights) {
        if (weights->size() != inputs.size())
            throw BadWeights("average: " + std::to_string(weights->size()) + " weights for " +
                             std::to_string(inputs.size()) + " inputs");
        double sum = 0.0;
        for (double w : *weights) {
            if (w < 0.0 || !std::isfinite(w)) throw BadWeights("average: negative or non-finite weight");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw BadWeights("average: weights sum to " + std::to_string(sum) + ", expected 1");
    }

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (const auto& e : inputs[i].entries) {
            for (float v : e.data) {
                if (!std::isfinite(v))
                    throw NonFiniteInput("average: non-finite value in input " + std::to_string(i) +
                                         " entry '" + e.name + "'");
            }
        }
    }

    WeightSet out;
    out.producer = producer;
    out.entries.reserve(ref.entries.size());
    uint64_t max_version = 0;
    for (const auto& in : inputs) max_version = std::max(max_version, in.version);
    out.version = max_version + 1;

    const std::size_t n = inputs.size();
    for (std::size_t j = 0; j < ref.entries.size(); ++j) {
        WeightEntry e;
        e.name = ref.entries[j].name;
        e.shape = ref.entries[j].shape;
        const std::size_t len = ref.entries[j].data.size();
        e.data.resize(len);
        for (std::size_t x = 0; x < len; ++x) {
            double acc = 0.0;
            if (weights) {
                for (std::size_t i = 0; i < n; ++i)
                    acc += (*weights)[i] * static_cast<double>(inputs[i].entries[j].data[x]);
            } else {
                for (std::size_t i = 0; i < n; ++i)
                    acc += static_cast<double>(inputs[i].entries[j].data[x]);
                acc /= static_cast<double>(n);
            }
            e.data[x] = static_cast<float>(acc);
        }
        out.entries.push_back(std::move(e));
    }
    return out;
}

std::vector<uint8_t> serialize(const WeightSet& w) {
    std::vector<uint8_t> out;
    std::size_t total = 4 + 8 + 2 + w.producer.size() + 8 + 4;
    for (const auto& e : w.entries) total += 2 + e.name.size() + 1 + 4 * e.shape.size() + 4 * e.data.size();
    out.reserve(total);

    out.insert(out.end(), kMagic, kMagic + 4);
    put_u64(out, w.version);
    put_u16(out, static_cast<uint16_t>(w.producer.size()));
    out.insert(out.end(), w.producer.begin(), w.producer.end());
    put_u64(out, w.produced_at_ms);
    put_u32(out, static_cast<uint32_t>(w.entries.size()));
    for (const auto& e : w.entries) {
        put_u16(out, static_cast<uint16_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<uint8_t>(e.shape.size()));
        for (uint32_t d : e.shape) put_u32(out, d);
        for (float f : e.data) put_f32(out, f);
    }
    return out;
}

WeightSet deserialize(const uint8_t* data, std::size_t size) {
    Reader r(data, size);
    r.need(4, "magic");
    if (std::memcmp(data, kMagic, 4) != 0) throw BadMagic("deserialize: bad magic");
    r.str(4, "magic");

    WeightSet w;
    w.version = r.u64("version");
    uint16_t producer_len = r.u16("producer length");
    w.producer = r.str(producer_len, "producer");
    w.produced_at_ms = r.u64("produced_at_ms");
    uint32_t entry_count = r.u32("entry count");

    std::unordered_set<std::string> names;
    w.entries.reserve(entry_count);
    for (uint32_t i = 0; i < entry_count; ++i) {
        WeightEntry e;
        uint16_t name_len = r.u16("entry name length");
        e.name = r.str(name_len, "entry name");
        if (!names.insert(e.name).second)
            throw ShapeDataMismatch("deserialize: duplicate entry name '" + e.name + "'");
        uint8_t rank = r.u8("entry rank");
        e.shape.reserve(rank);
        uint64_t count = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            uint32_t dim = r.u32("entry dim");
            if (dim == 0) throw ShapeDataMismatch("deserialize: entry '" + e.name + "' has a zero dimension");
            e.shape.push_back(dim);
            count *= dim;
        }
        // guard against dim products that would overflow the byte count
        if (count > r.remaining() / 4)
            throw Truncated("truncated reading entry data", r.offset());
        e.data.reserve(count);
        for (uint64_t x = 0; x < count; ++x) e.data.push_back(r.f32("entry data"));
        w.entries.push_back(std::move(e));
    }
    return w;
}

WeightSet deserialize(const std::vector<uint8_t>& bytes) {
    return deserialize(bytes.data(), bytes.size());
}

} // namespace edgefl
