#pragma once

// External random memory of activation patterns.
//
// Binary dump layout (little-endian):
//   offset  size  field
//   0       4     magic "ARRM"
//   4       4     uint32 format version (1)
//   8       8     uint64 entry count N
//   16      8     uint64 replay layer (alpha)
//   24      8     uint64 pattern width W
//   32      ...   N records of: W x float64 pattern, int64 label, uint64 source experience

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "arr/error.hpp"
#include "arr/nn.hpp"
#include "arr/random.hpp"
#include "arr/tensor.hpp"

namespace arr {

struct MemoryEntry {
    std::vector<double> pattern;
    Label label = 0;
    std::size_t source = 0;

    friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

class ReplayMemory {
public:
    ReplayMemory() = default;
    ReplayMemory(std::size_t capacity, std::size_t alpha, bool keep_inputs = false)
        : capacity_(capacity), alpha_(alpha), keep_inputs_(keep_inputs) {}

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t alpha() const noexcept { return alpha_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    /// Pattern width, fixed by the first insertion (0 while empty).
    std::size_t width() const noexcept { return width_; }
    bool keeps_inputs() const noexcept { return keep_inputs_; }

    const std::vector<MemoryEntry>& entries() const noexcept { return entries_; }
    const MemoryEntry& operator[](std::size_t k) const { return entries_.at(k); }

    /// Raw input of entry k; only populated when the diagnostic log is on.
    const std::vector<double>& raw_input(std::size_t k) const {
        if (!keep_inputs_) throw StateError("raw-input log disabled for this memory");
        return raw_inputs_.at(k);
    }

    /// Histogram of entries by source experience (index = experience number).
    std::vector<std::size_t> source_counts(std::size_t experiences) const {
        std::vector<std::size_t> counts(experiences + 1, 0);
        for (const auto& e : entries_) {
            if (e.source < counts.size()) ++counts[e.source];
        }
        return counts;
    }

    void clear() {
        entries_.clear();
        raw_inputs_.clear();
        width_ = 0;
    }

    friend bool operator==(const ReplayMemory& a, const ReplayMemory& b) {
        return a.capacity_ == b.capacity_ && a.alpha_ == b.alpha_ && a.entries_ == b.entries_;
    }

private:
    friend void update_memory(ReplayMemory&, const Tensor&, std::span<const Label>, std::size_t,
                              Rng&, const Tensor*);
    friend ReplayMemory load_memory(std::istream&, std::size_t);

    std::size_t capacity_ = 0;
    std::size_t alpha_ = 0;
    std::size_t width_ = 0;
    bool keep_inputs_ = false;
    std::vector<MemoryEntry> entries_;
    std::vector<std::vector<double>> raw_inputs_;
};

/// Number of samples added after experience i (1-based): floor(RM_size / i).
inline std::size_t compute_h(std::size_t rm_size, std::size_t i) {
    if (i == 0) throw InputError("experience index is 1-based");
    return rm_size / i;
}

/// Adds h = compute_h(capacity, i) random samples of the current experience,
/// evicting as many random stored entries as needed to stay within capacity.
/// The first experience fills an empty memory. When the experience holds
/// fewer than h samples all of them are added.
inline void update_memory(ReplayMemory& memory, const Tensor& patterns, std::span<const Label> labels,
                          std::size_t i, Rng& rng, const Tensor* raw_inputs = nullptr) {
    const auto h = compute_h(memory.capacity_, i);
    const auto n = patterns.rows();
    if (labels.size() != n) throw DimensionError("label count differs from pattern count");
    if (raw_inputs && raw_inputs->rows() != n) throw DimensionError("raw input count mismatch");
    if (memory.keep_inputs_ && !raw_inputs) throw StateError("memory keeps inputs but none given");
    if (h == 0 || n == 0) return;
    if (!memory.entries_.empty() && patterns.cols() != memory.width_) {
        throw ConfigError("pattern width " + std::to_string(patterns.cols()) +
                          " differs from stored width " + std::to_string(memory.width_));
    }
    if (i == 1) memory.clear();

    const auto add = sample_without_replacement(n, h, rng);
    std::vector<std::size_t> replace;
    if (i > 1) {
        const auto size = memory.entries_.size();
        const auto free = memory.capacity_ - std::min(memory.capacity_, size);
        const auto evict = add.size() > free ? std::min(size, add.size() - free) : std::size_t{0};
        replace = sample_without_replacement(size, evict, rng);
        std::sort(replace.begin(), replace.end());
    }

    memory.width_ = patterns.cols();
    for (std::size_t k = 0; k < add.size(); ++k) {
        const auto row = patterns.row(add[k]);
        MemoryEntry entry{{row.begin(), row.end()}, labels[add[k]], i};
        std::vector<double> raw;
        if (memory.keep_inputs_) {
            const auto r = raw_inputs->row(add[k]);
            raw.assign(r.begin(), r.end());
        }
        if (k < replace.size()) {
            memory.entries_[replace[k]] = std::move(entry);
            if (memory.keep_inputs_) memory.raw_inputs_[replace[k]] = std::move(raw);
        } else {
            memory.entries_.push_back(std::move(entry));
            if (memory.keep_inputs_) memory.raw_inputs_.push_back(std::move(raw));
        }
    }
}

/// Draws replay indices uniformly without replacement, reshuffling once the
/// whole memory has been visited.
class ReplaySampler {
public:
    ReplaySampler(const ReplayMemory& memory, Rng& rng) : memory_(&memory), rng_(&rng) {}

    std::vector<std::size_t> next(std::size_t count) {
        std::vector<std::size_t> out;
        if (count == 0) return out;
        if (memory_->empty()) throw StateError("replay requested from an empty memory");
        out.reserve(count);
        while (out.size() < count) {
            if (cursor_ >= order_.size()) {
                order_ = permutation(memory_->size(), *rng_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    const ReplayMemory* memory_;
    Rng* rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

struct ReplayBatch {
    Tensor patterns;
    std::vector<Label> labels;
};

inline ReplayBatch gather_replay(const ReplayMemory& memory, std::span<const std::size_t> indices) {
    ReplayBatch batch;
    batch.patterns = Tensor::matrix(indices.size(), memory.width());
    batch.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& e = memory[indices[k]];
        std::copy(e.pattern.begin(), e.pattern.end(), batch.patterns.row(k).begin());
        batch.labels.push_back(e.label);
    }
    return batch;
}

/// One-shot draw of `count` entries (a fresh sampler per call).
inline ReplayBatch sample_replay(const ReplayMemory& memory, std::size_t count, Rng& rng) {
    ReplaySampler sampler(memory, rng);
    const auto idx = sampler.next(count);
    return gather_replay(memory, idx);
}

/// Mean L2 distance between stored patterns and the activations their raw
/// inputs produce under the current network.
inline double activation_drift(const ReplayMemory& memory, const Network& net) {
    if (!memory.keeps_inputs()) throw StateError("activation drift needs the raw-input log");
    if (memory.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& raw = memory.raw_input(k);
        const Tensor x = Tensor::matrix(1, raw.size(), raw);
        const auto now = forward_to(net, x, memory.alpha());
        const auto& stored = memory[k].pattern;
        if (now.cols() != stored.size()) {
            throw ConfigError("stored pattern width does not match layer " +
                              std::to_string(memory.alpha()));
        }
        double sq = 0.0;
        for (std::size_t c = 0; c < stored.size(); ++c) {
            const double d = stored[c] - now.values[c];
            sq += d * d;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(memory.size());
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "memory dump assumes little-endian");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, std::size_t record) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw ParseError("memory dump truncated at record " + std::to_string(record));
    }
    return v;
}

}  // namespace detail

inline void save_memory(std::ostream& out, const ReplayMemory& memory) {
    out.write("ARRM", 4);
    detail::put<std::uint32_t>(out, 1);
    detail::put<std::uint64_t>(out, memory.size());
    detail::put<std::uint64_t>(out, memory.alpha());
    detail::put<std::uint64_t>(out, memory.width());
    for (const auto& e : memory.entries()) {
        for (double v : e.pattern) detail::put<double>(out, v);
        detail::put<std::int64_t>(out, e.label);
        detail::put<std::uint64_t>(out, e.source);
    }
}

/// Reads a dump. A zero capacity means "same as the stored entry count".
inline ReplayMemory load_memory(std::istream& in, std::size_t capacity = 0) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "ARRM", 4) != 0) {
        throw ParseError("memory dump: bad magic");
    }
    if (detail::take<std::uint32_t>(in, 0) != 1) throw ParseError("memory dump: unknown version");
    const auto count = detail::take<std::uint64_t>(in, 0);
    const auto alpha = detail::take<std::uint64_t>(in, 0);
    const auto width = detail::take<std::uint64_t>(in, 0);
    if (capacity != 0 && capacity < count) throw ParseError("memory dump exceeds the given capacity");
    ReplayMemory memory(capacity == 0 ? count : capacity, alpha);
    memory.width_ = count == 0 ? 0 : width;
    memory.entries_.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) {
        MemoryEntry e;
        e.pattern.resize(width);
        for (auto& v : e.pattern) v = detail::take<double>(in, r);
        e.label = static_cast<Label>(detail::take<std::int64_t>(in, r));
        e.source = detail::take<std::uint64_t>(in, r);
        memory.entries_.push_back(std::move(e));
    }
    return memory;
}

}  // namespace arr
