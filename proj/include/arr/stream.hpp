#pragma once

// Continual-learning streams: ordered experiences with disjoint train/test
// splits over a fixed class universe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arr/error.hpp"
#include "arr/head.hpp"
#include "arr/nn.hpp"
#include "arr/random.hpp"
#include "arr/tensor.hpp"

namespace arr {

struct LabeledSet {
    Tensor x;
    std::vector<Label> y;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t width() const noexcept { return x.cols(); }
    bool empty() const noexcept { return y.empty(); }

    LabeledSet subset(std::span<const std::size_t> rows) const {
        LabeledSet out;
        out.x = gather_rows(x, rows);
        out.x.shape = {rows.size(), x.cols()};
        out.y.reserve(rows.size());
        for (auto r : rows) out.y.push_back(y[r]);
        return out;
    }

    friend bool operator==(const LabeledSet& a, const LabeledSet& b) {
        return a.y == b.y && a.x.values == b.x.values;
    }
};

inline LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
    LabeledSet out;
    out.x = concat_rows(a.x, b.x);
    out.y = a.y;
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
    return out;
}

struct Dataset {
    LabeledSet train;
    LabeledSet test;
    std::size_t classes = 0;

    std::size_t input_width() const noexcept { return train.width(); }
};

struct Experience {
    std::size_t index = 0;  // 1-based
    LabeledSet train;
    LabeledSet test;
    std::vector<Label> classes;       // sorted
    std::optional<int> task_label;    // never set; algorithms run task-agnostic

    ClassCounts class_counts() const { return count_classes(train.y); }
};

struct Stream {
    std::vector<Experience> experiences;
    std::size_t classes = 0;
    LabeledSet full_test;

    std::size_t size() const noexcept { return experiences.size(); }
};

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t samples_per_class = 200;
    std::size_t input_dim = 16;
    double center_scale = 1.0;
    double noise_std = 0.5;
    std::uint64_t seed = 0;
};

namespace detail {

// Stable per-class split: the first floor(0.8 n) samples of each class train.
inline std::size_t train_share(std::size_t n) { return (n * 4) / 5; }

inline std::vector<std::vector<std::size_t>> rows_by_class(const LabeledSet& set, std::size_t classes) {
    std::vector<std::vector<std::size_t>> out(classes);
    for (std::size_t r = 0; r < set.size(); ++r) out[static_cast<std::size_t>(set.y[r])].push_back(r);
    return out;
}

}  // namespace detail

/// Isotropic Gaussian clusters around seeded centers; 80/20 stratified split.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw InputError("synthetic data needs at least 2 classes");
    if (spec.input_dim == 0) throw InputError("synthetic input dimension must be positive");
    if (spec.samples_per_class < 2) throw InputError("synthetic data needs 2+ samples per class");
    if (spec.noise_std < 0.0) throw InputError("synthetic noise std must be non-negative");
    Rng rng(spec.seed);
    const auto D = spec.input_dim;
    std::vector<double> centers(spec.classes * D);
    for (auto& c : centers) c = spec.center_scale * standard_normal(rng);

    const auto n_train = detail::train_share(spec.samples_per_class);
    const auto n_test = spec.samples_per_class - n_train;
    Dataset ds;
    ds.classes = spec.classes;
    ds.train.x = Tensor::matrix(spec.classes * n_train, D);
    ds.test.x = Tensor::matrix(spec.classes * n_test, D);
    std::size_t tr = 0, te = 0;
    for (std::size_t j = 0; j < spec.classes; ++j) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
            const bool is_train = s < n_train;
            auto row = is_train ? ds.train.x.row(tr++) : ds.test.x.row(te++);
            for (std::size_t d = 0; d < D; ++d) {
                row[d] = centers[j * D + d] + spec.noise_std * standard_normal(rng);
            }
            (is_train ? ds.train.y : ds.test.y).push_back(static_cast<Label>(j));
        }
    }
    return ds;
}

/// Parses a CSV table "f0,...,f{D-1},label" (header row required).
/// Features are min-max scaled to [0,1] per column; constant columns map to 0.
/// When `classes` is non-zero every label must lie in [0, classes).
inline LabeledSet load_csv(std::istream& in, std::size_t classes = 0) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("dataset is empty (line 1: missing header)");
    ++line_no;
    std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (columns < 2) throw ParseError("line 1: header needs at least one feature and a label");
    const auto D = columns - 1;
    std::vector<double> values;
    std::vector<Label> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            if (col > columns) break;
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || std::string_view(end).find_first_not_of(" \t") != std::string_view::npos ||
                !std::isfinite(v)) {
                throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(col) +
                                 ": not a number: '" + cell + "'");
            }
            if (col <= D) {
                values.push_back(v);
            } else {
                if (v != std::floor(v) || v < 0.0) {
                    throw ParseError("line " + std::to_string(line_no) +
                                     ": label must be a non-negative integer");
                }
                labels.push_back(static_cast<Label>(v));
            }
        }
        if (col != columns) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                             " columns, found " + std::to_string(col));
        }
        if (classes != 0 && static_cast<std::size_t>(labels.back()) >= classes) {
            throw ValidationError("line " + std::to_string(line_no) + ": label " +
                                  std::to_string(labels.back()) + " outside declared class count " +
                                  std::to_string(classes));
        }
    }
    if (labels.empty()) throw ParseError("dataset has no data rows");
    LabeledSet set;
    set.x = Tensor::matrix(labels.size(), D, std::move(values));
    set.y = std::move(labels);
    for (std::size_t d = 0; d < D; ++d) {
        double lo = set.x.at(0, d), hi = lo;
        for (std::size_t r = 1; r < set.size(); ++r) {
            lo = std::min(lo, set.x.at(r, d));
            hi = std::max(hi, set.x.at(r, d));
        }
        const double span = hi - lo;
        for (std::size_t r = 0; r < set.size(); ++r) {
            set.x.at(r, d) = span > 0.0 ? (set.x.at(r, d) - lo) / span : 0.0;
        }
    }
    return set;
}

inline LabeledSet load_dataset(const std::string& path, const std::string& format = "csv",
                               std::size_t classes = 0) {
    if (format != "csv") throw InputError("unsupported dataset format '" + format + "'");
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset file " + path);
    return load_csv(in, classes);
}

/// Seeded 80/20 stratified split of a loaded table.
inline Dataset split_dataset(const LabeledSet& all, std::size_t classes, std::uint64_t seed) {
    if (classes == 0) {
        for (auto y : all.y) classes = std::max(classes, static_cast<std::size_t>(y) + 1);
    }
    Rng rng(seed);
    auto by_class = detail::rows_by_class(all, classes);
    std::vector<std::size_t> train_rows, test_rows;
    for (auto& rows : by_class) {
        shuffle_in_place(rows, rng);
        const auto n_train = std::max<std::size_t>(detail::train_share(rows.size()),
                                                   rows.empty() ? 0 : 1);
        train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    }
    Dataset ds;
    ds.classes = classes;
    ds.train = all.subset(train_rows);
    ds.test = all.subset(test_rows);
    return ds;
}

namespace detail {

inline void split_evenly(const std::vector<std::size_t>& rows, std::size_t parts,
                         std::vector<std::vector<std::size_t>>& out) {
    out.assign(parts, {});
    const auto base = rows.size() / parts;
    const auto extra = rows.size() % parts;
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        const auto take = base + (p < extra ? 1 : 0);
        out[p].assign(rows.begin() + static_cast<std::ptrdiff_t>(pos),
                      rows.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += take;
    }
}

// Builds experiences from a per-experience class schedule. Each class's train
// and test rows are shuffled and split evenly across its appearances.
inline Stream build_from_schedule(const Dataset& ds, const std::vector<std::vector<Label>>& schedule,
                                  Rng& rng) {
    const auto C = ds.classes;
    std::vector<std::vector<std::size_t>> appearances(C);
    for (std::size_t e = 0; e < schedule.size(); ++e) {
        for (auto j : schedule[e]) appearances[static_cast<std::size_t>(j)].push_back(e);
    }
    auto train_by_class = rows_by_class(ds.train, C);
    auto test_by_class = rows_by_class(ds.test, C);
    std::vector<std::vector<std::size_t>> train_rows(schedule.size()), test_rows(schedule.size());
    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t j = 0; j < C; ++j) {
        const auto k = appearances[j].size();
        if (k == 0) continue;
        if (train_by_class[j].size() < k) {
            throw InputError("class " + std::to_string(j) + " has " +
                             std::to_string(train_by_class[j].size()) + " train samples for " +
                             std::to_string(k) + " experiences");
        }
        shuffle_in_place(train_by_class[j], rng);
        shuffle_in_place(test_by_class[j], rng);
        split_evenly(train_by_class[j], k, chunks);
        for (std::size_t t = 0; t < k; ++t) {
            auto& dst = train_rows[appearances[j][t]];
            dst.insert(dst.end(), chunks[t].begin(), chunks[t].end());
        }
        split_evenly(test_by_class[j], k, chunks);
        for (std::size_t t = 0; t < k; ++t) {
            auto& dst = test_rows[appearances[j][t]];
            dst.insert(dst.end(), chunks[t].begin(), chunks[t].end());
        }
    }
    Stream stream;
    stream.classes = C;
    stream.full_test = ds.test;
    for (std::size_t e = 0; e < schedule.size(); ++e) {
        shuffle_in_place(train_rows[e], rng);
        Experience ex;
        ex.index = e + 1;
        ex.train = ds.train.subset(train_rows[e]);
        ex.test = ds.test.subset(test_rows[e]);
        ex.classes = schedule[e];
        std::sort(ex.classes.begin(), ex.classes.end());
        stream.experiences.push_back(std::move(ex));
    }
    return stream;
}

}  // namespace detail

/// Class-incremental stream: a seeded random partition of the classes into
/// groups of `per_experience` (the last group takes any remainder).
inline Stream make_nc_stream(const Dataset& ds, std::size_t per_experience, std::uint64_t seed) {
    if (per_experience == 0) throw InputError("classes per experience must be positive");
    if (per_experience > ds.classes) {
        throw InputError("classes per experience (" + std::to_string(per_experience) +
                         ") exceeds class count (" + std::to_string(ds.classes) + ")");
    }
    Rng rng(seed);
    const auto order = permutation(ds.classes, rng);
    const auto groups = ds.classes / per_experience;
    std::vector<std::vector<Label>> schedule(groups);
    for (std::size_t k = 0; k < order.size(); ++k) {
        schedule[std::min(k / per_experience, groups - 1)].push_back(static_cast<Label>(order[k]));
    }
    return detail::build_from_schedule(ds, schedule, rng);
}

/// Class-incremental stream with repetition. New classes are spread evenly
/// over the n experiences; every later experience also revisits
/// round(|new| * (1 - f) / f) already-seen classes (at least one when it
/// introduces none), so that roughly a fraction f of its classes are new.
/// Samples are never reused: each class's data is split across its
/// appearances.
inline Stream make_repetition_stream(const Dataset& ds, std::size_t experiences, double new_fraction,
                                     std::uint64_t seed) {
    if (experiences < 2) throw InputError("repetition streams need at least 2 experiences");
    if (!(new_fraction > 0.0 && new_fraction <= 1.0)) {
        throw InputError("fraction of new classes must lie in (0,1]");
    }
    const auto C = ds.classes;
    Rng rng(seed);
    const auto order = permutation(C, rng);
    std::vector<std::size_t> new_count(experiences, C / experiences);
    for (std::size_t e = 0; e < C % experiences; ++e) ++new_count[e];

    std::vector<std::vector<Label>> schedule(experiences);
    std::vector<Label> seen;
    std::size_t next = 0;
    for (std::size_t e = 0; e < experiences; ++e) {
        std::vector<Label> fresh;
        for (std::size_t k = 0; k < new_count[e]; ++k) fresh.push_back(static_cast<Label>(order[next++]));
        std::size_t revisit = 0;
        if (e > 0) {
            if (!fresh.empty()) {
                revisit = static_cast<std::size_t>(
                    std::lround(static_cast<double>(fresh.size()) * (1.0 - new_fraction) / new_fraction));
            } else {
                revisit = std::max<std::size_t>(1, (C + experiences - 1) / experiences);
            }
            revisit = std::min(revisit, seen.size());
        }
        for (auto idx : sample_without_replacement(seen.size(), revisit, rng)) {
            schedule[e].push_back(seen[idx]);
        }
        schedule[e].insert(schedule[e].end(), fresh.begin(), fresh.end());
        seen.insert(seen.end(), fresh.begin(), fresh.end());
    }
    return detail::build_from_schedule(ds, schedule, rng);
}

/// JSON manifest: per-experience class sets and sample counts.
inline nlohmann::json stream_manifest(const Stream& stream) {
    nlohmann::json j;
    j["classes"] = stream.classes;
    j["experiences"] = nlohmann::json::array();
    for (const auto& e : stream.experiences) {
        nlohmann::json ej;
        ej["index"] = e.index;
        ej["classes"] = e.classes;
        ej["train_samples"] = e.train.size();
        ej["test_samples"] = e.test.size();
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [c, n] : e.class_counts()) counts[std::to_string(c)] = n;
        ej["train_class_counts"] = counts;
        j["experiences"].push_back(ej);
    }
    j["full_test_samples"] = stream.full_test.size();
    return j;
}

}  // namespace arr
