#pragma once

// Configuration-driven sweeps over (strategy, alpha, RM_size, seed).
//
// Config files are "key = value" lines; '#' starts a comment. List values
// are comma separated. Every result cell gets its own directory:
//
//   <out>/config.txt            resolved configuration echo
//   <out>/manifest.json         stream manifest
//   <out>/<cell>/metrics.csv    long-format metrics, rewritten after each experience
//   <out>/<cell>/summary.json   final accuracies, config echo, seed, wall times
//   <out>/<cell>/model.ckpt     learner checkpoint
//   <out>/<cell>/memory.bin     replay memory dump (when RM_size > 0)
//   <out>/<cell>/FAILED         present only when the cell aborted
//   <out>/comparison.csv/.txt   ranking table across cells

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "arr/checkpoint.hpp"
#include "arr/error.hpp"
#include "arr/metrics.hpp"
#include "arr/replay.hpp"
#include "arr/strategy.hpp"
#include "arr/stream.hpp"

namespace arr {

enum class DatasetKind { synthetic, csv };
enum class StreamKind { nc, repetition };

struct ExperimentConfig {
    DatasetKind dataset = DatasetKind::synthetic;
    SyntheticSpec synthetic;
    std::string dataset_path;
    std::size_t dataset_classes = 0;
    std::uint64_t split_seed = 0;

    StreamKind stream = StreamKind::nc;
    std::size_t classes_per_experience = 2;
    std::size_t experiences = 5;
    double new_fraction = 0.5;
    std::uint64_t stream_seed = 0;

    std::vector<std::size_t> hidden{32, 32};
    TrainConfig train;  // strategy, alpha, rm_size and seed are set per cell
    std::map<StrategyKind, double> lambda_for;
    std::map<StrategyKind, double> max_f_for;

    std::vector<StrategyKind> strategies{StrategyKind::arr};
    std::vector<std::size_t> alphas{0};
    std::vector<std::size_t> rm_sizes{0};
    std::vector<std::uint64_t> seeds{0};

    std::string output_dir = "results";

    std::size_t cell_count() const {
        return strategies.size() * alphas.size() * rm_sizes.size() * seeds.size();
    }

    /// Keys fixing the data every cell sees; cells are comparable only when equal.
    std::string stream_signature() const {
        std::ostringstream s;
        if (dataset == DatasetKind::synthetic) {
            s << "synthetic(" << synthetic.classes << ',' << synthetic.samples_per_class << ','
              << synthetic.input_dim << ',' << synthetic.center_scale << ',' << synthetic.noise_std << ','
              << synthetic.seed << ')';
        } else {
            s << "csv(" << dataset_path << ',' << dataset_classes << ',' << split_seed << ')';
        }
        if (stream == StreamKind::nc) {
            s << ";nc(" << classes_per_experience << ',' << stream_seed << ')';
        } else {
            s << ";repetition(" << experiences << ',' << new_fraction << ',' << stream_seed << ')';
        }
        return s.str();
    }

    std::string echo() const;
};

namespace detail {

template <typename T>
std::string join(const std::vector<T>& items) {
    std::ostringstream s;
    for (std::size_t k = 0; k < items.size(); ++k) s << (k ? "," : "") << items[k];
    return s.str();
}

inline std::string real_text(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    if (!v.empty() && v.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

inline std::string ExperimentConfig::echo() const {
    std::ostringstream s;
    s << "dataset = " << (dataset == DatasetKind::synthetic ? "synthetic" : "csv") << '\n';
    if (dataset == DatasetKind::synthetic) {
        s << "synthetic.classes = " << synthetic.classes << '\n'
          << "synthetic.samples_per_class = " << synthetic.samples_per_class << '\n'
          << "synthetic.input_dim = " << synthetic.input_dim << '\n'
          << "synthetic.center_scale = " << detail::real_text(synthetic.center_scale) << '\n'
          << "synthetic.noise_std = " << detail::real_text(synthetic.noise_std) << '\n'
          << "synthetic.seed = " << synthetic.seed << '\n';
    } else {
        s << "dataset.path = " << dataset_path << '\n'
          << "dataset.classes = " << dataset_classes << '\n'
          << "dataset.split_seed = " << split_seed << '\n';
    }
    s << "stream = " << (stream == StreamKind::nc ? "nc" : "repetition") << '\n';
    if (stream == StreamKind::nc) {
        s << "stream.classes_per_experience = " << classes_per_experience << '\n';
    } else {
        s << "stream.experiences = " << experiences << '\n'
          << "stream.new_fraction = " << detail::real_text(new_fraction) << '\n';
    }
    s << "stream.seed = " << stream_seed << '\n';
    s << "net.hidden = " << detail::join(hidden) << '\n';
    std::vector<std::string> tags;
    for (auto k : strategies) tags.push_back(to_string(k));
    s << "strategy = " << detail::join(tags) << '\n'
      << "alpha = " << detail::join(alphas) << '\n'
      << "rm_size = " << detail::join(rm_sizes) << '\n'
      << "seed = " << detail::join(seeds) << '\n'
      << "lambda = " << detail::real_text(train.lambda) << '\n'
      << "max_f = " << detail::real_text(train.max_f) << '\n';
    for (const auto& [k, v] : lambda_for) s << to_string(k) << ".lambda = " << detail::real_text(v) << '\n';
    for (const auto& [k, v] : max_f_for) s << to_string(k) << ".max_f = " << detail::real_text(v) << '\n';
    s << "mb_size = " << train.mb_size << '\n'
      << "epochs = " << train.epochs << '\n'
      << "learning_rate = " << detail::real_text(train.learning_rate) << '\n'
      << "below_alpha_rate = " << detail::real_text(train.below_alpha_rate) << '\n';
    if (train.slowdown_layer) s << "slowdown_layer = " << *train.slowdown_layer << '\n';
    s << "freeze_from_first = " << (train.freeze_from_first ? "true" : "false") << '\n'
      << "fisher_samples = " << train.fisher_samples << '\n'
      << "output = " << output_dir << '\n';
    return s.str();
}

struct ValidationResult {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;

    bool ok() const noexcept { return config.has_value() && errors.empty(); }
};

/// Parses and validates config text, reporting every problem found.
/// RM_size, lambda and alpha default to 0 when omitted.
inline ValidationResult validate_config(const std::string& text) {
    ValidationResult result;
    auto& errors = result.errors;
    struct Entry {
        std::string value;
        std::size_t line;
        bool used = false;
    };
    std::map<std::string, Entry> entries;
    {
        std::istringstream in(text);
        std::string line;
        std::size_t no = 0;
        while (std::getline(in, line)) {
            ++no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                errors.push_back("line " + std::to_string(no) + ": expected 'key = value'");
                continue;
            }
            const auto key = detail::trim(line.substr(0, eq));
            const auto value = detail::trim(line.substr(eq + 1));
            if (key.empty()) {
                errors.push_back("line " + std::to_string(no) + ": empty key");
                continue;
            }
            if (entries.count(key)) {
                errors.push_back(key + " (line " + std::to_string(no) + "): duplicate key, first set on line " +
                                 std::to_string(entries[key].line));
                continue;
            }
            entries[key] = {value, no};
        }
    }

    ExperimentConfig cfg;
    const auto where = [&](const std::string& key) {
        return key + " (line " + std::to_string(entries.at(key).line) + ")";
    };
    const auto find = [&](const std::string& key) -> const std::string* {
        auto it = entries.find(key);
        if (it == entries.end()) return nullptr;
        it->second.used = true;
        return &it->second.value;
    };
    const auto parse_u64 = [&](const std::string& key, const std::string& v, std::uint64_t& out) {
        char* end = nullptr;
        const auto x = std::strtoull(v.c_str(), &end, 10);
        if (v.empty() || *end != '\0' || v[0] == '-' || v[0] == '+') {
            errors.push_back(where(key) + ": '" + v + "' is not a non-negative integer");
            return false;
        }
        out = x;
        return true;
    };
    const auto parse_real = [&](const std::string& key, const std::string& v, double& out) {
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        if (v.empty() || *end != '\0' || !std::isfinite(x)) {
            errors.push_back(where(key) + ": '" + v + "' is not a finite number");
            return false;
        }
        out = x;
        return true;
    };
    const auto get_size = [&](const std::string& key, std::size_t& out, std::size_t min_value) {
        if (const auto* v = find(key)) {
            std::uint64_t x = 0;
            if (!parse_u64(key, *v, x)) return;
            if (x < min_value) {
                errors.push_back(where(key) + ": range error, must be >= " + std::to_string(min_value));
                return;
            }
            out = static_cast<std::size_t>(x);
        }
    };
    const auto get_u64 = [&](const std::string& key, std::uint64_t& out) {
        if (const auto* v = find(key)) parse_u64(key, *v, out);
    };
    const auto get_real = [&](const std::string& key, double& out) {
        if (const auto* v = find(key)) parse_real(key, *v, out);
    };
    const auto get_bool = [&](const std::string& key, bool& out) {
        if (const auto* v = find(key)) {
            if (*v == "true" || *v == "1") {
                out = true;
            } else if (*v == "false" || *v == "0") {
                out = false;
            } else {
                errors.push_back(where(key) + ": expected true or false");
            }
        }
    };
    const auto get_size_list = [&](const std::string& key, std::vector<std::size_t>& out, bool allow_empty) {
        if (const auto* v = find(key)) {
            std::vector<std::size_t> parsed;
            if (v->empty()) {
                if (!allow_empty) errors.push_back(where(key) + ": list must not be empty");
                out.clear();
                return;
            }
            bool good = true;
            for (const auto& item : detail::split_list(*v)) {
                std::uint64_t x = 0;
                if (!parse_u64(key, item, x)) {
                    good = false;
                    continue;
                }
                parsed.push_back(static_cast<std::size_t>(x));
            }
            if (good) out = std::move(parsed);
        }
    };

    // dataset
    if (const auto* v = find("dataset")) {
        if (*v == "synthetic") {
            cfg.dataset = DatasetKind::synthetic;
        } else if (*v == "csv") {
            cfg.dataset = DatasetKind::csv;
        } else {
            errors.push_back(where("dataset") + ": expected synthetic or csv");
        }
    }
    if (const auto* v = find("dataset.path")) cfg.dataset_path = *v;
    get_size("dataset.classes", cfg.dataset_classes, 0);
    get_u64("dataset.split_seed", cfg.split_seed);
    get_size("synthetic.classes", cfg.synthetic.classes, 2);
    get_size("synthetic.samples_per_class", cfg.synthetic.samples_per_class, 2);
    get_size("synthetic.input_dim", cfg.synthetic.input_dim, 1);
    get_real("synthetic.center_scale", cfg.synthetic.center_scale);
    get_real("synthetic.noise_std", cfg.synthetic.noise_std);
    get_u64("synthetic.seed", cfg.synthetic.seed);
    if (cfg.synthetic.noise_std <= 0.0) {
        errors.push_back(where("synthetic.noise_std") + ": range error, must be > 0");
    }
    if (cfg.synthetic.center_scale < 0.0) {
        errors.push_back(where("synthetic.center_scale") + ": range error, must be >= 0");
    }
    if (cfg.dataset == DatasetKind::csv && cfg.dataset_path.empty()) {
        errors.push_back("dataset.path: required when dataset = csv");
    }

    // stream
    if (const auto* v = find("stream")) {
        if (*v == "nc") {
            cfg.stream = StreamKind::nc;
        } else if (*v == "repetition") {
            cfg.stream = StreamKind::repetition;
        } else {
            errors.push_back(where("stream") + ": expected nc or repetition");
        }
    }
    get_size("stream.classes_per_experience", cfg.classes_per_experience, 1);
    get_size("stream.experiences", cfg.experiences, 2);
    get_real("stream.new_fraction", cfg.new_fraction);
    get_u64("stream.seed", cfg.stream_seed);
    if (!(cfg.new_fraction > 0.0 && cfg.new_fraction <= 1.0)) {
        errors.push_back(entries.count("stream.new_fraction") ? where("stream.new_fraction") +
                                                                    ": range error, must lie in (0,1]"
                                                              : "stream.new_fraction: range error");
    }
    const std::size_t known_classes =
        cfg.dataset == DatasetKind::synthetic ? cfg.synthetic.classes : cfg.dataset_classes;
    if (cfg.stream == StreamKind::nc && known_classes > 0 && cfg.classes_per_experience > known_classes) {
        errors.push_back("stream.classes_per_experience: range error, exceeds the class count " +
                         std::to_string(known_classes));
    }

    // network and sweep axes
    get_size_list("net.hidden", cfg.hidden, true);
    for (auto w : cfg.hidden) {
        if (w == 0) errors.push_back(where("net.hidden") + ": range error, widths must be positive");
    }
    if (const auto* v = find("strategy")) {
        cfg.strategies.clear();
        for (const auto& tag : detail::split_list(*v)) {
            if (auto k = parse_strategy(tag)) {
                cfg.strategies.push_back(*k);
            } else {
                errors.push_back(where("strategy") + ": unknown strategy '" + tag + "'");
            }
        }
        if (v->empty()) errors.push_back(where("strategy") + ": list must not be empty");
    }
    get_size_list("alpha", cfg.alphas, false);
    get_size_list("rm_size", cfg.rm_sizes, false);
    {
        std::vector<std::size_t> seeds;
        const bool present = entries.count("seed") > 0;
        get_size_list("seed", seeds, false);
        if (present && !seeds.empty()) cfg.seeds.assign(seeds.begin(), seeds.end());
    }
    for (auto a : cfg.alphas) {
        if (a > cfg.hidden.size()) {
            errors.push_back(where("alpha") + ": index error, layer " + std::to_string(a) +
                             " is not below the head (valid 0.." + std::to_string(cfg.hidden.size()) + ")");
        }
    }

    // training hyperparameters
    auto& t = cfg.train;
    get_real("lambda", t.lambda);
    get_real("max_f", t.max_f);
    get_size("mb_size", t.mb_size, 1);
    get_size("epochs", t.epochs, 1);
    get_real("learning_rate", t.learning_rate);
    get_real("below_alpha_rate", t.below_alpha_rate);
    get_bool("freeze_from_first", t.freeze_from_first);
    get_size("fisher_samples", t.fisher_samples, 1);
    if (entries.count("slowdown_layer")) {
        std::size_t s = 0;
        get_size("slowdown_layer", s, 0);
        if (s > cfg.hidden.size()) {
            errors.push_back(where("slowdown_layer") + ": index error, must be below the head");
        }
        t.slowdown_layer = s;
    }
    if (t.lambda < 0.0) errors.push_back("lambda: range error, must be >= 0");
    if (!(t.max_f > 0.0)) errors.push_back("max_f: range error, must be > 0");
    if (!(t.learning_rate > 0.0)) errors.push_back("learning_rate: range error, must be > 0");
    if (!(t.below_alpha_rate >= 0.0 && t.below_alpha_rate <= 1.0)) {
        errors.push_back("below_alpha_rate: range error, must lie in [0,1]");
    }
    for (auto k : {StrategyKind::naive, StrategyKind::cwr, StrategyKind::ewc, StrategyKind::arr}) {
        const auto lk = to_string(k) + ".lambda";
        const auto mk = to_string(k) + ".max_f";
        if (entries.count(lk)) {
            double v = 0.0;
            get_real(lk, v);
            if (v < 0.0) errors.push_back(where(lk) + ": range error, must be >= 0");
            cfg.lambda_for[k] = v;
        }
        if (entries.count(mk)) {
            double v = 0.0;
            get_real(mk, v);
            if (!(v > 0.0)) errors.push_back(where(mk) + ": range error, must be > 0");
            cfg.max_f_for[k] = v;
        }
    }
    if (const auto* v = find("output")) {
        if (v->empty()) errors.push_back(where("output") + ": must not be empty");
        cfg.output_dir = *v;
    }

    for (const auto& [key, e] : entries) {
        if (!e.used) errors.push_back(key + " (line " + std::to_string(e.line) + "): unknown key");
    }
    if (errors.empty()) result.config = std::move(cfg);
    return result;
}

struct CellSpec {
    StrategyKind strategy = StrategyKind::arr;
    std::size_t alpha = 0;
    std::size_t rm_size = 0;
    std::uint64_t seed = 0;
    TrainConfig train;

    std::string group() const {
        return to_string(strategy) + "_a" + std::to_string(alpha) + "_rm" + std::to_string(rm_size);
    }
    std::string name() const { return group() + "_s" + std::to_string(seed); }
};

inline std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg) {
    std::vector<CellSpec> cells;
    for (auto s : cfg.strategies) {
        for (auto a : cfg.alphas) {
            for (auto rm : cfg.rm_sizes) {
                for (auto seed : cfg.seeds) {
                    CellSpec c{s, a, rm, seed, cfg.train};
                    c.train.strategy = s;
                    c.train.alpha = a;
                    c.train.rm_size = rm;
                    c.train.seed = seed;
                    if (auto it = cfg.lambda_for.find(s); it != cfg.lambda_for.end()) c.train.lambda = it->second;
                    if (auto it = cfg.max_f_for.find(s); it != cfg.max_f_for.end()) c.train.max_f = it->second;
                    cells.push_back(c);
                }
            }
        }
    }
    return cells;
}

inline Dataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == DatasetKind::synthetic) return generate_synthetic(cfg.synthetic);
    const auto table = load_dataset(cfg.dataset_path, "csv", cfg.dataset_classes);
    return split_dataset(table, cfg.dataset_classes, cfg.split_seed);
}

inline Stream build_stream(const ExperimentConfig& cfg, const Dataset& ds) {
    if (cfg.stream == StreamKind::nc) return make_nc_stream(ds, cfg.classes_per_experience, cfg.stream_seed);
    return make_repetition_stream(ds, cfg.experiences, cfg.new_fraction, cfg.stream_seed);
}

struct RunOptions {
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> output_dir;
};

struct RunReport {
    std::size_t cells = 0;
    std::size_t failed = 0;
    std::vector<std::string> failures;
    std::filesystem::path output_dir;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StateError("cannot write " + path.string());
    out << text;
}

inline nlohmann::json record_json(const ExperienceRecord& r) {
    return {{"experience", r.experience},
            {"accuracy_fixed", r.accuracy_fixed},
            {"accuracy_seen", r.accuracy_seen},
            {"stream_loss", r.stream_loss}};
}

}  // namespace detail

/// Runs one cell into `dir`. Returns an empty string on success, the error
/// message otherwise (a FAILED marker is left next to any partial metrics).
inline std::string run_cell(const ExperimentConfig& cfg, const CellSpec& cell, const Stream& stream,
                            const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    fs::remove(dir / "FAILED", ec);
    fs::remove(dir / "summary.json", ec);
    try {
        const NetSpec spec{stream.full_test.width(), cfg.hidden, stream.classes};
        Learner learner(spec, cell.train);
        const auto flush = [&](const MetricsLog& log) {
            std::ostringstream csv;
            log.write_csv(csv);
            detail::write_text(dir / "metrics.csv", csv.str());
        };
        const auto log = run_stream(learner, stream, flush);

        std::ostringstream ckpt;
        save_learner(ckpt, learner);
        detail::write_text(dir / "model.ckpt", ckpt.str());
        if (cell.rm_size > 0) {
            std::ostringstream mem(std::ios::binary);
            save_memory(mem, learner.memory());
            detail::write_text(dir / "memory.bin", mem.str());
        }

        nlohmann::json j;
        j["cell"] = cell.name();
        j["group"] = cell.group();
        j["status"] = "ok";
        j["strategy"] = to_string(cell.strategy);
        j["alpha"] = cell.alpha;
        j["rm_size"] = cell.rm_size;
        j["seed"] = cell.seed;
        j["lambda"] = cell.train.lambda;
        j["max_f"] = cell.train.max_f;
        j["experiences"] = log.size();
        j["final"] = detail::record_json(log.back());
        j["per_experience"] = nlohmann::json::array();
        std::vector<double> wall;
        for (const auto& r : log.records()) {
            j["per_experience"].push_back(detail::record_json(r));
            wall.push_back(r.wall_seconds);
        }
        j["stream_signature"] = cfg.stream_signature();
        j["config"] = cfg.echo();
        j["wall_seconds"] = wall;
        detail::write_text(dir / "summary.json", j.dump(2) + "\n");
        return {};
    } catch (const std::exception& e) {
        const std::string msg = cell.name() + ": " + e.what();
        try {
            detail::write_text(dir / "FAILED", msg + "\n");
        } catch (...) {
        }
        return msg;
    }
}

struct ComparisonRow {
    std::string group;
    std::string strategy;
    std::size_t alpha = 0;
    std::size_t rm_size = 0;
    std::size_t runs = 0;
    double mean_fixed = 0.0;
    double std_fixed = 0.0;
    double mean_seen = 0.0;
    double std_seen = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;  // sorted by mean fixed-test accuracy, descending

    /// Group names ordered by one protocol's mean accuracy (descending).
    std::vector<std::string> ranking(bool fixed_protocol) const {
        auto sorted = rows;
        std::stable_sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
            return fixed_protocol ? a.mean_fixed > b.mean_fixed : a.mean_seen > b.mean_seen;
        });
        std::vector<std::string> out;
        for (const auto& r : sorted) out.push_back(r.group);
        return out;
    }

    void write_csv(std::ostream& out) const {
        out << "rank,cell,strategy,alpha,rm_size,runs,fixed_mean,fixed_std,seen_mean,seen_std\n";
        char buf[160];
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& r = rows[k];
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", r.mean_fixed, r.std_fixed, r.mean_seen,
                          r.std_seen);
            out << k + 1 << ',' << r.group << ',' << r.strategy << ',' << r.alpha << ',' << r.rm_size << ','
                << r.runs << ',' << buf << '\n';
        }
    }

    std::string render() const {
        std::size_t width = 4;
        for (const auto& r : rows) width = std::max(width, r.group.size());
        std::ostringstream out;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-4s  %-*s  %4s  %-17s  %-17s\n", "rank", static_cast<int>(width), "cell",
                      "runs", "fixed", "seen");
        out << buf;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& r = rows[k];
            std::snprintf(buf, sizeof buf, "%-4zu  %-*s  %4zu  %.4f +- %.4f  %.4f +- %.4f\n", k + 1,
                          static_cast<int>(width), r.group.c_str(), r.runs, r.mean_fixed, r.std_fixed,
                          r.mean_seen, r.std_seen);
            out << buf;
        }
        return out.str();
    }
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace detail

/// Aggregates every successful cell under `dir` into a ranking table
/// (mean +- sample std across seeds) and writes comparison.csv/.txt there.
inline ComparisonTable compare_runs(const std::filesystem::path& dir, bool write_files = true) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw InputError("result directory " + dir.string() + " does not exist");
    std::vector<fs::path> cells;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "summary.json") &&
            !fs::exists(entry.path() / "FAILED")) {
            cells.push_back(entry.path());
        }
    }
    std::sort(cells.begin(), cells.end());
    if (cells.size() < 2) throw InputError("comparison needs at least two result cells");

    struct Acc {
        ComparisonRow row;
        std::vector<double> fixed, seen;
    };
    std::map<std::string, Acc> groups;
    std::optional<std::string> signature;
    for (const auto& path : cells) {
        std::ifstream in(path / "summary.json");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ParseError(path.string() + "/summary.json: " + e.what());
        }
        const auto sig = j.at("stream_signature").get<std::string>();
        if (!signature) {
            signature = sig;
        } else if (*signature != sig) {
            throw ComparabilityError("cell " + path.filename().string() + " ran on a different stream (" + sig +
                                     " vs " + *signature + ")");
        }
        const auto group = j.value("group", j.at("cell").get<std::string>());
        auto& acc = groups[group];
        acc.row.group = group;
        acc.row.strategy = j.at("strategy").get<std::string>();
        acc.row.alpha = j.at("alpha").get<std::size_t>();
        acc.row.rm_size = j.at("rm_size").get<std::size_t>();
        acc.fixed.push_back(j.at("final").at("accuracy_fixed").get<double>());
        acc.seen.push_back(j.at("final").at("accuracy_seen").get<double>());
    }
    ComparisonTable table;
    for (auto& [name, acc] : groups) {
        acc.row.runs = acc.fixed.size();
        std::tie(acc.row.mean_fixed, acc.row.std_fixed) = detail::mean_std(acc.fixed);
        std::tie(acc.row.mean_seen, acc.row.std_seen) = detail::mean_std(acc.seen);
        table.rows.push_back(acc.row);
    }
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [](const auto& a, const auto& b) { return a.mean_fixed > b.mean_fixed; });
    if (write_files) {
        std::ostringstream csv;
        table.write_csv(csv);
        detail::write_text(dir / "comparison.csv", csv.str());
        detail::write_text(dir / "comparison.txt", table.render());
    }
    return table;
}

/// Runs every sweep cell of `cfg`. Cells execute on `jobs` worker threads,
/// each owning its state and output directory.
inline RunReport run_experiment(ExperimentConfig cfg, const RunOptions& opts = {}) {
    namespace fs = std::filesystem;
    if (opts.seed_override) cfg.seeds = {*opts.seed_override};
    if (opts.output_dir) cfg.output_dir = *opts.output_dir;
    RunReport report;
    report.output_dir = cfg.output_dir;
    fs::create_directories(report.output_dir);

    const auto ds = build_dataset(cfg);
    const auto stream = build_stream(cfg, ds);
    for (auto a : cfg.alphas) {
        if (a > cfg.hidden.size()) throw ConfigError("alpha " + std::to_string(a) + " is not below the head");
    }
    detail::write_text(report.output_dir / "config.txt", cfg.echo());
    detail::write_text(report.output_dir / "manifest.json", stream_manifest(stream).dump(2) + "\n");

    const auto cells = enumerate_cells(cfg);
    report.cells = cells.size();
    std::atomic<std::size_t> next{0};
    std::mutex lock;
    const auto worker = [&] {
        for (auto k = next.fetch_add(1); k < cells.size(); k = next.fetch_add(1)) {
            auto msg = run_cell(cfg, cells[k], stream, report.output_dir / cells[k].name());
            if (!msg.empty()) {
                std::lock_guard<std::mutex> g(lock);
                report.failures.push_back(std::move(msg));
            }
        }
    };
    const auto jobs = std::max<std::size_t>(1, std::min(opts.jobs, cells.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::sort(report.failures.begin(), report.failures.end());
    report.failed = report.failures.size();
    if (cells.size() - report.failed >= 2) compare_runs(report.output_dir);
    return report;
}

}  // namespace arr
