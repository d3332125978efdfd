#pragma once

// Plain-text checkpoints. Reals are written as C99 hex floats, so a save/load
// cycle is exact. Layout:
//
//   arr-network 1
//   input <width>
//   layers <L>
//   <width> <relu|identity>          (L lines, input side first)
//   params <P>
//   <P hex floats, one per line>
//   scale <P>
//   <P hex floats>
//   end
//
// A learner checkpoint is a network block followed by:
//
//   arr-strategy 1
//   strategy <naive|cwr|ewc|arr>
//   experiences <n>
//   head <classes> <features+1>
//   cw / tw: <classes*(features+1)> hex floats each, row-major
//   past <classes integers>
//   fisher <P> <max_f> <lambda> <updates>, then P hex floats
//   theta_star <0|P>, then that many hex floats
//   rng <mt19937_64 state, one line>
//   end

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "arr/error.hpp"
#include "arr/nn.hpp"
#include "arr/strategy.hpp"

namespace arr {

namespace detail {

inline void write_real(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    out << buf << '\n';
}

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) throw ParseError("checkpoint truncated after token " + std::to_string(count_));
        ++count_;
        return w;
    }

    void expect(const std::string& token) {
        const auto w = word();
        if (w != token) {
            throw ParseError("checkpoint token " + std::to_string(count_) + ": expected '" + token +
                             "', found '" + w + "'");
        }
    }

    std::size_t size() {
        const auto w = word();
        char* end = nullptr;
        const auto v = std::strtoull(w.c_str(), &end, 10);
        if (*end != '\0' || w.empty() || w[0] == '-') {
            throw ParseError("checkpoint token " + std::to_string(count_) + ": bad integer '" + w + "'");
        }
        return static_cast<std::size_t>(v);
    }

    double real() {
        const auto w = word();
        char* end = nullptr;
        const double v = std::strtod(w.c_str(), &end);
        if (*end != '\0' || w.empty()) {
            throw ParseError("checkpoint token " + std::to_string(count_) + ": bad real '" + w + "'");
        }
        return v;
    }

    std::vector<double> reals(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = real();
        return v;
    }

    std::string line() {
        std::string rest;
        std::getline(in_ >> std::ws, rest);
        ++count_;
        return rest;
    }

private:
    std::istream& in_;
    std::size_t count_ = 0;
};

}  // namespace detail

inline void save_network(std::ostream& out, const Network& net) {
    out << "arr-network 1\n";
    out << "input " << net.input_width() << '\n';
    out << "layers " << net.depth() << '\n';
    for (const auto& L : net.layers()) {
        out << L.out << ' ' << (L.activation == Activation::relu ? "relu" : "identity") << '\n';
    }
    out << "params " << net.parameter_count() << '\n';
    for (double v : net.parameters()) detail::write_real(out, v);
    out << "scale " << net.parameter_count() << '\n';
    for (double v : net.lr_scale()) detail::write_real(out, v);
    out << "end\n";
}

inline Network load_network(std::istream& in) {
    detail::TokenReader rd(in);
    rd.expect("arr-network");
    if (rd.size() != 1) throw ParseError("unsupported network checkpoint version");
    rd.expect("input");
    const auto input = rd.size();
    rd.expect("layers");
    const auto depth = rd.size();
    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto width = rd.size();
        const auto act = rd.word();
        if (act != "relu" && act != "identity") throw ParseError("unknown activation '" + act + "'");
        specs.push_back({width, act == "relu" ? Activation::relu : Activation::identity});
    }
    Network net(input, specs);
    rd.expect("params");
    if (rd.size() != net.parameter_count()) throw ParseError("parameter count does not match layers");
    const auto params = rd.reals(net.parameter_count());
    std::copy(params.begin(), params.end(), net.parameters().begin());
    rd.expect("scale");
    if (rd.size() != net.parameter_count()) throw ParseError("scale count does not match layers");
    net.set_lr_scale(rd.reals(net.parameter_count()));
    rd.expect("end");
    return net;
}

inline void save_learner(std::ostream& out, const Learner& learner) {
    save_network(out, learner.network());
    const auto& head = learner.head();
    const auto& fisher = learner.fisher();
    out << "arr-strategy 1\n";
    out << "strategy " << to_string(learner.config().strategy) << '\n';
    out << "experiences " << learner.experiences_seen() << '\n';
    out << "head " << head.cw.rows() << ' ' << head.cw.cols() << '\n';
    out << "cw\n";
    for (double v : head.cw.values) detail::write_real(out, v);
    out << "tw\n";
    for (double v : head.tw.values) detail::write_real(out, v);
    out << "past";
    for (auto p : head.past) out << ' ' << p;
    out << '\n';
    out << "fisher " << fisher.F.size() << ' ';
    detail::write_real(out, fisher.max_f);
    detail::write_real(out, fisher.lambda);
    out << fisher.updates << '\n';
    for (double v : fisher.F) detail::write_real(out, v);
    out << "theta_star " << (fisher.theta_star ? fisher.theta_star->size() : 0) << '\n';
    if (fisher.theta_star) {
        for (double v : *fisher.theta_star) detail::write_real(out, v);
    }
    out << "rng " << learner.rng() << '\n';
    out << "end\n";
}

/// Restores a learner; `cfg` supplies the hyperparameters (the checkpoint
/// holds state only). The replay memory is restored separately.
inline Learner load_learner(std::istream& in, const TrainConfig& cfg) {
    Network net = load_network(in);
    Learner learner(std::move(net), cfg);
    detail::TokenReader rd(in);
    rd.expect("arr-strategy");
    if (rd.size() != 1) throw ParseError("unsupported strategy checkpoint version");
    rd.expect("strategy");
    const auto tag = rd.word();
    if (tag != to_string(cfg.strategy)) {
        throw ParseError("checkpoint strategy '" + tag + "' differs from config '" +
                         to_string(cfg.strategy) + "'");
    }
    rd.expect("experiences");
    learner.set_experiences_seen(rd.size());
    rd.expect("head");
    const auto rows = rd.size();
    const auto cols = rd.size();
    auto& head = learner.head();
    if (rows != head.cw.rows() || cols != head.cw.cols()) throw ParseError("head shape mismatch");
    rd.expect("cw");
    head.cw.values = rd.reals(rows * cols);
    rd.expect("tw");
    head.tw.values = rd.reals(rows * cols);
    rd.expect("past");
    for (auto& p : head.past) p = rd.size();
    rd.expect("fisher");
    auto& fisher = learner.fisher();
    if (rd.size() != fisher.F.size()) throw ParseError("Fisher length mismatch");
    fisher.max_f = rd.real();
    fisher.lambda = rd.real();
    fisher.updates = rd.size();
    fisher.F = rd.reals(fisher.F.size());
    rd.expect("theta_star");
    const auto n_star = rd.size();
    if (n_star != 0 && n_star != fisher.F.size()) throw ParseError("theta* length mismatch");
    if (n_star == 0) {
        fisher.theta_star.reset();
    } else {
        fisher.theta_star = rd.reals(n_star);
    }
    rd.expect("rng");
    std::istringstream state(rd.line());
    state >> learner.rng();
    if (!state) throw ParseError("bad rng state");
    rd.expect("end");
    return learner;
}

}  // namespace arr
