#pragma once

#include <vector>

#include "arr/nn.hpp"
#include "arr/stream.hpp"

namespace arr::testing {

inline Tensor random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& v : t.values) v = standard_normal(rng);
    return t;
}

inline std::vector<Label> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::vector<Label> y(n);
    for (auto& v : y) v = static_cast<Label>(uniform_index(rng, classes));
    return y;
}

inline Network random_net(std::size_t input, std::vector<std::size_t> hidden, std::size_t classes,
                          std::uint64_t seed) {
    Rng rng(seed);
    return Network::mlp(input, hidden, classes, rng, 0.5);
}

inline Dataset small_dataset(std::uint64_t seed = 1, std::size_t classes = 6, std::size_t per_class = 40,
                             std::size_t dim = 8, double noise = 0.6) {
    SyntheticSpec spec;
    spec.classes = classes;
    spec.samples_per_class = per_class;
    spec.input_dim = dim;
    spec.noise_std = noise;
    spec.seed = seed;
    return generate_synthetic(spec);
}

}  // namespace arr::testing
