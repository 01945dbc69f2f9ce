#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fcmi/array.hpp"
#include "fcmi/autodiff.hpp"
#include "fcmi/model.hpp"

namespace testing_support {

using fcmi::Array;
namespace ad = fcmi::ad;

inline Array random_array(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Array a(r, c);
    for (auto& v : a.data()) v = u(rng);
    return a;
}

inline Array random_stochastic(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    Array a = random_array(n, k, rng, 0.01, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double v : a.row_span(i)) s += v;
        for (double& v : a.row_span(i)) v /= s;
    }
    return a;
}

inline std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, k - 1);
    std::vector<int> out(n);
    for (auto& v : out) v = u(rng);
    return out;
}

/// Labels in [0,k) where every value occurs at least once (n >= k).
inline std::vector<int> covering_labels(std::size_t n, int k, std::mt19937_64& rng) {
    std::vector<int> out = random_labels(n, k, rng);
    for (int v = 0; v < k; ++v) out[static_cast<std::size_t>(v)] = v;
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

using LossBuilder = std::function<ad::Var(ad::Graph&, const fcmi::ModelGraph&)>;

/// Max over every parameter entry of |analytic - central difference| / max(1, |central difference|).
/// The finite differences re-run forward with perturbed bindings; no library
/// derivative code is involved on that side.
inline double model_grad_error(const fcmi::ModelParams& params, const LossBuilder& build, double step = 1e-5) {
    ad::Graph graph;
    fcmi::ModelGraph model(graph, params);
    ad::Var root = build(graph, model);
    ad::Bindings bindings = fcmi::ModelGraph::bindings(params);
    graph.forward(root, bindings);
    const ad::Gradients grads = graph.backward(root);

    double worst = 0.0;
    for (auto& [name, value] : bindings) {
        const Array& analytic = grads.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + step;
            const double up = graph.forward(root, bindings).item();
            value[i] = saved - step;
            const double down = graph.forward(root, bindings).item();
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
        }
    }
    return worst;
}

}  // namespace testing_support
