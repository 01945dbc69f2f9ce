#include "fcmi/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fcmi/error.hpp"

namespace fcmi {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        d += diff * diff;
    }
    return d;
}

double norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

Array seed_plus_plus(const Array& x, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = x.rows();
    Array centers(k, x.cols());
    std::vector<bool> taken(n, false);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    taken[first] = true;
    std::copy_n(x.row_span(first).begin(), x.cols(), centers.row_span(0).begin());

    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(x.row_span(i), centers.row_span(0));

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : nearest) total += d;
        std::size_t chosen = n;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double running = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                running += nearest[i];
                if (nearest[i] > 0.0 && running >= target) {
                    chosen = i;
                    break;
                }
            }
            if (chosen == n) {
                // Rounding left target just above the running total; take the last candidate.
                for (std::size_t i = n; i-- > 0;)
                    if (nearest[i] > 0.0) {
                        chosen = i;
                        break;
                    }
            }
        } else {
            // Fewer distinct points than clusters: duplicate an unused point and let
            // empty-cluster handling sort it out.
            for (std::size_t i = 0; i < n && chosen == n; ++i)
                if (!taken[i]) chosen = i;
        }
        taken[chosen] = true;
        std::copy_n(x.row_span(chosen).begin(), x.cols(), centers.row_span(c).begin());
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(x.row_span(i), centers.row_span(c)));
    }
    return centers;
}

// Nearest-center assignment; returns inertia and fills labels and per-point distances.
double assign(const Array& x, const Array& centers, std::vector<int>& labels, std::vector<double>& dist) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t c = 0; c < centers.rows(); ++c) {
            const double d = squared_distance(x.row_span(i), centers.row_span(c));
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        labels[i] = arg;
        dist[i] = best;
        inertia += best;
    }
    return inertia;
}

KMeansResult lloyd(const Array& features, Array centers, const KMeansOptions& options) {
    const std::size_t n = features.rows();
    const std::size_t k = centers.rows();
    const std::size_t d = features.cols();

    KMeansResult result;
    std::vector<int> labels(n);
    std::vector<double> dist(n);
    for (std::size_t iter = 1; iter <= options.max_iter; ++iter) {
        result.inertia_history.push_back(assign(features, centers, labels, dist));
        result.iterations = iter;

        Array next(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(labels[i]);
            ++counts[c];
            auto dst = next.row_span(c);
            auto src = features.row_span(i);
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (double& v : next.row_span(c)) v /= static_cast<double>(counts[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            std::copy_n(features.row_span(far).begin(), d, next.row_span(c).begin());
            dist[far] = 0.0;
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(squared_distance(centers.row_span(c), next.row_span(c))));
        centers = std::move(next);
        if (shift < options.tol || shift == 0.0) break;
    }
    result.inertia = assign(features, centers, labels, dist);
    result.centers = ClusterCenters{std::move(centers)};
    result.partition = HardPartition{std::move(labels), k};
    return result;
}

}  // namespace

KMeansResult kmeans(const Array& features, std::size_t k, std::uint64_t seed, KMeansOptions options) {
    const std::size_t n = features.rows();
    if (k < 2) throw std::invalid_argument("kmeans needs k >= 2");
    if (n < k) throw std::invalid_argument(fmt::format("kmeans needs at least k={} points, got {}", k, n));
    if (options.max_iter < 1) throw std::invalid_argument("kmeans max_iter must be at least 1");
    if (!(options.tol >= 0.0)) throw std::invalid_argument("kmeans tol must be non-negative");
    if (options.n_init < 1) throw std::invalid_argument("kmeans n_init must be at least 1");
    if (!features.all_finite()) throw NonFiniteError("kmeans input contains non-finite values");
    bool all_same = true;
    for (std::size_t i = 1; i < n && all_same; ++i)
        all_same = std::equal(features.row_span(i).begin(), features.row_span(i).end(), features.row_span(0).begin());
    if (all_same) throw DegenerateError("kmeans: all points are identical");

    std::mt19937_64 rng(seed);
    KMeansResult best;
    for (std::size_t run = 0; run < options.n_init; ++run) {
        KMeansResult r = lloyd(features, seed_plus_plus(features, k, rng), options);
        if (run == 0 || r.inertia < best.inertia) best = std::move(r);
    }
    return best;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_sim on vectors of different length");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine similarity of a zero vector is undefined");
    double dot = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) dot += a[j] * b[j];
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

namespace {

void check_assign_inputs(std::size_t h_cols, const ClusterCenters& centers, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be positive and finite");
    if (centers.k() < 2) throw std::invalid_argument("soft assignment needs at least two centers");
    if (centers.centers.cols() != h_cols) {
        throw ShapeError(fmt::format("latent width {} does not match center width {}", h_cols, centers.centers.cols()));
    }
    for (std::size_t c = 0; c < centers.k(); ++c) {
        if (norm(centers.centers.row_span(c)) == 0.0) {
            throw std::invalid_argument(fmt::format("cluster center {} is the zero vector", c));
        }
    }
}

}  // namespace

SoftAssignment soft_assign(const Array& h, const ClusterCenters& centers, double tau) {
    check_assign_inputs(h.cols(), centers, tau);
    const std::size_t k = centers.k();
    SoftAssignment out{Array(h.rows(), k), tau};
    std::vector<double> row(h.cols());
    std::vector<double> logits(k);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        auto src = h.row_span(i);
        std::copy(src.begin(), src.end(), row.begin());
        if (norm(row) == 0.0) {
            spdlog::warn("latent row {} has zero norm; jittering by {:g}", i, kZeroNormJitter);
            for (double& v : row) v += kZeroNormJitter;
        }
        for (std::size_t c = 0; c < k; ++c) logits[c] = cosine_sim(row, centers.centers.row_span(c)) / tau;
        const double peak = *std::max_element(logits.begin(), logits.end());
        double total = 0.0;
        for (double& l : logits) total += (l = std::exp(l - peak));
        for (std::size_t c = 0; c < k; ++c) out.c(i, c) = logits[c] / total;
    }
    return out;
}

ad::Var soft_assign(ad::Var h, const ClusterCenters& centers, double tau) {
    check_assign_inputs(h.cols(), centers, tau);
    const std::size_t k = centers.k();
    const std::size_t d = centers.centers.cols();
    Array unit_t(d, k);
    for (std::size_t c = 0; c < k; ++c) {
        const double nc = norm(centers.centers.row_span(c));
        for (std::size_t j = 0; j < d; ++j) unit_t(j, c) = centers.centers(c, j) / nc;
    }
    ad::Var sims = ad::matmul(ad::normalize_rows(h, kZeroNormJitter), h.graph().constant(std::move(unit_t)));
    return ad::softmax_rows(ad::scale(sims, 1.0 / tau));
}

HardPartition harden(const Array& assignments) {
    HardPartition p;
    p.k = assignments.cols();
    p.labels.resize(assignments.rows());
    for (std::size_t i = 0; i < assignments.rows(); ++i) {
        auto row = assignments.row_span(i);
        p.labels[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return p;
}

}  // namespace fcmi
