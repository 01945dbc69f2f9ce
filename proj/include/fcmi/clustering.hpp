#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fcmi/array.hpp"
#include "fcmi/autodiff.hpp"

namespace fcmi {

struct ClusterCenters {
    Array centers;  // K × d

    std::size_t k() const { return centers.rows(); }
};

struct HardPartition {
    std::vector<int> labels;  // values in [0, k)
    std::size_t k = 0;
};

/// Row-stochastic N × K matrix of soft cluster memberships.
struct SoftAssignment {
    Array c;
    double tau = 0.1;
};

struct KMeansOptions {
    std::size_t max_iter = 100;
    double tol = 1e-6;
    std::size_t n_init = 10;  // k-means++ restarts; the lowest inertia wins
};

struct KMeansResult {
    ClusterCenters centers;
    HardPartition partition;
    double inertia = 0.0;
    std::size_t iterations = 0;
    /// Inertia after each assignment step, for convergence diagnostics.
    std::vector<double> inertia_history;
};

/// Lloyd's algorithm with k-means++ seeding, restarted n_init times; the run with
/// the lowest inertia is returned. A run stops when no center moves by tol or
/// more, or after max_iter iterations. A cluster that empties is re-seeded at
/// the point farthest from its current center.
/// Throws DegenerateError when every point is identical.
KMeansResult kmeans(const Array& features, std::size_t k, std::uint64_t seed, KMeansOptions options = {});

double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Jitter added to every coordinate of an exactly-zero latent row before the
/// cosine similarity is taken.
inline constexpr double kZeroNormJitter = 1e-12;

/// Temperature softmax over cosine similarities to the centers.
SoftAssignment soft_assign(const Array& h, const ClusterCenters& centers, double tau);

/// Graph form of soft_assign; centers enter as constants.
ad::Var soft_assign(ad::Var h, const ClusterCenters& centers, double tau);

/// Row-wise argmax.
HardPartition harden(const Array& assignments);

}  // namespace fcmi
