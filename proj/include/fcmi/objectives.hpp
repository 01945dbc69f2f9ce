#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fcmi/array.hpp"
#include "fcmi/autodiff.hpp"

// Training losses and the probability estimates behind them. All logarithms
// are natural; 0·log 0 is taken as 0 by clamping log arguments at
// ad::kLogFloor.
//
// Each loss exists twice: over plain arrays (reporting, metrics) and as a
// graph builder (training). Tests hold the two routes against each other.

namespace fcmi {

/// p_c[k] = (1/n) Σ_i c_ik.
struct ClusterMarginal {
    std::vector<double> p;
};

/// p_gc[t][k] = (1/n) Σ_i 1[g_i = t] c_ik, with group marginal p_g.
struct JointGroupCluster {
    Array p_gc;  // T × K
    std::vector<double> p_g;
    std::vector<double> p_c;
};

ClusterMarginal cluster_marginal(const Array& assignments);
JointGroupCluster joint_group_cluster(const Array& assignments, std::span<const int> groups, std::size_t group_count);

/// (1/n) Σ_i ||x_i - x'_i||².
double loss_rec(const Array& x, const Array& x_prime);
/// H(C) = -Σ_k p_k log p_k.
double entropy_cluster(const ClusterMarginal& marginal);
/// H(C|X) = -(1/n) Σ_{i,k} c_ik log c_ik.
double cond_entropy_cx(const Array& assignments);
/// -H(C) + H(C|X).
double loss_clu(const Array& assignments);
/// I(G;C) from the soft joint. Rejects groups with no members.
double loss_fair(const Array& assignments, std::span<const int> groups, std::size_t group_count);
/// l_rec + alpha·l_clu + beta·l_fair.
double total_loss(double l_rec, double l_clu, double l_fair, double alpha, double beta);
/// Î(X;C|G) = H(C) - H(C|X) - I(G;C).
double estimate_cmi(const Array& assignments, std::span<const int> groups, std::size_t group_count);

/// One-hot N × k matrix of a hard labeling.
Array one_hot(std::span<const int> labels, std::size_t k);

namespace graph {

ad::Var loss_rec(ad::Var x, ad::Var x_prime);
ad::Var loss_clu(ad::Var assignments);
/// Mini-batch I(G;C). Groups absent from the batch contribute nothing.
ad::Var loss_fair(ad::Var assignments, std::span<const int> groups, std::size_t group_count);

}  // namespace graph

}  // namespace fcmi
