#include "fcmi/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "fcmi/error.hpp"

namespace fcmi {

namespace {

double guarded_log(double p) { return std::log(std::max(p, ad::kLogFloor)); }
double xlogx(double p) { return p * guarded_log(p); }

void check_groups(std::span<const int> groups, std::size_t n, std::size_t group_count) {
    if (group_count < 1) throw std::invalid_argument("group count must be at least 1");
    if (groups.size() != n) {
        throw ShapeError(fmt::format("{} group ids for {} assignment rows", groups.size(), n));
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i] < 0 || static_cast<std::size_t>(groups[i]) >= group_count) {
            throw std::invalid_argument(fmt::format("group id {} at row {} outside [0, {})", groups[i], i, group_count));
        }
    }
}

void check_assignments(const Array& c) {
    if (c.rows() == 0 || c.cols() == 0) throw std::invalid_argument("empty assignment matrix");
}

}  // namespace

ClusterMarginal cluster_marginal(const Array& assignments) {
    check_assignments(assignments);
    ClusterMarginal m{std::vector<double>(assignments.cols(), 0.0)};
    for (std::size_t i = 0; i < assignments.rows(); ++i)
        for (std::size_t k = 0; k < assignments.cols(); ++k) m.p[k] += assignments(i, k);
    for (double& v : m.p) v /= static_cast<double>(assignments.rows());
    return m;
}

JointGroupCluster joint_group_cluster(const Array& assignments, std::span<const int> groups, std::size_t group_count) {
    check_assignments(assignments);
    check_groups(groups, assignments.rows(), group_count);
    const std::size_t n = assignments.rows();
    const std::size_t k = assignments.cols();
    JointGroupCluster j{Array(group_count, k), std::vector<double>(group_count, 0.0), std::vector<double>(k, 0.0)};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<std::size_t>(groups[i]);
        j.p_g[t] += inv_n;
        for (std::size_t c = 0; c < k; ++c) {
            j.p_gc(t, c) += assignments(i, c) * inv_n;
            j.p_c[c] += assignments(i, c) * inv_n;
        }
    }
    return j;
}

double loss_rec(const Array& x, const Array& x_prime) {
    if (!x.same_shape(x_prime)) {
        throw ShapeError(fmt::format("reconstruction shape {} does not match input {}", x_prime.shape_string(),
                                     x.shape_string()));
    }
    if (x.rows() == 0) throw std::invalid_argument("reconstruction loss of an empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_prime[i];
        total += d * d;
    }
    return total / static_cast<double>(x.rows());
}

double entropy_cluster(const ClusterMarginal& marginal) {
    double h = 0.0;
    for (double p : marginal.p) h -= xlogx(p);
    return h;
}

double cond_entropy_cx(const Array& assignments) {
    check_assignments(assignments);
    double h = 0.0;
    for (double c : assignments.data()) h -= xlogx(c);
    return h / static_cast<double>(assignments.rows());
}

double loss_clu(const Array& assignments) {
    return -entropy_cluster(cluster_marginal(assignments)) + cond_entropy_cx(assignments);
}

double loss_fair(const Array& assignments, std::span<const int> groups, std::size_t group_count) {
    const JointGroupCluster j = joint_group_cluster(assignments, groups, group_count);
    for (std::size_t t = 0; t < group_count; ++t) {
        if (j.p_g[t] == 0.0) throw std::invalid_argument(fmt::format("group {} has no members", t));
    }
    double mi = 0.0;
    for (std::size_t t = 0; t < group_count; ++t)
        for (std::size_t c = 0; c < j.p_c.size(); ++c) {
            const double p = j.p_gc(t, c);
            mi += p * (guarded_log(p) - guarded_log(j.p_g[t] * j.p_c[c]));
        }
    return mi;
}

double total_loss(double l_rec, double l_clu, double l_fair, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("loss weights must be non-negative");
    return l_rec + alpha * l_clu + beta * l_fair;
}

double estimate_cmi(const Array& assignments, std::span<const int> groups, std::size_t group_count) {
    const double fair = loss_fair(assignments, groups, group_count);
    return entropy_cluster(cluster_marginal(assignments)) - cond_entropy_cx(assignments) - fair;
}

Array one_hot(std::span<const int> labels, std::size_t k) {
    Array out(labels.size(), k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
            throw std::invalid_argument(fmt::format("label {} at row {} outside [0, {})", labels[i], i, k));
        }
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

namespace graph {

namespace {

// (1/n)·1ᵀ C as a 1 × K node.
ad::Var marginal(ad::Var c) {
    const std::size_t n = c.rows();
    return ad::matmul(c.graph().constant(Array(1, n, 1.0 / static_cast<double>(n))), c);
}

}  // namespace

ad::Var loss_rec(ad::Var x, ad::Var x_prime) {
    if (x.rows() == 0) throw std::invalid_argument("reconstruction loss of an empty batch");
    return ad::scale(ad::sum(ad::square(x - x_prime)), 1.0 / static_cast<double>(x.rows()));
}

ad::Var loss_clu(ad::Var c) {
    ad::Var p = marginal(c);
    ad::Var neg_h_c = ad::sum(p * ad::safe_log(p));
    ad::Var h_cx = ad::scale(ad::sum(c * ad::safe_log(c)), -1.0 / static_cast<double>(c.rows()));
    return neg_h_c + h_cx;
}

ad::Var loss_fair(ad::Var c, std::span<const int> groups, std::size_t group_count) {
    check_groups(groups, c.rows(), group_count);
    const std::size_t n = c.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    Array membership(group_count, n);
    Array p_g(group_count, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<std::size_t>(groups[i]);
        membership(t, i) = inv_n;
        p_g(t, 0) += inv_n;
    }
    ad::Graph& g = c.graph();
    ad::Var joint = ad::matmul(g.constant(std::move(membership)), c);
    ad::Var independent = ad::matmul(g.constant(std::move(p_g)), marginal(c));
    return ad::sum(joint * (ad::safe_log(joint) - ad::safe_log(independent)));
}

}  // namespace graph

}  // namespace fcmi
