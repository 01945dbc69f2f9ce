#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcmi/clustering.hpp"

namespace fcmi {

/// counts[r][c] = #{i : rows[i] = r and cols[i] = c}.
struct ContingencyTable {
    std::vector<std::vector<long>> counts;
    std::size_t n = 0;

    std::size_t rows() const { return counts.size(); }
    std::size_t cols() const { return counts.empty() ? 0 : counts.front().size(); }
};

/// Labels must be non-negative; table dimensions are max label + 1 (at least
/// row_count / col_count when given).
ContingencyTable contingency(std::span<const int> row_labels, std::span<const int> col_labels,
                             std::size_t row_count = 0, std::size_t col_count = 0);

/// Maximum-weight one-to-one matching on a non-negative weight matrix.
/// Returns, for each row, the matched column or -1. Rectangular input allowed.
std::vector<int> max_weight_matching(const std::vector<std::vector<long>>& weights);

/// Best matched fraction over one-to-one cluster/class relabelings.
double accuracy(const HardPartition& pred, std::span<const int> truth);

/// I(pred; truth) / sqrt(H(pred) H(truth)). Two single-label partitions score 1;
/// exactly one single-label partition scores 0.
double nmi(const HardPartition& pred, std::span<const int> truth);

/// Min over non-empty clusters of smallest/largest group count in the cluster;
/// a cluster missing any group scores 0.
double balance(const HardPartition& pred, std::span<const int> groups);

/// Min over non-empty clusters of H(G | cluster), divided by H(G).
/// Throws DegenerateError for a single-group dataset.
double mnce(const HardPartition& pred, std::span<const int> groups);

/// Weighted harmonic mean (1+β²)uv / (β²u + v); 0 when u or v is 0.
double f_beta(double u, double v, double beta);

struct MetricsReport {
    std::optional<double> acc;
    std::optional<double> nmi;
    double bal = 0.0;
    double mnce = 0.0;
    std::optional<double> f_beta;
    double mi_gc = 0.0;
    double cmi_xcg = 0.0;
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t t = 0;
};

/// All metrics for one hard clustering. Without truth, acc/nmi/f_beta are absent.
MetricsReport full_report(const HardPartition& pred, std::optional<std::span<const int>> truth,
                          std::span<const int> groups, double beta);

/// JSON object with keys acc, nmi, bal, mnce, f_beta, mi_gc, cmi_xcg, n, k, t.
/// Reals carry exactly six decimals; absent metrics are null.
std::string to_json(const MetricsReport& report);

}  // namespace fcmi
