#include "fcmi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fcmi/error.hpp"
#include "fcmi/objectives.hpp"

namespace fcmi {

namespace {

std::size_t label_span(std::span<const int> labels, const char* what) {
    int top = -1;
    for (int v : labels) {
        if (v < 0) throw std::invalid_argument(fmt::format("negative {} label {}", what, v));
        top = std::max(top, v);
    }
    return static_cast<std::size_t>(top + 1);
}

void check_pair(const HardPartition& pred, std::span<const int> other, const char* what) {
    if (pred.labels.empty()) throw std::invalid_argument("empty labeling");
    if (pred.labels.size() != other.size()) {
        throw std::invalid_argument(
            fmt::format("{} predicted labels but {} {} labels", pred.labels.size(), other.size(), what));
    }
}

double entropy_of_counts(std::span<const long> counts, double total) {
    double h = 0.0;
    for (long c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

std::size_t cluster_count(const HardPartition& pred) {
    return std::max(pred.k, label_span(pred.labels, "cluster"));
}

}  // namespace

ContingencyTable contingency(std::span<const int> row_labels, std::span<const int> col_labels, std::size_t row_count,
                             std::size_t col_count) {
    if (row_labels.size() != col_labels.size()) throw std::invalid_argument("contingency of unequal-length labelings");
    const std::size_t r = std::max(row_count, label_span(row_labels, "row"));
    const std::size_t c = std::max(col_count, label_span(col_labels, "column"));
    ContingencyTable t{std::vector<std::vector<long>>(r, std::vector<long>(c, 0)), row_labels.size()};
    for (std::size_t i = 0; i < row_labels.size(); ++i)
        ++t.counts[static_cast<std::size_t>(row_labels[i])][static_cast<std::size_t>(col_labels[i])];
    return t;
}

std::vector<int> max_weight_matching(const std::vector<std::vector<long>>& weights) {
    const std::size_t rows = weights.size();
    if (rows == 0) return {};
    const std::size_t cols = weights.front().size();
    const std::size_t n = std::max(rows, cols);
    long top = 0;
    for (const auto& row : weights) {
        if (row.size() != cols) throw std::invalid_argument("ragged weight matrix");
        for (long w : row) top = std::max(top, w);
    }
    // Hungarian method (potentials form) minimizing top - w on the zero-padded square.
    auto cost = [&](std::size_t i, std::size_t j) -> long {
        const long w = (i < rows && j < cols) ? weights[i][j] : 0;
        return top - w;
    };
    const long inf = std::numeric_limits<long>::max() / 4;
    std::vector<long> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> match_of_col(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match_of_col[0] = i;
        std::size_t j0 = 0;
        std::vector<long> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match_of_col[j0];
            long delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match_of_col[j0] = match_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> result(rows, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = match_of_col[j];
        if (i >= 1 && i <= rows && j <= cols) result[i - 1] = static_cast<int>(j - 1);
    }
    return result;
}

double accuracy(const HardPartition& pred, std::span<const int> truth) {
    check_pair(pred, truth, "truth");
    const ContingencyTable table = contingency(pred.labels, truth, pred.k);
    const auto match = max_weight_matching(table.counts);
    long hits = 0;
    for (std::size_t r = 0; r < match.size(); ++r)
        if (match[r] >= 0) hits += table.counts[r][static_cast<std::size_t>(match[r])];
    return static_cast<double>(hits) / static_cast<double>(table.n);
}

double nmi(const HardPartition& pred, std::span<const int> truth) {
    check_pair(pred, truth, "truth");
    const ContingencyTable table = contingency(pred.labels, truth, pred.k);
    const auto n = static_cast<double>(table.n);
    std::vector<long> row_tot(table.rows(), 0), col_tot(table.cols(), 0);
    for (std::size_t r = 0; r < table.rows(); ++r)
        for (std::size_t c = 0; c < table.cols(); ++c) {
            row_tot[r] += table.counts[r][c];
            col_tot[c] += table.counts[r][c];
        }
    const double h_pred = entropy_of_counts(row_tot, n);
    const double h_true = entropy_of_counts(col_tot, n);
    if (h_pred == 0.0 && h_true == 0.0) return 1.0;
    if (h_pred == 0.0 || h_true == 0.0) return 0.0;
    double mi = 0.0;
    for (std::size_t r = 0; r < table.rows(); ++r)
        for (std::size_t c = 0; c < table.cols(); ++c) {
            const long joint = table.counts[r][c];
            if (joint == 0) continue;
            const double p = static_cast<double>(joint) / n;
            mi += p * std::log(static_cast<double>(joint) * n / (static_cast<double>(row_tot[r]) * static_cast<double>(col_tot[c])));
        }
    return std::clamp(mi / std::sqrt(h_pred * h_true), 0.0, 1.0);
}

double balance(const HardPartition& pred, std::span<const int> groups) {
    check_pair(pred, groups, "group");
    const ContingencyTable table = contingency(pred.labels, groups, cluster_count(pred));
    double worst = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t k = 0; k < table.rows(); ++k) {
        const auto& row = table.counts[k];
        const long largest = *std::max_element(row.begin(), row.end());
        if (largest == 0) {
            spdlog::warn("cluster {} is empty; excluded from balance", k);
            continue;
        }
        any = true;
        const long smallest = *std::min_element(row.begin(), row.end());
        worst = std::min(worst, static_cast<double>(smallest) / static_cast<double>(largest));
    }
    if (!any) throw std::invalid_argument("balance needs at least one non-empty cluster");
    return worst;
}

double mnce(const HardPartition& pred, std::span<const int> groups) {
    check_pair(pred, groups, "group");
    const ContingencyTable table = contingency(pred.labels, groups, cluster_count(pred));
    std::vector<long> group_tot(table.cols(), 0);
    for (const auto& row : table.counts)
        for (std::size_t t = 0; t < row.size(); ++t) group_tot[t] += row[t];
    const double h_g = entropy_of_counts(group_tot, static_cast<double>(table.n));
    if (h_g == 0.0) throw DegenerateError("MNCE is undefined for a single-group dataset (H(G) = 0)");
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < table.rows(); ++k) {
        long size = 0;
        for (long c : table.counts[k]) size += c;
        if (size == 0) {
            spdlog::warn("cluster {} is empty; excluded from MNCE", k);
            continue;
        }
        lowest = std::min(lowest, entropy_of_counts(table.counts[k], static_cast<double>(size)));
    }
    return std::clamp(lowest / h_g, 0.0, 1.0);
}

double f_beta(double u, double v, double beta) {
    if (!(u >= 0.0 && u <= 1.0) || !(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(fmt::format("f_beta inputs must lie in [0, 1], got u={} v={}", u, v));
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("f_beta weight must be finite and >= 0");
    if (u == 0.0 || v == 0.0) return 0.0;
    const double b2 = beta * beta;
    return (1.0 + b2) * u * v / (b2 * u + v);
}

MetricsReport full_report(const HardPartition& pred, std::optional<std::span<const int>> truth,
                          std::span<const int> groups, double beta) {
    check_pair(pred, groups, "group");
    MetricsReport r;
    r.n = pred.labels.size();
    r.k = cluster_count(pred);
    r.t = label_span(groups, "group");
    if (truth) {
        r.acc = accuracy(pred, *truth);
        r.nmi = nmi(pred, *truth);
    }
    r.bal = balance(pred, groups);
    r.mnce = mnce(pred, groups);
    if (r.nmi) r.f_beta = f_beta(*r.nmi, r.mnce, beta);
    const Array hard = one_hot(pred.labels, r.k);
    r.mi_gc = loss_fair(hard, groups, r.t);
    r.cmi_xcg = estimate_cmi(hard, groups, r.t);
    return r;
}

namespace {

std::string fixed6(double v) {
    std::string s = fmt::format("{:.6f}", v);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

std::string fixed6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string("null"); }

}  // namespace

std::string to_json(const MetricsReport& r) {
    return fmt::format(
        "{{\n  \"acc\": {},\n  \"nmi\": {},\n  \"bal\": {},\n  \"mnce\": {},\n  \"f_beta\": {},\n"
        "  \"mi_gc\": {},\n  \"cmi_xcg\": {},\n  \"n\": {},\n  \"k\": {},\n  \"t\": {}\n}}\n",
        fixed6(r.acc), fixed6(r.nmi), fixed6(r.bal), fixed6(r.mnce), fixed6(r.f_beta), fixed6(r.mi_gc),
        fixed6(r.cmi_xcg), r.n, r.k, r.t);
}

}  // namespace fcmi
