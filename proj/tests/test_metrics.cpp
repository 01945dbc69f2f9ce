#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fcmi/error.hpp"
#include "fcmi/metrics.hpp"
#include "fcmi/objectives.hpp"
#include "test_support.hpp"

using namespace fcmi;

namespace {

HardPartition part(std::vector<int> labels) {
    const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    return {std::move(labels), static_cast<std::size_t>(k)};
}

// Group ids realizing the given per-cluster counts: counts[k][t] members of group t in cluster k.
std::pair<HardPartition, std::vector<int>> from_counts(const std::vector<std::vector<int>>& counts) {
    std::vector<int> pred, groups;
    for (std::size_t k = 0; k < counts.size(); ++k)
        for (std::size_t t = 0; t < counts[k].size(); ++t)
            for (int r = 0; r < counts[k][t]; ++r) {
                pred.push_back(static_cast<int>(k));
                groups.push_back(static_cast<int>(t));
            }
    return {part(pred), groups};
}

double brute_force_acc(const std::vector<int>& pred, const std::vector<int>& truth) {
    const int k = std::max(*std::max_element(pred.begin(), pred.end()), *std::max_element(truth.begin(), truth.end())) + 1;
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) hits += perm[static_cast<std::size_t>(pred[i])] == truth[i];
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(pred.size());
}

double entropy_of(const std::vector<int>& labels) {
    std::map<int, double> counts;
    for (int v : labels) counts[v] += 1;
    double h = 0.0;
    for (auto& [_, c] : counts) {
        const double p = c / static_cast<double>(labels.size());
        h -= p * std::log(p);
    }
    return h;
}

double mi_of(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) joint[{a[i], b[i]}] += 1, ca[a[i]] += 1, cb[b[i]] += 1;
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (auto& [key, c] : joint) mi += c / n * std::log(c * n / (ca[key.first] * cb[key.second]));
    return mi;
}

}  // namespace

TEST_CASE("accuracy examples") {
    CHECK(accuracy(part({0, 1, 2, 1}), std::vector<int>{0, 1, 2, 1}) == 1.0);
    CHECK(accuracy(part({0, 0, 1, 1}), std::vector<int>{1, 1, 0, 0}) == 1.0);
    const std::vector<int> pred{0, 1, 0, 1, 2, 2}, truth{0, 0, 1, 1, 2, 2};
    CHECK(accuracy(part(pred), truth) == doctest::Approx(4.0 / 6.0));
    CHECK(accuracy(part(pred), truth) == brute_force_acc(pred, truth));
    CHECK_THROWS(accuracy(part({}), std::vector<int>{}));
}

TEST_CASE("accuracy equals exhaustive permutation search") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int kp = 1 + trial % 6, kt = 1 + (trial / 6) % 6;
        const std::size_t n = 5 + static_cast<std::size_t>(trial % 30);
        const auto pred = testing_support::random_labels(n, kp, rng);
        const auto truth = testing_support::random_labels(n, kt, rng);
        CHECK(accuracy(part(pred), truth) == brute_force_acc(pred, truth));
    }
}

TEST_CASE("max_weight_matching on a rectangular table") {
    const std::vector<std::vector<long>> w{{1, 9, 2}, {8, 7, 1}};
    const auto match = max_weight_matching(w);
    REQUIRE(match.size() == 2);
    CHECK(match[0] == 1);
    CHECK(match[1] == 0);
}

TEST_CASE("nmi examples and oracle") {
    CHECK(nmi(part({0, 0, 1, 1, 2}), std::vector<int>{2, 2, 0, 0, 1}) == doctest::Approx(1.0));
    CHECK(std::abs(nmi(part({0, 0, 1, 1}), std::vector<int>{0, 1, 0, 1})) < 1e-15);
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = testing_support::random_labels(30, 3, rng);
        const auto b = testing_support::random_labels(30, 3, rng);
        const double ref = mi_of(a, b) / std::sqrt(entropy_of(a) * entropy_of(b));
        CHECK(std::abs(nmi(part(a), b) - ref) < 1e-10);
        std::vector<int> relabeled;
        for (int v : a) relabeled.push_back((v + 1) % 3);
        CHECK(std::abs(nmi(part(relabeled), b) - nmi(part(a), b)) < 1e-12);
    }
}

TEST_CASE("nmi with constant partitions") {
    CHECK(nmi(part({0, 0, 0}), std::vector<int>{0, 1, 0}) == 0.0);
    CHECK(nmi(part({0, 0, 0}), std::vector<int>{4, 4, 4}) == 1.0);
}

TEST_CASE("balance examples") {
    auto [p1, g1] = from_counts({{3, 4, 18, 20}});
    CHECK(balance(p1, g1) == doctest::Approx(3.0 / 20.0));
    auto [p2, g2] = from_counts({{3, 11, 11, 20}});
    CHECK(balance(p2, g2) == doctest::Approx(3.0 / 20.0));
    auto [p3, g3] = from_counts({{5, 5}, {2, 2}});
    CHECK(balance(p3, g3) == 1.0);
    auto [p4, g4] = from_counts({{5, 5}, {0, 2}});
    CHECK(balance(p4, g4) == 0.0);
}

TEST_CASE("mnce examples") {
    auto [p1, g1] = from_counts({{2, 1}, {4, 2}});
    CHECK(mnce(p1, g1) == doctest::Approx(1.0));
    auto [p2, g2] = from_counts({{3, 0}, {1, 2}});
    CHECK(mnce(p2, g2) == 0.0);
    auto [p3, g3] = from_counts({{1, 1}, {3, 1}});
    CHECK(mnce(p3, g3) == doctest::Approx(0.883460).epsilon(1e-6));
    const double h_small = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
    const double h_global = -(4.0 / 6 * std::log(4.0 / 6) + 2.0 / 6 * std::log(2.0 / 6));
    CHECK(std::abs(mnce(p3, g3) - std::min(std::log(2.0), h_small) / h_global) < 1e-12);

    CHECK_THROWS_AS(mnce(part({0, 1, 0}), std::vector<int>{0, 0, 0}), DegenerateError);
}

TEST_CASE("empty clusters are skipped by balance and mnce") {
    HardPartition p{{0, 0, 2, 2}, 3};
    const std::vector<int> g{0, 1, 0, 1};
    CHECK(balance(p, g) == 1.0);
    CHECK(mnce(p, g) == doctest::Approx(1.0));
}

TEST_CASE("balance and mnce are invariant to relabeling and permutation") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto pred = testing_support::covering_labels(40, 4, rng);
        const auto groups = testing_support::covering_labels(40, 3, rng);
        std::vector<int> relabeled;
        for (int v : pred) relabeled.push_back(3 - v);
        CHECK(balance(part(relabeled), groups) == balance(part(pred), groups));
        CHECK(std::abs(mnce(part(relabeled), groups) - mnce(part(pred), groups)) < 1e-12);

        std::vector<std::size_t> perm(40);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> pp, pg;
        for (auto i : perm) pp.push_back(pred[i]), pg.push_back(groups[i]);
        CHECK(balance(part(pp), pg) == balance(part(pred), groups));
        CHECK(std::abs(mnce(part(pp), pg) - mnce(part(pred), groups)) < 1e-12);
        const double m = mnce(part(pred), groups);
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
    }
}

TEST_CASE("f_beta examples and properties") {
    CHECK(std::abs(f_beta(0.834, 0.682, 1.0) - 0.750) <= 0.0005);
    CHECK(f_beta(0.6, 0.6, 0.3) == doctest::Approx(0.6));
    CHECK(f_beta(0.6, 0.6, 7.0) == doctest::Approx(0.6));
    CHECK(f_beta(0.5, 1.0, 1.0) == doctest::Approx(2.0 / 3.0));
    CHECK(f_beta(0.0, 0.7, 1.0) == 0.0);
    CHECK(f_beta(0.7, 0.0, 1.0) == 0.0);
    CHECK(f_beta(0.3, 0.9, 0.0) == doctest::Approx(0.3));
    CHECK(f_beta(0.3, 0.9, 1e6) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK_THROWS(f_beta(1.2, 0.5, 1.0));
    CHECK_THROWS(f_beta(0.5, -0.1, 1.0));
    CHECK_THROWS(f_beta(0.5, 0.5, -1.0));

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = u(rng), b = u(rng), beta = 3.0 * u(rng);
        CHECK(std::abs(f_beta(a, b, 1.0) - f_beta(b, a, 1.0)) < 1e-15);
        const double bump = std::min(1.0, a + 0.05);
        CHECK(f_beta(bump, b, beta) >= f_beta(a, b, beta) - 1e-15);
        CHECK(f_beta(a, std::min(1.0, b + 0.05), beta) >= f_beta(a, b, beta) - 1e-15);
    }
}

TEST_CASE("full_report examples") {
    const std::vector<int> truth{0, 0, 1, 1, 2, 2};
    const std::vector<int> groups{0, 1, 0, 1, 0, 1};
    const MetricsReport ideal = full_report(part(truth), std::span<const int>(truth), groups, 1.0);
    CHECK(*ideal.acc == 1.0);
    CHECK(*ideal.nmi == doctest::Approx(1.0));
    CHECK(ideal.mnce == doctest::Approx(1.0));
    CHECK(*ideal.f_beta == doctest::Approx(1.0));

    const MetricsReport collapsed = full_report(HardPartition{{0, 0, 0, 0, 0, 0}, 3}, std::span<const int>(truth), groups, 1.0);
    CHECK(collapsed.mnce == doctest::Approx(1.0));
    CHECK(*collapsed.nmi == 0.0);
    CHECK(*collapsed.f_beta == 0.0);

    const MetricsReport blind = full_report(part(truth), std::nullopt, groups, 1.0);
    CHECK_FALSE(blind.acc.has_value());
    CHECK_FALSE(blind.f_beta.has_value());
    CHECK(to_json(blind).find("\"acc\": null") != std::string::npos);
}

TEST_CASE("full_report agrees with the individual operations") {
    std::mt19937_64 rng(5);
    const auto pred = testing_support::covering_labels(40, 3, rng);
    const auto truth = testing_support::covering_labels(40, 3, rng);
    const auto groups = testing_support::covering_labels(40, 2, rng);
    const HardPartition p = part(pred);
    const MetricsReport r = full_report(p, std::span<const int>(truth), groups, 1.5);
    CHECK(*r.acc == accuracy(p, truth));
    CHECK(*r.nmi == nmi(p, truth));
    CHECK(r.bal == balance(p, groups));
    CHECK(r.mnce == mnce(p, groups));
    CHECK(*r.f_beta == f_beta(*r.nmi, r.mnce, 1.5));
    CHECK(r.mi_gc == loss_fair(one_hot(pred, 3), groups, 2));
    CHECK(r.cmi_xcg == estimate_cmi(one_hot(pred, 3), groups, 2));
    CHECK(std::abs(r.mi_gc - mi_of(pred, groups)) < 1e-10);
    CHECK(r.n == 40);
    CHECK(r.k == 3);
    CHECK(r.t == 2);
}

TEST_CASE("report JSON layout") {
    MetricsReport r;
    r.acc = 0.5;
    r.nmi = -0.0;
    r.bal = 1.0 / 3.0;
    r.n = 3;
    r.k = 2;
    r.t = 1;
    const std::string json = to_json(r);
    CHECK(json.find("\"acc\": 0.500000") != std::string::npos);
    CHECK(json.find("\"nmi\": 0.000000") != std::string::npos);
    CHECK(json.find("\"bal\": 0.333333") != std::string::npos);
    CHECK(json.find("\"f_beta\": null") != std::string::npos);
    CHECK(json.find("\"acc\"") < json.find("\"nmi\""));
    CHECK(json.find("\"cmi_xcg\"") < json.find("\"n\""));
}
