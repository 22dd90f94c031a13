#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "debias/cmi.hpp"
#include "debias/rng.hpp"
#include "support/builders.hpp"

using namespace debias;
using testsup::rec;

namespace {

// Rows with a binary conditioning feature. Regime 0: C = E. Regime 1: C
// independent of E. mix = share of rows in regime 0.
Dataset coin_world(std::size_t n, double mix, std::uint64_t seed) {
    rng::SeqRng g(seed, 0);
    Dataset ds;
    ds.feature_dim = 1;
    for (std::size_t i = 0; i < n; ++i) {
        double x = g.uniform() < mix ? 0.0 : 1.0;
        int e = g.uniform() < 0.5 ? 1 : 0;
        int c = x == 0.0 ? e : (g.uniform() < 0.5 ? 1 : 0);
        ds.records.push_back(rec("u", "i" + std::to_string(i), {x}, g.uniform(), e, c));
    }
    return ds;
}

std::vector<std::array<double, 4>> count_table(const Dataset& ds) {
    // buckets keyed by the binary conditioning feature
    std::vector<std::array<double, 4>> counts(2, {0, 0, 0, 0});
    for (const auto& r : ds.records)
        counts[static_cast<int>(r.x_r[0])][r.exposure * 2 + r.click] += 1.0;
    return counts;
}

StatNetConfig fast_cfg(std::uint64_t seed) {
    StatNetConfig cfg;
    cfg.hidden_layers = {32, 32};
    cfg.epochs = 60;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("plugin cmi on analytic tables") {
    // independent: counts proportional to a product law in every bucket
    std::vector<std::array<double, 4>> indep{{25, 25, 25, 25}, {10, 30, 10, 30}};
    CHECK(plugin_cmi_discrete(indep) == doctest::Approx(0.0).epsilon(1e-12));

    // perfectly coupled inside one bucket: I = ln 2
    std::vector<std::array<double, 4>> coupled{{50, 0, 0, 50}};
    CHECK(plugin_cmi_discrete(coupled) == doctest::Approx(std::log(2.0)));

    // half the mass coupled, half independent: the average, 0.5 ln 2
    std::vector<std::array<double, 4>> mixture{{50, 0, 0, 50}, {25, 25, 25, 25}};
    CHECK(plugin_cmi_discrete(mixture) == doctest::Approx(0.5 * std::log(2.0)));

    // zero cells exercise the 0 log 0 convention
    std::vector<std::array<double, 4>> sparse{{10, 0, 0, 0}, {0, 0, 0, 10}};
    CHECK(plugin_cmi_discrete(sparse) == doctest::Approx(0.0));

    CHECK_THROWS_WITH_AS(plugin_cmi_discrete({}), doctest::Contains("EmptyCounts"), Error);
    std::vector<std::array<double, 4>> negative{{1, -1, 0, 0}};
    CHECK_THROWS_WITH_AS(plugin_cmi_discrete(negative), doctest::Contains("EmptyCounts"),
                         Error);
}

TEST_CASE("conditional permutation keeps x and e, swaps clicks among neighbours") {
    auto ds = testsup::random_dataset(120, 3, 0.6, 0.5, 11);
    const int k = 5;
    Dataset perm = conditional_permutation(ds, k, 99);
    REQUIRE(perm.size() == ds.size());

    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(perm.records[i].x_r == ds.records[i].x_r);
        CHECK(perm.records[i].exposure == ds.records[i].exposure);

        // the new click must belong to one of the k nearest rows by x_r
        // (ties at the boundary distance admit any tied row)
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (j == i) continue;
            double s = 0;
            for (int f = 0; f < 3; ++f) {
                double diff = ds.records[i].x_r[f] - ds.records[j].x_r[f];
                s += diff * diff;
            }
            d.push_back({s, j});
        }
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        double kth = d[k - 1].first;
        bool found = false;
        for (const auto& [dist, j] : d)
            if (dist <= kth && ds.records[j].click == perm.records[i].click) found = true;
        CHECK(found);
    }
}

TEST_CASE("1-nn permutation on a signed grid keeps clicks within their sign") {
    // clicks alternate with the sign of a 1-d feature; with k=1 each click is
    // replaced by its nearest (same-sign) neighbour's click, a fixed point
    Dataset ds;
    ds.feature_dim = 1;
    for (double x : {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0})
        ds.records.push_back(rec("u", "i" + std::to_string(int(x)), {x}, 0.0, 1, x > 0 ? 1 : 0));
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Dataset perm = conditional_permutation(ds, 1, seed);
        for (std::size_t i = 0; i < ds.size(); ++i)
            CHECK(perm.records[i].click == ds.records[i].click);
    }
}

TEST_CASE("conditional permutation is deterministic per seed") {
    auto ds = testsup::random_dataset(60, 2, 0.6, 0.5, 12);
    auto a = conditional_permutation(ds, 5, 1);
    auto b = conditional_permutation(ds, 5, 1);
    auto c = conditional_permutation(ds, 5, 2);
    CHECK(a.records == b.records);
    CHECK(a.records != c.records);
    Dataset tiny = testsup::random_dataset(4, 2, 0.6, 0.5, 13);
    CHECK_THROWS_WITH_AS(conditional_permutation(tiny, 5, 1), doctest::Contains("TooFewRows"),
                         Error);
}

TEST_CASE("dv estimate is near zero for conditionally independent data") {
    auto ds = coin_world(4000, 0.0, 21);  // regime 1 everywhere: C independent of E
    auto est = estimate_cmi_dv(ds, fast_cfg(1));
    CHECK(est.value >= 0.0);
    CHECK(est.value < 0.06);
    CHECK(est.n_joint == ds.size());
    CHECK(est.n_marginal == ds.size());
}

TEST_CASE("dv estimate approaches the plugin oracle on coupled coins") {
    auto ds = coin_world(4000, 1.0, 22);  // C = E everywhere
    double oracle = plugin_cmi_discrete(count_table(ds));
    CHECK(oracle == doctest::Approx(std::log(2.0)).epsilon(0.01));
    auto est = estimate_cmi_dv(ds, fast_cfg(2));
    CHECK(est.value > oracle - 0.08);
    CHECK(est.value < oracle + 0.05);
    REQUIRE(est.train_curve.size() == std::size_t(fast_cfg(2).epochs));
    // the objective should end higher than it starts
    CHECK(est.train_curve.back() > est.train_curve.front());
}

TEST_CASE("dv estimate tracks a 50/50 conditional mixture") {
    auto ds = coin_world(6000, 0.5, 23);
    double oracle = plugin_cmi_discrete(count_table(ds));
    CHECK(oracle == doctest::Approx(0.5 * std::log(2.0)).epsilon(0.05));
    auto est = estimate_cmi_dv(ds, fast_cfg(3));
    CHECK(std::abs(est.value - oracle) < 0.06);
}

TEST_CASE("dv estimator is deterministic per seed") {
    auto ds = coin_world(1500, 0.5, 24);
    auto cfg = fast_cfg(7);
    cfg.epochs = 20;
    auto a = estimate_cmi_dv(ds, cfg);
    auto b = estimate_cmi_dv(ds, cfg);
    CHECK(a.value == b.value);
    CHECK(a.train_curve == b.train_curve);
    cfg.seed = 8;
    auto c = estimate_cmi_dv(ds, cfg);
    CHECK(a.value != c.value);
}

TEST_CASE("dv estimator can target the bias attribute instead of exposure") {
    // clicks tied to a binary x_nr given x_r
    rng::SeqRng g(31, 0);
    Dataset ds;
    ds.feature_dim = 1;
    for (int i = 0; i < 3000; ++i) {
        double xnr = g.uniform() < 0.5 ? 0.0 : 1.0;
        int c = xnr == 1.0 ? 1 : 0;
        ds.records.push_back(rec("u", "i" + std::to_string(i), {g.normal()}, xnr, 1, c));
    }
    auto est = estimate_cmi_dv(ds, fast_cfg(4), DependenceTarget::bias_attribute);
    CHECK(est.value > 0.5);  // true value ln 2

    // exposure is constant 1 here, so the exposure target carries nothing
    auto est0 = estimate_cmi_dv(ds, fast_cfg(5), DependenceTarget::exposure);
    CHECK(est0.value < 0.05);
}

TEST_CASE("dv estimator input validation") {
    auto ds = testsup::random_dataset(100, 2, 0.5, 0.5, 3);
    ds.records[3].click = 2;
    CHECK_THROWS_WITH_AS(estimate_cmi_dv(ds, fast_cfg(1)),
                         doctest::Contains("NonBinaryVariables"), Error);
    StatNetConfig bad;
    bad.ema_decay = 1.5;
    CHECK_THROWS_WITH_AS(bad.check(), doctest::Contains("BadConfig"), Error);
    StatNetConfig bad2;
    bad2.hidden_layers = {};
    CHECK_THROWS_WITH_AS(bad2.check(), doctest::Contains("BadConfig"), Error);
}
