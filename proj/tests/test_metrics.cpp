#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "debias/click_model.hpp"
#include "debias/metrics.hpp"
#include "debias/rng.hpp"
#include "support/builders.hpp"

using namespace debias;

namespace {

// O(P*N) pairwise AUC with the 0.5 tie convention.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

struct Confusion {
    double precision = 0, recall = 0, f1 = 0;
};

Confusion confusion_oracle(const std::vector<double>& s, const std::vector<int>& y, double t) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        bool pred = s[i] >= t;
        if (pred && y[i] == 1) ++tp;
        else if (pred && y[i] == 0) ++fp;
        else if (!pred && y[i] == 1) ++fn;
    }
    Confusion c;
    c.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    c.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    c.f1 = c.precision + c.recall > 0
               ? 2 * c.precision * c.recall / (c.precision + c.recall)
               : 0.0;
    return c;
}

// W1 for equal sizes is the mean absolute difference of sorted samples;
// replicating both samples to a common size reduces any case to that one.
double w1_oracle(std::vector<double> a, std::vector<double> b) {
    std::vector<double> aa, bb;
    for (double v : a) aa.insert(aa.end(), b.size(), v);
    for (double v : b) bb.insert(bb.end(), a.size(), v);
    std::sort(aa.begin(), aa.end());
    std::sort(bb.begin(), bb.end());
    double s = 0;
    for (std::size_t i = 0; i < aa.size(); ++i) s += std::abs(aa[i] - bb[i]);
    return s / static_cast<double>(aa.size());
}

}  // namespace

TEST_CASE("evaluate matches the pairwise and confusion oracles on random data") {
    rng::SeqRng g(123, 0);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t n = 2 + g.index(60);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse scores force plenty of ties
            s[i] = static_cast<double>(g.index(8)) / 8.0;
            y[i] = static_cast<int>(g.index(2));
            (y[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        auto rep = evaluate(s, y, 0.5);
        CHECK(rep.auc == doctest::Approx(auc_oracle(s, y)).epsilon(1e-12));
        auto c = confusion_oracle(s, y, 0.5);
        CHECK(rep.precision == doctest::Approx(c.precision).epsilon(1e-12));
        CHECK(rep.recall == doctest::Approx(c.recall).epsilon(1e-12));
        CHECK(rep.f1 == doctest::Approx(c.f1).epsilon(1e-12));
        CHECK(rep.n_rows == n);
        CHECK(rep.auc_defined);
    }
}

TEST_CASE("evaluate on a worked example") {
    std::vector<double> s{0.9, 0.8, 0.8, 0.3, 0.1};
    std::vector<int> y{1, 0, 1, 1, 0};
    auto rep = evaluate(s, y, 0.5);
    // positives {0.9, 0.8, 0.3}, negatives {0.8, 0.1}: 4.5 of 6 pairs
    CHECK(rep.auc == doctest::Approx(4.5 / 6.0));
    CHECK(rep.precision == doctest::Approx(2.0 / 3.0));
    CHECK(rep.recall == doctest::Approx(2.0 / 3.0));
    CHECK(rep.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("evaluate degenerate cases") {
    std::vector<double> s{0.9, 0.2};
    auto rep = evaluate(s, std::vector<int>{1, 1}, 0.5);
    CHECK_FALSE(rep.auc_defined);
    CHECK(rep.auc == 0.5);

    // no predicted positives: precision, recall, f1 all 0 without dividing by 0
    auto rep0 = evaluate(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 1}, 0.5);
    CHECK(rep0.precision == 0.0);
    CHECK(rep0.f1 == 0.0);

    CHECK_THROWS_WITH_AS(evaluate(s, std::vector<int>{1}, 0.5),
                         doctest::Contains("LengthMismatch"), Error);
    CHECK_THROWS_WITH_AS(evaluate(std::vector<double>{}, std::vector<int>{}, 0.5),
                         doctest::Contains("LengthMismatch"), Error);
    CHECK_THROWS_WITH_AS(evaluate(s, std::vector<int>{1, 2}, 0.5),
                         doctest::Contains("DegenerateLabels"), Error);
}

TEST_CASE("report serializes to json") {
    auto rep = evaluate(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}, 0.5);
    rep.scenario = "demo";
    auto j = rep.to_json();
    CHECK(j["auc"] == 1.0);
    CHECK(j["scenario"] == "demo");
    CHECK(j["n_rows"] == 2);
}

TEST_CASE("wasserstein hand values") {
    CHECK(wasserstein_1d({0.0, 1.0}, {0.5, 0.5}) == doctest::Approx(0.5));
    CHECK(wasserstein_1d({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
    CHECK(wasserstein_1d({0.0}, {3.0}) == doctest::Approx(3.0));
    // translation by a constant moves W1 by exactly that constant
    CHECK(wasserstein_1d({1, 2, 5}, {3, 4, 7}) == doctest::Approx(2.0));
    CHECK_THROWS_WITH_AS(wasserstein_1d({}, {1.0}), doctest::Contains("EmptySample"), Error);
}

TEST_CASE("wasserstein matches the replication oracle on unequal sizes") {
    rng::SeqRng g(7, 0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(1 + g.index(12)), b(1 + g.index(12));
        for (auto& v : a) v = g.normal();
        for (auto& v : b) v = g.normal();
        CHECK(wasserstein_1d(a, b) == doctest::Approx(w1_oracle(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("wasserstein satisfies the metric axioms") {
    rng::SeqRng g(99, 0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> a(1 + g.index(10)), b(1 + g.index(10)), c(1 + g.index(10));
        for (auto& v : a) v = g.normal();
        for (auto& v : b) v = g.normal();
        for (auto& v : c) v = g.normal();
        double ab = wasserstein_1d(a, b), ba = wasserstein_1d(b, a);
        double ac = wasserstein_1d(a, c), cb = wasserstein_1d(c, b);
        CHECK(ab >= 0.0);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(wasserstein_1d(a, a) == doctest::Approx(0.0));
        CHECK(ab <= ac + cb + 1e-9);
    }
}

TEST_CASE("conditional score gap compares bias-free and bias-aware models") {
    auto ds = testsup::random_dataset(300, 3, 1.0, 0.4, 5);
    // make clicks depend on x_nr so the two models genuinely differ
    rng::SeqRng g(31, 0);
    for (auto& r : ds.records) r.click = (r.x_nr + 0.3 * g.normal() > 0.6) ? 1 : 0;

    ClickModelConfig without;
    without.seed = 1;
    ClickModelConfig with = without;
    with.include_bias_factor = true;
    auto m0 = fit(ds, without);
    auto m1 = fit(ds, with);

    std::vector<std::size_t> lo, hi;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (ds.records[i].x_nr < 0.5 ? lo : hi).push_back(i);

    auto [model_gap, subset_gap] = conditional_score_gap(ds, m0, m1, lo, hi);

    auto p0 = predict_dataset(m0, ds);
    auto p1 = predict_dataset(m1, ds);
    CHECK(model_gap == doctest::Approx(wasserstein_1d(p0, p1)).epsilon(1e-12));
    std::vector<double> pa, pb;
    for (auto i : lo) pa.push_back(p0[i]);
    for (auto i : hi) pb.push_back(p0[i]);
    CHECK(subset_gap == doctest::Approx(wasserstein_1d(pa, pb)).epsilon(1e-12));

    // swapping the models violates the schema contract
    CHECK_THROWS_WITH_AS(conditional_score_gap(ds, m1, m0, lo, hi),
                         doctest::Contains("SchemaMismatch"), Error);
}
