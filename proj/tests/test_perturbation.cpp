#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "debias/perturbation.hpp"
#include "support/builders.hpp"

using namespace debias;
using testsup::rec;

namespace {

Dataset with_xnr(const std::vector<double>& xnr) {
    Dataset ds;
    ds.feature_dim = 1;
    for (std::size_t i = 0; i < xnr.size(); ++i)
        ds.records.push_back(rec("u" + std::to_string(i), "i" + std::to_string(i),
                                 {double(i)}, xnr[i], 1, 0));
    return ds;
}

}  // namespace

TEST_CASE("discretize splits 1..10 into equal-frequency pairs") {
    Dataset ds = with_xnr({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    auto b = discretize(ds, 5);
    CHECK(b.k == 5);
    CHECK_FALSE(b.degenerate);
    // linear-interpolation quantiles of 1..10 at 0.2/0.4/0.6/0.8
    REQUIRE(b.bin_edges.size() == 4);
    CHECK(b.bin_edges[0] == doctest::Approx(2.8));
    CHECK(b.bin_edges[1] == doctest::Approx(4.6));
    CHECK(b.bin_edges[2] == doctest::Approx(6.4));
    CHECK(b.bin_edges[3] == doctest::Approx(8.2));
    std::vector<int> expect = {0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
    CHECK(b.bin_index == expect);
}

TEST_CASE("discretize sends boundary ties to the lower bin") {
    // the median of eight values {1x4, 2x4} is 1.5; a value equal to an edge
    // must land below it
    Dataset ds = with_xnr({1, 1, 1, 1, 1.5, 2, 2, 2});
    auto b = discretize(ds, 2);
    REQUIRE(b.bin_edges.size() == 1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int want = ds.records[i].x_nr <= b.bin_edges[0] ? 0 : 1;
        CHECK(b.bin_index[i] == want);
    }
}

TEST_CASE("discretize properties on random data") {
    auto ds = testsup::random_dataset(500, 1, 1.0, 0.3, 9);
    for (int k : {2, 3, 5, 10}) {
        auto b = discretize(ds, k);
        CHECK(b.k == k);
        CHECK(b.requested_k == k);
        auto counts = b.counts();
        // equal-frequency up to rounding on distinct values
        for (auto c : counts) CHECK(c >= ds.size() / (2 * std::size_t(k)));
        // assignment is monotone in the attribute and consistent for ties
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t j = 0; j < ds.size(); ++j) {
                if (ds.records[i].x_nr < ds.records[j].x_nr)
                    CHECK(b.bin_index[i] <= b.bin_index[j]);
                if (ds.records[i].x_nr == ds.records[j].x_nr)
                    CHECK(b.bin_index[i] == b.bin_index[j]);
            }
    }
}

TEST_CASE("discretize collapses when there are too few distinct values") {
    Dataset ds = with_xnr({3, 3, 3, 7, 7, 3, 7, 3});
    auto b = discretize(ds, 5);
    CHECK(b.degenerate);
    CHECK(b.requested_k == 5);
    CHECK(b.k == 2);
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(b.bin_index[i] == (ds.records[i].x_nr == 3 ? 0 : 1));

    Dataset flat = with_xnr({4, 4, 4, 4});
    auto bf = discretize(flat, 3);
    CHECK(bf.degenerate);
    CHECK(bf.k == 1);
}

TEST_CASE("discretize on categorical attributes requires k == label count") {
    Dataset ds = with_xnr({0, 1, 2, 1, 0});
    ds.x_nr_kind = XnrKind::categorical;
    ds.x_nr_labels = {"a", "b", "c"};
    auto b = discretize(ds, 3);
    CHECK(b.k == 3);
    CHECK(b.bin_index == std::vector<int>{0, 1, 2, 1, 0});
    CHECK_THROWS_WITH_AS(discretize(ds, 2), doctest::Contains("KMismatch"), Error);
}

TEST_CASE("discretize input validation") {
    Dataset empty;
    empty.feature_dim = 1;
    CHECK_THROWS_WITH_AS(discretize(empty, 2), doctest::Contains("EmptyDataset"), Error);
    Dataset ds = with_xnr({1, 2});
    CHECK_THROWS_WITH_AS(discretize(ds, 0), doctest::Contains("KMismatch"), Error);
}

TEST_CASE("weight vector validation") {
    WeightVector empty{{}};
    WeightVector negative{{0.5, -0.1}};
    WeightVector all_zero{{0.0, 0.0}};
    WeightVector ok{{0.0, 1.0}};
    CHECK_THROWS_WITH_AS(empty.check(), doctest::Contains("BadWeights"), Error);
    CHECK_THROWS_WITH_AS(negative.check(), doctest::Contains("BadWeights"), Error);
    CHECK_THROWS_WITH_AS(all_zero.check(), doctest::Contains("BadWeights"), Error);
    CHECK_NOTHROW(ok.check());
}

TEST_CASE("effective sampling distribution matches the closed form") {
    BinAssignment b;
    b.k = 3;
    b.bin_index = {0, 0, 0, 1, 2, 2};  // counts 3, 1, 2
    WeightVector w{{1.0, 2.0, 0.5}};
    auto q = effective_sampling_distribution(b, w);
    double z = 3 * 1.0 + 1 * 2.0 + 2 * 0.5;
    REQUIRE(q.size() == 3);
    CHECK(q[0] == doctest::Approx(3.0 / z));
    CHECK(q[1] == doctest::Approx(2.0 / z));
    CHECK(q[2] == doctest::Approx(1.0 / z));

    WeightVector zero_cover{{0.0, 0.0, 1.0}};
    BinAssignment only01;
    only01.k = 3;
    only01.bin_index = {0, 1, 0};
    CHECK_THROWS_WITH_AS(effective_sampling_distribution(only01, zero_cover),
                         doctest::Contains("AllZeroWeightCoverage"), Error);
}

TEST_CASE("full resampling draws bins with the effective distribution") {
    auto ds = testsup::random_dataset(3000, 1, 1.0, 0.3, 21);
    auto bins = discretize(ds, 3);
    WeightVector w{{0.2, 1.0, 3.0}};
    PerturbationConfig cfg;
    cfg.mode = PerturbMode::full;
    cfg.seed = 5;
    Dataset out = resample(ds, bins, w, cfg);
    REQUIRE(out.size() == ds.size());

    auto q = effective_sampling_distribution(bins, w);
    std::map<std::pair<std::string, std::string>, int> bin_of;
    for (std::size_t i = 0; i < ds.size(); ++i)
        bin_of[{ds.records[i].user_id, ds.records[i].item_id}] = bins.bin_index[i];
    std::vector<double> freq(3, 0.0);
    for (const auto& r : out.records) freq[bin_of.at({r.user_id, r.item_id})] += 1.0;
    for (int k = 0; k < 3; ++k) {
        double se = std::sqrt(q[k] * (1 - q[k]) * double(ds.size()));
        CHECK(std::abs(freq[k] - q[k] * double(ds.size())) < 5 * se + 1);
    }
}

TEST_CASE("resampling is scale invariant and deterministic") {
    auto ds = testsup::random_dataset(400, 1, 1.0, 0.3, 2);
    auto bins = discretize(ds, 4);
    PerturbationConfig cfg;
    cfg.mode = PerturbMode::full;
    cfg.seed = 11;
    WeightVector w{{0.25, 0.5, 0.75, 1.0}};
    WeightVector w2{{0.5, 1.0, 1.5, 2.0}};  // exact power-of-two multiple
    Dataset a = resample(ds, bins, w, cfg);
    Dataset b = resample(ds, bins, w2, cfg);
    Dataset c = resample(ds, bins, w, cfg);
    CHECK(a.records == b.records);
    CHECK(a.records == c.records);
    cfg.seed = 12;
    Dataset d = resample(ds, bins, w, cfg);
    CHECK(a.records != d.records);
}

TEST_CASE("uniform weights in full mode still resample with replacement") {
    auto ds = testsup::random_dataset(500, 1, 1.0, 0.3, 4);
    auto bins = discretize(ds, 5);
    PerturbationConfig cfg;
    cfg.mode = PerturbMode::full;
    cfg.seed = 3;
    Dataset out = resample(ds, bins, WeightVector{{1, 1, 1, 1, 1}}, cfg);
    std::set<std::string> distinct;
    for (const auto& r : out.records) distinct.insert(r.item_id);
    // a bootstrap keeps ~63% distinct rows
    CHECK(distinct.size() < ds.size());
    CHECK(distinct.size() > ds.size() / 2);
}

TEST_CASE("partial resampling keeps most rows in their original order") {
    auto ds = testsup::random_dataset(200, 1, 1.0, 0.3, 8);
    auto bins = discretize(ds, 4);
    PerturbationConfig cfg;
    cfg.mode = PerturbMode::partial;
    cfg.perturb_fraction = 0.1;
    cfg.seed = 6;
    Dataset out = resample(ds, bins, WeightVector{{1, 1, 1, 4}}, cfg);
    REQUIRE(out.size() == ds.size());
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(0.9 * static_cast<double>(ds.size())));

    // the kept block is a subsequence of the input in the input's order
    std::size_t pos = 0;
    for (std::size_t i = 0; i < keep; ++i) {
        while (pos < ds.size() && !(ds.records[pos] == out.records[i])) ++pos;
        REQUIRE(pos < ds.size());
        ++pos;
    }
}

TEST_CASE("partial resampling with fraction 0 is the identity") {
    auto ds = testsup::random_dataset(64, 1, 1.0, 0.3, 14);
    auto bins = discretize(ds, 2);
    PerturbationConfig cfg;
    cfg.mode = PerturbMode::partial;
    cfg.perturb_fraction = 0.0;
    Dataset out = resample(ds, bins, WeightVector{{1, 3}}, cfg);
    CHECK(out.records == ds.records);
}

TEST_CASE("resample rejects malformed inputs") {
    auto ds = testsup::random_dataset(20, 1, 1.0, 0.3, 1);
    auto bins = discretize(ds, 2);
    PerturbationConfig cfg;
    CHECK_THROWS_WITH_AS(resample(ds, bins, WeightVector{{1, 2, 3}}, cfg),
                         doctest::Contains("KMismatch"), Error);
    cfg.perturb_fraction = 1.5;
    CHECK_THROWS_WITH_AS(resample(ds, bins, WeightVector{{1, 2}}, cfg),
                         doctest::Contains("BadConfig"), Error);
}
