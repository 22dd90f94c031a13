#pragma once

// Writes a Coat-layout fixture directory: train.ascii / test.ascii rating
// grids plus binary feature matrices under user_item_features/. Ratings are
// driven by a latent user-item affinity over the binary features; the train
// grid is observed MNAR (high ratings are much more likely to be logged),
// the test grid is a uniform random sample with MAR ratings.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "debias/rng.hpp"

namespace testsup {

struct CoatFixtureConfig {
    int n_users = 290;
    int n_items = 300;
    int user_dim = 14;
    int item_dim = 33;
    double train_rate = 0.08;  // target share of observed MNAR cells
    double test_rate = 0.0533;
    std::uint64_t seed = 0;
};

inline void write_coat_fixture(const std::filesystem::path& dir, const CoatFixtureConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "user_item_features");
    debias::rng::SeqRng g(cfg.seed, 1234);

    auto binary_matrix = [&](int rows, int cols) {
        std::vector<std::vector<int>> m(rows, std::vector<int>(cols));
        for (auto& row : m)
            for (auto& v : row) v = g.uniform() < 0.3 ? 1 : 0;
        return m;
    };
    auto user_feat = binary_matrix(cfg.n_users, cfg.user_dim);
    auto item_feat = binary_matrix(cfg.n_items, cfg.item_dim);

    // sparse random projection of the features onto a scalar affinity
    std::vector<double> wu(cfg.user_dim), wi(cfg.item_dim);
    for (auto& v : wu) v = g.normal();
    for (auto& v : wi) v = g.normal();

    auto affinity_of = [&](int u, int i) {
        double su = 0, si = 0;
        for (int j = 0; j < cfg.user_dim; ++j) su += wu[j] * user_feat[u][j];
        for (int j = 0; j < cfg.item_dim; ++j) si += wi[j] * item_feat[i][j];
        return 0.6 * su + 0.6 * si;
    };
    auto rating_of = [&](int u, int i, std::uint64_t lane) {
        double z = affinity_of(u, i) +
                   2.0 * debias::rng::CounterRng(cfg.seed, 55).normal(lane);
        // map the latent score to 1..5, skewed low: high ratings are rare in
        // the true (MAR) law, mirroring real rating data
        if (z < -1.5) return 1;
        if (z < 0.5) return 2;
        if (z < 2.5) return 3;
        if (z < 4.0) return 4;
        return 5;
    };

    // MNAR observation: high ratings far more likely to be logged, and the
    // logging is score-dependent within every rating class — hard negatives
    // (high affinity, low rating) and hard positives (low affinity, high
    // rating) are over-observed. Rating-level propensities cannot see this
    // within-class tilt, so it distorts ranking metrics in a way inverse
    // propensity weighting cannot undo.
    const double obs_by_rating[6] = {0, 0.7, 0.85, 1.0, 1.7, 2.0};
    auto obs_rate = [&](int u, int i, int r) {
        double coef = r <= 3 ? 0.12 : 0.0;
        return obs_by_rating[r] * std::exp(coef * affinity_of(u, i));
    };
    double mean_obs = 0;
    {
        long n = 0;
        for (int u = 0; u < cfg.n_users; u += 7)
            for (int i = 0; i < cfg.n_items; i += 7) {
                std::uint64_t lane = std::uint64_t(u) * cfg.n_items + i;
                mean_obs += obs_rate(u, i, rating_of(u, i, lane));
                ++n;
            }
        mean_obs /= double(n);
    }
    double scale = cfg.train_rate / mean_obs;

    std::vector<std::vector<int>> train(cfg.n_users, std::vector<int>(cfg.n_items, 0));
    std::vector<std::vector<int>> test(cfg.n_users, std::vector<int>(cfg.n_items, 0));
    debias::rng::CounterRng obs(cfg.seed, 88);
    debias::rng::CounterRng mar(cfg.seed, 89);
    for (int u = 0; u < cfg.n_users; ++u)
        for (int i = 0; i < cfg.n_items; ++i) {
            std::uint64_t lane = std::uint64_t(u) * cfg.n_items + i;
            int r = rating_of(u, i, lane);
            if (obs.uniform(lane) < scale * obs_rate(u, i, r)) train[u][i] = r;
            // MAR sample: independent cells, rating redrawn from the same law
            if (mar.uniform(lane) < cfg.test_rate)
                test[u][i] = rating_of(u, i, lane + 0x9e3779b9ULL);
        }

    auto dump = [&](const fs::path& p, const std::vector<std::vector<int>>& m) {
        std::ofstream out(p);
        for (const auto& row : m) {
            for (std::size_t j = 0; j < row.size(); ++j)
                out << (j ? " " : "") << row[j];
            out << "\n";
        }
    };
    dump(dir / "train.ascii", train);
    dump(dir / "test.ascii", test);
    dump(dir / "user_item_features" / "user_features.ascii", user_feat);
    dump(dir / "user_item_features" / "item_features.ascii", item_feat);
}

}  // namespace testsup
