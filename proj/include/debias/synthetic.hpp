#pragma once

#include <cstdint>
#include <vector>

#include "debias/core_data.hpp"

namespace debias {

enum class XnrDist { uniform01, exponential };

struct SyntheticConfig {
    int n_users = 100;
    int n_items = 100;
    int feature_dim = 8;
    double bias_strength = 0.0;     // weight of x_nr in the exposure logit
    double relevance_strength = 2.0;
    double click_strength = 2.0;
    double exposure_budget = 0.3;   // target mean exposure
    XnrDist x_nr_dist = XnrDist::uniform01;
    std::uint64_t seed = 0;

    void check() const;
};

struct SyntheticData {
    Dataset mnar;        // exposed rows plus a 10% sample of unexposed rows
    Dataset mar_oracle;  // every pair, exposure forced to 1, clicks redrawn
    double beta0 = 0.0;  // calibrated exposure intercept
    std::vector<double> preference;  // unit preference vector u
};

// Samples the generative law: x_r ~ N(0, I), x_nr ~ x_nr_dist,
// E ~ Bern(sigmoid(a u.x_r/sqrt(d) + b (x_nr - mean) + beta0)),
// C = E * Bern(sigmoid(c a u.x_r/sqrt(d))), beta0 bisected to hit the
// exposure budget within 0.005.
SyntheticData generate(const SyntheticConfig& cfg);

struct TrueCmi {
    double value = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo evaluation of the conditional mutual information between the
// x_nr stratum and the click, given x_r, under the known generative law
// restricted to the mnar inclusion rule. Calibration oracle for the neural
// estimator.
TrueCmi true_cmi(const SyntheticConfig& cfg, long n_mc, int n_strata = 5);

}  // namespace debias
