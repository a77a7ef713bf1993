#pragma once

#include <vector>

#include "abloop/rng.hpp"

namespace abloop {

/// Ground-truth world: coefficient vectors of the true finishing-rate and
/// stay-duration models.
struct EnvParams {
    int feature_dim = 10;
    int n_candidates = 100;
    std::vector<double> beta_fr_short;
    std::vector<double> beta_fr_long;
    std::vector<double> beta_sd_short;
    std::vector<double> beta_sd_long;
    double fr_offset = 2.5;

    /// Default coefficients for `feature_dim` features and `n_candidates`
    /// videos per user. With feature_dim = 10 the ramps are
    /// [0, 0.1, ..., 0.9] and [1, 0.9, ..., 0.1].
    static EnvParams defaults(int feature_dim = 10, int n_candidates = 100);

    /// Throws ConfigError on inconsistent sizes or an odd candidate count.
    void validate() const;

    bool operator==(const EnvParams&) const = default;
};

struct Candidate {
    std::vector<double> features;
    bool is_short = true;
};

struct Outcome {
    int finished = 0;
    double stay_duration = 0.0;
};

double sigmoid(double z) noexcept;

/// Draws a fresh candidate pool: the first half short, the second half long,
/// features i.i.d. uniform on [0, 1] consumed in candidate-major order.
std::vector<Candidate> sample_candidates(Stream& rng, const EnvParams& params);
/// Same draws as above, refilling `out` in place.
void sample_candidates(Stream& rng, const EnvParams& params, std::vector<Candidate>& out);

/// Sigmoid(beta_fr . x - fr_offset) using the candidate's length class.
double true_fr(const Candidate& candidate, const EnvParams& params);

/// Mean of the stay-duration distribution, beta_sd . x.
double true_mean_sd(const Candidate& candidate, const EnvParams& params);

/// Draws finish ~ Bernoulli(true_fr) then stay ~ Exponential(mean = beta_sd . x),
/// always consuming exactly two uniforms. Throws std::domain_error when the
/// mean is not positive.
Outcome realize_outcome(Stream& rng, const Candidate& candidate, const EnvParams& params);

}  // namespace abloop
