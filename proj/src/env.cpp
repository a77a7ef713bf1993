#include "abloop/env.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "abloop/errors.hpp"

namespace abloop {

EnvParams EnvParams::defaults(int feature_dim, int n_candidates) {
    if (feature_dim < 1) throw ConfigError("feature_dim", "feature_dim must be >= 1");
    EnvParams p;
    p.feature_dim = feature_dim;
    p.n_candidates = n_candidates;
    const auto d = static_cast<double>(feature_dim);
    for (int i = 0; i < feature_dim; ++i) {
        const double up = i / d;
        const double down = (feature_dim - i) / d;
        p.beta_fr_short.push_back(0.9 * up);
        p.beta_fr_long.push_back(0.6 * up);
        p.beta_sd_short.push_back(down);
        p.beta_sd_long.push_back(1.5 * down);
    }
    p.validate();
    return p;
}

void EnvParams::validate() const {
    if (feature_dim < 1) throw ConfigError("feature_dim", "feature_dim must be >= 1");
    if (n_candidates < 2 || n_candidates % 2 != 0)
        throw ConfigError("n_candidates", "n_candidates must be an even number >= 2");
    const auto d = static_cast<std::size_t>(feature_dim);
    if (beta_fr_short.size() != d || beta_fr_long.size() != d || beta_sd_short.size() != d ||
        beta_sd_long.size() != d)
        throw ConfigError("feature_dim", "coefficient vectors must have feature_dim entries");
}

double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<Candidate> sample_candidates(Stream& rng, const EnvParams& params) {
    std::vector<Candidate> out;
    sample_candidates(rng, params, out);
    return out;
}

void sample_candidates(Stream& rng, const EnvParams& params, std::vector<Candidate>& out) {
    const int n = params.n_candidates;
    out.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& c = out[static_cast<std::size_t>(i)];
        c.is_short = i < n / 2;
        c.features.resize(static_cast<std::size_t>(params.feature_dim));
        for (auto& f : c.features) f = rng.uniform();
    }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

double true_fr(const Candidate& candidate, const EnvParams& params) {
    const auto& beta = candidate.is_short ? params.beta_fr_short : params.beta_fr_long;
    return sigmoid(dot(beta, candidate.features) - params.fr_offset);
}

double true_mean_sd(const Candidate& candidate, const EnvParams& params) {
    const auto& beta = candidate.is_short ? params.beta_sd_short : params.beta_sd_long;
    return dot(beta, candidate.features);
}

Outcome realize_outcome(Stream& rng, const Candidate& candidate, const EnvParams& params) {
    const double fr = true_fr(candidate, params);
    const double mean = true_mean_sd(candidate, params);
    const double u_finish = rng.uniform();
    const double u_stay = rng.uniform_open_zero();
    if (!(mean > 0.0))
        throw std::domain_error("stay-duration mean must be positive, got " + std::to_string(mean));
    return Outcome{u_finish < fr ? 1 : 0, -mean * std::log(u_stay)};
}

}  // namespace abloop
