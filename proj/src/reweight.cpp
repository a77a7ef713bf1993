#include "abloop/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "abloop/errors.hpp"

namespace abloop {

void DiscreteSpace::validate() const {
    if (prob_treatment.size() != prob_control.size() || prob_treatment.empty())
        throw ContractError("treatment and control laws must have the same nonzero length");
    if (!(p > 0.0 && p < 1.0)) throw ContractError("treatment probability must lie in (0, 1)");
    for (const auto* law : {&prob_treatment, &prob_control}) {
        double sum = 0.0;
        for (double v : *law) {
            if (!(v >= 0.0)) throw ContractError("probabilities must be nonnegative");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ContractError("probabilities must sum to 1");
    }
}

namespace {

void normalize(std::vector<double>& v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= s;
}

}  // namespace

DiscreteSpace DiscreteSpace::random(Stream& rng, std::size_t n_atoms, double p_lo, double p_hi) {
    DiscreteSpace s;
    s.p = p_lo + (p_hi - p_lo) * rng.uniform();
    s.prob_treatment.resize(n_atoms);
    s.prob_control.resize(n_atoms);
    for (std::size_t a = 0; a < n_atoms; ++a) {
        double t = rng.exponential_mean(1.0);
        double c = rng.exponential_mean(1.0);
        const double u = rng.uniform();
        if (n_atoms > 1 && u < 0.1) t = 0.0;
        else if (n_atoms > 1 && u < 0.2) c = 0.0;
        s.prob_treatment[a] = t;
        s.prob_control[a] = c;
    }
    // Keep at least one atom live under each law.
    if (std::all_of(s.prob_treatment.begin(), s.prob_treatment.end(), [](double v) { return v == 0.0; }))
        s.prob_treatment[0] = 1.0;
    if (std::all_of(s.prob_control.begin(), s.prob_control.end(), [](double v) { return v == 0.0; }))
        s.prob_control[0] = 1.0;
    normalize(s.prob_treatment);
    normalize(s.prob_control);
    return s;
}

std::vector<double> experiment_distribution(const DiscreteSpace& space) {
    std::vector<double> out(space.atoms());
    for (std::size_t a = 0; a < out.size(); ++a)
        out[a] = space.p * space.prob_treatment[a] + (1.0 - space.p) * space.prob_control[a];
    return out;
}

std::vector<double> treatment_propensity(const DiscreteSpace& space) {
    const auto mix = experiment_distribution(space);
    std::vector<double> e(mix.size());
    for (std::size_t a = 0; a < e.size(); ++a) {
        if (!(mix[a] > 0.0))
            throw EstimationError("atom " + std::to_string(a) + " has zero experiment mass; E[Z|a] undefined");
        e[a] = space.p * space.prob_treatment[a] / mix[a];
    }
    return e;
}

OracleWeights oracle_weights(const DiscreteSpace& space) {
    const auto e = treatment_propensity(space);
    const std::size_t n = e.size();
    OracleWeights w{WeightTable::constant(n, 0.0), WeightTable::constant(n, 0.0)};
    for (std::size_t a = 0; a < n; ++a) {
        const double wt = e[a] / space.p;
        const double wc = (1.0 - e[a]) / (1.0 - space.p);
        w.treatment.when_control[a] = w.treatment.when_treatment[a] = wt;
        w.control.when_control[a] = w.control.when_treatment[a] = wc;
    }
    return w;
}

OracleWeights splitting_weights(const DiscreteSpace& space) {
    const std::size_t n = space.atoms();
    return {{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0 / space.p)},
            {std::vector<double>(n, 1.0 / (1.0 - space.p)), std::vector<double>(n, 0.0)}};
}

double weight_mean(const DiscreteSpace& space, const WeightTable& table) {
    double s = 0.0;
    for (std::size_t a = 0; a < space.atoms(); ++a)
        s += space.p * space.prob_treatment[a] * table.when_treatment[a] +
             (1.0 - space.p) * space.prob_control[a] * table.when_control[a];
    return s;
}

std::vector<double> apply_weights(const DiscreteSpace& space, const WeightTable& table) {
    std::vector<double> out(space.atoms());
    for (std::size_t a = 0; a < out.size(); ++a)
        out[a] = space.p * space.prob_treatment[a] * table.when_treatment[a] +
                 (1.0 - space.p) * space.prob_control[a] * table.when_control[a];
    return out;
}

double second_moment(const DiscreteSpace& space, const WeightTable& table) {
    double s = 0.0;
    for (std::size_t a = 0; a < space.atoms(); ++a) {
        const double w1 = table.when_treatment[a];
        const double w0 = table.when_control[a];
        s += space.p * space.prob_treatment[a] * w1 * w1 +
             (1.0 - space.p) * space.prob_control[a] * w0 * w0;
    }
    return s;
}

WeightTable perturb_treatment_weights(const DiscreteSpace& space, const std::vector<double>& c) {
    if (c.size() != space.atoms()) throw ContractError("one perturbation coefficient per atom required");
    const auto e = treatment_propensity(space);
    auto table = oracle_weights(space).treatment;
    for (std::size_t a = 0; a < c.size(); ++a) {
        table.when_treatment[a] += c[a] * (1.0 - e[a]);
        table.when_control[a] += c[a] * (0.0 - e[a]);
    }
    return table;
}

std::pair<double, double> admissible_range(double propensity, double p) {
    // W_T + c (1 - e) >= 0 and W_T - c e >= 0 with W_T = e / p.
    const double wt = propensity / p;
    const double lo = propensity < 1.0 ? -wt / (1.0 - propensity) : 0.0;
    const double hi = propensity > 0.0 ? wt / propensity : 0.0;
    return {lo, hi};
}

OptimalityReport verify_optimality(const DiscreteSpace& space, int n_perturbations, Stream& rng) {
    space.validate();
    const auto e = treatment_propensity(space);
    const double base = second_moment(space, oracle_weights(space).treatment);
    OptimalityReport report;
    report.max_violation = -std::numeric_limits<double>::infinity();
    report.min_gap_nonzero = std::numeric_limits<double>::infinity();
    std::vector<double> c(space.atoms());
    for (int k = 0; k < n_perturbations; ++k) {
        bool nonzero = false;
        for (std::size_t a = 0; a < c.size(); ++a) {
            const auto [lo, hi] = admissible_range(e[a], space.p);
            const double u = rng.uniform();
            const double scale = 0.05 + 0.9 * rng.uniform();
            c[a] = (u < 0.5 ? lo : hi) * scale;
            // A perturbation only matters where Z is not degenerate given a.
            if (c[a] != 0.0 && e[a] > 0.0 && e[a] < 1.0) nonzero = true;
        }
        const double moment = second_moment(space, perturb_treatment_weights(space, c));
        report.max_violation = std::max(report.max_violation, base - moment);
        if (nonzero) {
            report.min_gap_nonzero = std::min(report.min_gap_nonzero, moment - base);
            ++report.nonzero_perturbations;
        }
    }
    if (n_perturbations == 0) report.max_violation = 0.0;
    return report;
}

OracleBatteryReport run_oracle_battery(std::uint64_t seed, int n_spaces, int n_perturbations,
                                       std::size_t max_atoms) {
    Stream rng(split_seed(seed, "oracle-battery"));
    OracleBatteryReport r;
    r.spaces = n_spaces;
    r.perturbations_per_space = n_perturbations;
    r.max_optimality_violation = -std::numeric_limits<double>::infinity();
    r.min_optimality_gap = std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_spaces; ++s) {
        const auto n_atoms = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_atoms));
        const auto space = DiscreteSpace::random(rng, std::min(n_atoms, max_atoms));
        const auto w = oracle_weights(space);
        const auto wt = apply_weights(space, w.treatment);
        const auto wc = apply_weights(space, w.control);
        for (std::size_t a = 0; a < space.atoms(); ++a) {
            r.max_unbiasedness_deviation = std::max({r.max_unbiasedness_deviation,
                                               std::abs(wt[a] - space.prob_treatment[a]),
                                               std::abs(wc[a] - space.prob_control[a])});
        }
        r.max_normalization_error = std::max({r.max_normalization_error,
                                              std::abs(weight_mean(space, w.treatment) - 1.0),
                                              std::abs(weight_mean(space, w.control) - 1.0)});
        const auto t1 = verify_optimality(space, n_perturbations, rng);
        r.max_optimality_violation = std::max(r.max_optimality_violation, t1.max_violation);
        if (t1.nonzero_perturbations > 0) r.min_optimality_gap = std::min(r.min_optimality_gap, t1.min_gap_nonzero);
    }
    return r;
}

}  // namespace abloop
