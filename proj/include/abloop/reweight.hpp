#pragma once

#include <vector>

#include "abloop/rng.hpp"

namespace abloop {

/// Finite sample space of joint (x, y) atoms with treatment and control laws.
///
/// The experiment law is D_E = p D_T + (1 - p) D_C, and the joint law of
/// (D_E, Z) puts mass p D_T(a) on (a, 1) and (1 - p) D_C(a) on (a, 0).
struct DiscreteSpace {
    std::vector<double> prob_treatment;
    std::vector<double> prob_control;
    double p = 0.5;

    std::size_t atoms() const noexcept { return prob_treatment.size(); }
    /// Throws ContractError unless both laws are nonnegative, sum to 1 within
    /// 1e-12, have equal length, and 0 < p < 1.
    void validate() const;

    /// Random space with `n_atoms` atoms and p drawn from [p_lo, p_hi].
    /// Roughly one atom in five has zero mass under one of the two laws.
    static DiscreteSpace random(Stream& rng, std::size_t n_atoms, double p_lo = 0.05, double p_hi = 0.95);
};

/// Per-atom weights for each assignment value.
struct WeightTable {
    std::vector<double> when_control;    // W(a, z = 0)
    std::vector<double> when_treatment;  // W(a, z = 1)

    static WeightTable constant(std::size_t n, double w) { return {std::vector<double>(n, w), std::vector<double>(n, w)}; }
};

std::vector<double> experiment_distribution(const DiscreteSpace& space);

/// E[Z | D_E = a] per atom. Throws EstimationError if an atom has no mass
/// under D_E.
std::vector<double> treatment_propensity(const DiscreteSpace& space);

struct OracleWeights {
    WeightTable treatment;
    WeightTable control;
};

/// W_T(a) = E[Z | a] / p and W_C(a) = (1 - E[Z | a]) / (1 - p), constant in z.
OracleWeights oracle_weights(const DiscreteSpace& space);

/// Data-splitting weights: z / p for treatment, (1 - z) / (1 - p) for control.
OracleWeights splitting_weights(const DiscreteSpace& space);

/// E[W] under the joint law of (D_E, Z).
double weight_mean(const DiscreteSpace& space, const WeightTable& table);

/// Weighted law: atom a receives sum_z P(D_E = a, Z = z) W(a, z).
std::vector<double> apply_weights(const DiscreteSpace& space, const WeightTable& table);

/// E[W^2] under the joint law of (D_E, Z).
double second_moment(const DiscreteSpace& space, const WeightTable& table);

/// Treatment weights W_T(a) + c_a (z - E[Z | a]); these keep the weighted law
/// equal to D_T for any c.
WeightTable perturb_treatment_weights(const DiscreteSpace& space, const std::vector<double>& c);

/// Largest c_a magnitude interval keeping the perturbed weight nonnegative:
/// returns (lo, hi) with lo <= 0 <= hi.
std::pair<double, double> admissible_range(double propensity, double p);

struct OptimalityReport {
    double max_violation = 0.0;  ///< max of E[W_T^2] - E[W_c^2]; <= 0 when W_T is optimal
    double min_gap_nonzero = 0.0;  ///< smallest E[W_c^2] - E[W_T^2] over nonzero perturbations
    int nonzero_perturbations = 0;
};

/// Draws `n_perturbations` random admissible perturbations of the treatment
/// oracle weights and compares second moments against the oracle.
OptimalityReport verify_optimality(const DiscreteSpace& space, int n_perturbations, Stream& rng);

struct OracleBatteryReport {
    int spaces = 0;
    int perturbations_per_space = 0;
    double max_unbiasedness_deviation = 0.0;
    double max_normalization_error = 0.0;
    double max_optimality_violation = 0.0;
    double min_optimality_gap = 0.0;
};

/// Seeded battery over random spaces with up to `max_atoms` atoms.
OracleBatteryReport run_oracle_battery(std::uint64_t seed, int n_spaces, int n_perturbations,
                                       std::size_t max_atoms = 50);

}  // namespace abloop
