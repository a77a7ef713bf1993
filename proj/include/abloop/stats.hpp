#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abloop/interaction.hpp"

namespace abloop {

enum class Method { kWeighted, kSplitting, kPooling, kSnapshot };

inline constexpr std::array<Method, 4> kAllMethods = {Method::kWeighted, Method::kSplitting, Method::kPooling,
                                                      Method::kSnapshot};

std::string_view method_name(Method m) noexcept;
/// Throws ConfigError("methods", ...) for an unknown name.
Method parse_method(std::string_view name);

/// One value per metric, indexed in kAllMetrics order.
struct MetricVector {
    double short_proportion = 0.0;
    double stay_duration = 0.0;
    double finishing_rate = 0.0;

    double& operator[](Metric m) noexcept;
    double operator[](Metric m) const noexcept;
    bool operator==(const MetricVector&) const = default;
};

struct Contrast {
    double treatment_mean = 0.0;
    double control_mean = 0.0;
    double estimate = 0.0;  // treatment_mean - control_mean
    double se = 0.0;
};

struct ReplicationResult {
    Method method = Method::kWeighted;
    int rep = 0;
    std::uint64_t seed = 0;
    std::array<Contrast, 3> metrics{};  // kAllMetrics order
    double treatment_value = 0.0;
    double control_value = 0.0;
    std::optional<double> weightnet_logloss_bits;

    const Contrast& operator[](Metric m) const noexcept { return metrics[static_cast<std::size_t>(m)]; }
};

/// Difference of arm means with the two-sample standard error
/// sqrt(s1^2 / n1 + s0^2 / n0) (sample variances, n - 1). Throws
/// EstimationError when an arm is empty.
Contrast naive_estimate(std::span<const Interaction> log, Metric metric);

/// Two-sided normal test at the given level. se == 0 rejects iff estimate != 0.
bool t_reject(double estimate, double se, double level = 0.95);

/// Two-sided standard normal critical value for a confidence level.
double normal_critical_value(double level);

struct ExperimentValues {
    double treatment_value = 0.0;
    double control_value = 0.0;
};

/// Per-arm mean of alpha * finished + stay_duration, each arm with its own alpha.
ExperimentValues experimentation_values(std::span<const Interaction> log, double alpha_treatment,
                                        double alpha_control);

/// Mean base-2 cross-entropy of the logged propensities against assignments,
/// over rows that carry one. Propensities are clamped to [1e-12, 1 - 1e-12].
/// Throws EstimationError if no row carries a propensity.
double weightnet_logloss_bits(std::span<const Interaction> log);

enum class StudyMode { kAB, kAA };

struct MetricSummary {
    double bias = 0.0;
    double std = 0.0;
    double mean_se = 0.0;
    double type1_rate = 0.0;  // rejection frequency at 0.95
    double mean_estimate = 0.0;
};

struct SummaryStats {
    Method method = Method::kWeighted;
    int replications = 0;
    std::array<MetricSummary, 3> metrics{};  // kAllMetrics order
    double mean_treatment_value = 0.0;
    double sem_treatment_value = 0.0;
    double mean_control_value = 0.0;
    double sem_control_value = 0.0;

    const MetricSummary& operator[](Metric m) const noexcept { return metrics[static_cast<std::size_t>(m)]; }
};

/// Cross-replication summary for one method. In AA mode the reference effect
/// is zero regardless of `gte`. Sums run over sorted values, so the result
/// does not depend on input order. Throws EstimationError for fewer than two
/// results or mixed methods.
SummaryStats aggregate(std::span<const ReplicationResult> results, const MetricVector& gte, StudyMode mode);

/// Mean and standard error of the mean of a sample (order-independent).
struct MeanSem {
    double mean = 0.0;
    double sem = 0.0;
    double std = 0.0;
};
MeanSem mean_sem(std::vector<double> values);

}  // namespace abloop
