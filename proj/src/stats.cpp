#include "abloop/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abloop/errors.hpp"

namespace abloop {

std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::kWeighted: return "weighted";
        case Method::kSplitting: return "splitting";
        case Method::kPooling: return "pooling";
        case Method::kSnapshot: return "snapshot";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (Method m : kAllMethods)
        if (method_name(m) == name) return m;
    throw ConfigError("methods", "unknown method '" + std::string(name) +
                                     "' (expected weighted, splitting, pooling or snapshot)");
}

double& MetricVector::operator[](Metric m) noexcept {
    switch (m) {
        case Metric::kShortProportion: return short_proportion;
        case Metric::kStayDuration: return stay_duration;
        case Metric::kFinishingRate: break;
    }
    return finishing_rate;
}

double MetricVector::operator[](Metric m) const noexcept {
    return const_cast<MetricVector&>(*this)[m];
}

namespace {

struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double var = 0.0;  // sample variance, 0 for n < 2
};

// Two passes: mean first, then centred squares.
template <class Pred>
Moments arm_moments(std::span<const Interaction> log, Metric metric, Pred in_arm) {
    Moments m;
    double sum = 0.0;
    for (const auto& row : log)
        if (in_arm(row)) {
            sum += metric_value(row, metric);
            ++m.n;
        }
    if (m.n == 0) return m;
    m.mean = sum / static_cast<double>(m.n);
    if (m.n < 2) return m;
    double ss = 0.0;
    for (const auto& row : log)
        if (in_arm(row)) {
            const double d = metric_value(row, metric) - m.mean;
            ss += d * d;
        }
    m.var = ss / static_cast<double>(m.n - 1);
    return m;
}

}  // namespace

Contrast naive_estimate(std::span<const Interaction> log, Metric metric) {
    const auto t = arm_moments(log, metric, [](const Interaction& r) { return r.z == 1; });
    const auto c = arm_moments(log, metric, [](const Interaction& r) { return r.z == 0; });
    if (t.n == 0 || c.n == 0)
        throw EstimationError("naive estimate needs both arms; treatment n=" + std::to_string(t.n) +
                              ", control n=" + std::to_string(c.n));
    Contrast out;
    out.treatment_mean = t.mean;
    out.control_mean = c.mean;
    out.estimate = t.mean - c.mean;
    out.se = std::sqrt(t.var / static_cast<double>(t.n) + c.var / static_cast<double>(c.n));
    return out;
}

double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ContractError("confidence level must lie in (0, 1)");
    // Solve P(|N(0,1)| > z) = 1 - level, i.e. erfc(z / sqrt 2) = 1 - level.
    const double tail = 1.0 - level;
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (std::erfc(mid / std::sqrt(2.0)) > tail) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

bool t_reject(double estimate, double se, double level) {
    if (se == 0.0) return estimate != 0.0;
    return std::abs(estimate) / se > normal_critical_value(level);
}

ExperimentValues experimentation_values(std::span<const Interaction> log, double alpha_treatment,
                                        double alpha_control) {
    double sum[2] = {0.0, 0.0};
    std::size_t n[2] = {0, 0};
    for (const auto& row : log) {
        const double alpha = row.z ? alpha_treatment : alpha_control;
        sum[row.z] += alpha * row.finished + row.stay_duration;
        ++n[row.z];
    }
    if (n[0] == 0 || n[1] == 0) throw EstimationError("experimentation values need both arms");
    return {sum[1] / static_cast<double>(n[1]), sum[0] / static_cast<double>(n[0])};
}

double weightnet_logloss_bits(std::span<const Interaction> log) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& row : log) {
        if (!row.has_weights()) continue;
        const double g = std::clamp(row.g_out, 1e-12, 1.0 - 1e-12);
        total -= row.z ? std::log2(g) : std::log2(1.0 - g);
        ++n;
    }
    if (n == 0) throw EstimationError("log carries no weighting-network outputs");
    return total / static_cast<double>(n);
}

MeanSem mean_sem(std::vector<double> values) {
    MeanSem out;
    if (values.empty()) return out;
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return out;
    std::vector<double> sq(values.size());
    std::transform(values.begin(), values.end(), sq.begin(), [&](double v) { return (v - out.mean) * (v - out.mean); });
    std::sort(sq.begin(), sq.end());
    out.std = std::sqrt(std::accumulate(sq.begin(), sq.end(), 0.0) / (n - 1.0));
    out.sem = out.std / std::sqrt(n);
    return out;
}

SummaryStats aggregate(std::span<const ReplicationResult> results, const MetricVector& gte, StudyMode mode) {
    if (results.size() < 2)
        throw EstimationError("aggregation needs at least 2 replications, got " + std::to_string(results.size()));
    SummaryStats s;
    s.method = results.front().method;
    s.replications = static_cast<int>(results.size());
    for (const auto& r : results)
        if (r.method != s.method) throw EstimationError("aggregate() received results from several methods");

    const double critical = normal_critical_value(0.95);
    for (Metric m : kAllMetrics) {
        std::vector<double> est, se;
        int rejects = 0;
        for (const auto& r : results) {
            est.push_back(r[m].estimate);
            se.push_back(r[m].se);
            const bool reject = r[m].se == 0.0 ? r[m].estimate != 0.0
                                                : std::abs(r[m].estimate) / r[m].se > critical;
            rejects += reject ? 1 : 0;
        }
        const auto e = mean_sem(est);
        auto& out = s.metrics[static_cast<std::size_t>(m)];
        out.mean_estimate = e.mean;
        out.bias = e.mean - (mode == StudyMode::kAA ? 0.0 : gte[m]);
        out.std = e.std;
        out.mean_se = mean_sem(se).mean;
        out.type1_rate = static_cast<double>(rejects) / static_cast<double>(results.size());
    }
    std::vector<double> tv, cv;
    for (const auto& r : results) {
        tv.push_back(r.treatment_value);
        cv.push_back(r.control_value);
    }
    const auto t = mean_sem(tv);
    const auto c = mean_sem(cv);
    s.mean_treatment_value = t.mean;
    s.sem_treatment_value = t.sem;
    s.mean_control_value = c.mean;
    s.sem_control_value = c.sem;
    return s;
}

}  // namespace abloop
