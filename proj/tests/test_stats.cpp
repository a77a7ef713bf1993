#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "abloop/errors.hpp"
#include "abloop/rng.hpp"
#include "abloop/stats.hpp"

using namespace abloop;

namespace {

std::vector<Interaction> log_from(const std::vector<int>& z, const std::vector<double>& sd) {
    std::vector<Interaction> log;
    for (std::size_t i = 0; i < z.size(); ++i) {
        Interaction r;
        r.z = static_cast<std::uint8_t>(z[i]);
        r.stay_duration = sd[i];
        log.push_back(r);
    }
    return log;
}

ReplicationResult with_estimate(double est, double se = 0.1) {
    ReplicationResult r;
    r.method = Method::kPooling;
    for (auto& c : r.metrics) {
        c.estimate = est;
        c.se = se;
    }
    return r;
}

}  // namespace

TEST_CASE("naive estimate") {
    const auto log = log_from({1, 1, 0, 0}, {3, 1, 2, 0});
    const auto c = naive_estimate(log, Metric::kStayDuration);
    CHECK(c.treatment_mean == 2.0);
    CHECK(c.control_mean == 1.0);
    CHECK(c.estimate == 1.0);
    // var = 2 in each arm, n = 2: se = sqrt(2/2 + 2/2)
    CHECK(c.se == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

    const auto flat_log = log_from({1, 0, 1, 0}, {4, 4, 4, 4});
    CHECK(naive_estimate(flat_log, Metric::kStayDuration).estimate == 0.0);
    CHECK(naive_estimate(flat_log, Metric::kStayDuration).se == 0.0);

    CHECK_THROWS_AS(naive_estimate(log_from({1, 1}, {1, 2}), Metric::kStayDuration), EstimationError);
}

TEST_CASE("standard error for unit variances and 100 per arm") {
    // Alternating +-1 around 0 has sample variance 100/99; scale to exactly 1.
    std::vector<int> z;
    std::vector<double> v;
    const double a = std::sqrt(99.0 / 100.0);
    for (int i = 0; i < 200; ++i) {
        z.push_back(i < 100);
        v.push_back((i % 2 ? a : -a));
    }
    const auto c = naive_estimate(log_from(z, v), Metric::kStayDuration);
    CHECK(c.se == doctest::Approx(0.1414213562373095).epsilon(1e-12));
}

TEST_CASE("standard error matches a direct two-pass computation") {
    Stream rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> z;
        std::vector<double> v;
        for (int i = 0; i < 300; ++i) {
            z.push_back(rng.uniform() < 0.4);
            v.push_back(rng.exponential_mean(3.0));
        }
        double s[2] = {0, 0}, ss[2] = {0, 0};
        int n[2] = {0, 0};
        for (int i = 0; i < 300; ++i) {
            s[z[i]] += v[i];
            ++n[z[i]];
        }
        const double m[2] = {s[0] / n[0], s[1] / n[1]};
        for (int i = 0; i < 300; ++i) ss[z[i]] += (v[i] - m[z[i]]) * (v[i] - m[z[i]]);
        const double se = std::sqrt(ss[1] / (n[1] - 1) / n[1] + ss[0] / (n[0] - 1) / n[0]);
        const auto log = log_from(z, v);
        const auto c = naive_estimate(log, Metric::kStayDuration);
        CHECK(std::abs(c.se - se) <= 1e-12);

        // Scaling the metric scales estimate and se; the test decision is unchanged.
        auto scaled = log;
        for (auto& r : scaled) r.stay_duration *= 7.5;
        const auto cs = naive_estimate(scaled, Metric::kStayDuration);
        CHECK(cs.estimate == doctest::Approx(7.5 * c.estimate).epsilon(1e-12));
        CHECK(cs.se == doctest::Approx(7.5 * c.se).epsilon(1e-12));
        CHECK(t_reject(cs.estimate, cs.se) == t_reject(c.estimate, c.se));
    }
}

TEST_CASE("t_reject") {
    CHECK(normal_critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(t_reject(0.3, 0.1));
    CHECK_FALSE(t_reject(0.1, 0.1));
    CHECK_FALSE(t_reject(0.0, 0.5));
    CHECK_FALSE(t_reject(0.0, 0.0));
    CHECK(t_reject(0.01, 0.0));
}

TEST_CASE("experimentation values") {
    std::vector<Interaction> log(2);
    log[0].z = 1;
    log[0].finished = 1;
    log[0].stay_duration = 5.0;
    log[1].z = 0;
    log[1].stay_duration = 2.5;
    const auto v = experimentation_values(log, 10.0, 3.0);
    CHECK(v.treatment_value == 15.0);
    CHECK(v.control_value == 2.5);  // no finish: value is the stay
    log[0].z = 0;
    CHECK_THROWS_AS(experimentation_values(log, 10.0, 3.0), EstimationError);
}

TEST_CASE("weighting-network log loss") {
    std::vector<Interaction> log(4);
    for (std::size_t i = 0; i < log.size(); ++i) {
        log[i].z = i % 2;
        log[i].g_out = 0.5;
    }
    CHECK(weightnet_logloss_bits(log) == doctest::Approx(1.0).epsilon(1e-15));
    for (auto& r : log) r.g_out = r.z;
    CHECK(weightnet_logloss_bits(log) < 1e-10);
    std::vector<Interaction> none(3);
    CHECK_THROWS_AS(weightnet_logloss_bits(none), EstimationError);
}

TEST_CASE("aggregate") {
    MetricVector gte;
    gte.short_proportion = gte.stay_duration = gte.finishing_rate = 1.0;
    std::vector<ReplicationResult> same = {with_estimate(1), with_estimate(1), with_estimate(1)};
    const auto s = aggregate(same, gte, StudyMode::kAB);
    CHECK(s[Metric::kShortProportion].bias == 0.0);
    CHECK(s[Metric::kShortProportion].std == 0.0);

    MetricVector zero;
    std::vector<ReplicationResult> two = {with_estimate(0), with_estimate(2)};
    const auto t = aggregate(two, zero, StudyMode::kAB);
    CHECK(t[Metric::kStayDuration].bias == 1.0);
    CHECK(t[Metric::kStayDuration].std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(t[Metric::kStayDuration].mean_se == doctest::Approx(0.1));

    // A/A: reference is zero whatever gte says; rejection rate counted.
    std::vector<ReplicationResult> aa = {with_estimate(0.5), with_estimate(0.0), with_estimate(0.05), with_estimate(-0.3)};
    const auto u = aggregate(aa, gte, StudyMode::kAA);
    CHECK(u[Metric::kFinishingRate].bias == doctest::Approx(0.0625));
    CHECK(u[Metric::kFinishingRate].type1_rate == 0.5);

    CHECK_THROWS_AS(aggregate(std::vector<ReplicationResult>{with_estimate(1)}, gte, StudyMode::kAB), EstimationError);
}

TEST_CASE("aggregate is permutation invariant") {
    Stream rng(6);
    std::vector<ReplicationResult> rs;
    for (int i = 0; i < 30; ++i) {
        auto r = with_estimate(rng.uniform() * 1e-3 + 0.1, rng.uniform());
        r.treatment_value = 9 + rng.uniform();
        r.control_value = 9 + rng.uniform();
        rs.push_back(r);
    }
    MetricVector gte;
    const auto a = aggregate(rs, gte, StudyMode::kAB);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(rs.begin(), rs.end(), rng);
        const auto b = aggregate(rs, gte, StudyMode::kAB);
        for (Metric m : kAllMetrics) {
            CHECK(a[m].bias == b[m].bias);
            CHECK(a[m].std == b[m].std);
            CHECK(a[m].mean_se == b[m].mean_se);
        }
        CHECK(a.mean_treatment_value == b.mean_treatment_value);
        CHECK(a.sem_control_value == b.sem_control_value);
    }
}
