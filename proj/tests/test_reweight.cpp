#include <doctest.h>

#include <cmath>

#include "abloop/errors.hpp"
#include "abloop/reweight.hpp"

using namespace abloop;

namespace {

DiscreteSpace two_atoms() { return {{0.8, 0.2}, {0.2, 0.8}, 0.5}; }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("experiment distribution is the p-mixture") {
    const auto mix = experiment_distribution(two_atoms());
    CHECK(mix[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mix[1] == doctest::Approx(0.5).epsilon(1e-15));

    DiscreteSpace same{{0.3, 0.7}, {0.3, 0.7}, 0.27};
    CHECK(max_abs_diff(experiment_distribution(same), same.prob_treatment) <= 1e-15);

    DiscreteSpace all_treated{{0.3, 0.7}, {0.9, 0.1}, 1.0};
    CHECK(experiment_distribution(all_treated) == all_treated.prob_treatment);
}

TEST_CASE("oracle weights on the two-atom space") {
    const auto space = two_atoms();
    const auto w = oracle_weights(space);
    CHECK(w.treatment.when_treatment[0] == doctest::Approx(1.6).epsilon(1e-14));
    CHECK(w.treatment.when_treatment[1] == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(w.treatment.when_control == w.treatment.when_treatment);
    for (std::size_t a = 0; a < 2; ++a)
        CHECK(space.p * w.treatment.when_treatment[a] + (1 - space.p) * w.control.when_treatment[a] ==
              doctest::Approx(1.0).epsilon(1e-15));

    const auto recovered = apply_weights(space, w.treatment);
    CHECK(max_abs_diff(recovered, {0.8, 0.2}) <= 1e-15);
    CHECK(max_abs_diff(apply_weights(space, WeightTable::constant(2, 1.0)), experiment_distribution(space)) <= 1e-15);
    CHECK(max_abs_diff(apply_weights(space, splitting_weights(space).treatment), space.prob_treatment) <= 1e-15);

    CHECK(second_moment(space, w.treatment) == doctest::Approx(1.36).epsilon(1e-14));
    CHECK(second_moment(space, splitting_weights(space).treatment) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(second_moment(space, WeightTable::constant(2, 1.0)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("identical arms give unit weights") {
    DiscreteSpace same{{0.1, 0.2, 0.7}, {0.1, 0.2, 0.7}, 0.3};
    const auto w = oracle_weights(same);
    for (std::size_t a = 0; a < 3; ++a) {
        CHECK(w.treatment.when_treatment[a] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(w.control.when_control[a] == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("zero experiment mass makes the conditional undefined") {
    DiscreteSpace s{{1.0, 0.0}, {1.0, 0.0}, 0.5};
    CHECK_THROWS_AS(oracle_weights(s), EstimationError);
}

TEST_CASE("perturbation gap equals the conditional-variance decomposition") {
    const auto space = two_atoms();
    const auto e = treatment_propensity(space);
    const auto mix = experiment_distribution(space);
    const double base = second_moment(space, oracle_weights(space).treatment);

    CHECK(second_moment(space, perturb_treatment_weights(space, {0.0, 0.0})) == doctest::Approx(base).epsilon(1e-15));

    for (const std::vector<double>& c : {std::vector<double>{0.3, -0.2}, std::vector<double>{-1.0, 0.1}}) {
        const auto table = perturb_treatment_weights(space, c);
        // Still recovers D_T and stays nonnegative.
        CHECK(max_abs_diff(apply_weights(space, table), space.prob_treatment) <= 1e-14);
        for (std::size_t a = 0; a < 2; ++a) {
            CHECK(table.when_control[a] >= 0.0);
            CHECK(table.when_treatment[a] >= 0.0);
        }
        double expected = 0.0;
        for (std::size_t a = 0; a < 2; ++a) expected += mix[a] * c[a] * c[a] * e[a] * (1 - e[a]);
        CHECK(second_moment(space, table) - base == doctest::Approx(expected).epsilon(1e-12));
        CHECK(second_moment(space, table) - base > 0.0);
    }
}

TEST_CASE("random battery: recovery, normalisation and minimality") {
    Stream rng(2024);
    for (int s = 0; s < 100; ++s) {
        const auto n = 1 + static_cast<std::size_t>(rng.uniform() * 50);
        const auto space = DiscreteSpace::random(rng, n);
        REQUIRE_NOTHROW(space.validate());
        const auto w = oracle_weights(space);
        CHECK(max_abs_diff(apply_weights(space, w.treatment), space.prob_treatment) <= 1e-12);
        CHECK(max_abs_diff(apply_weights(space, w.control), space.prob_control) <= 1e-12);
        CHECK(std::abs(weight_mean(space, w.treatment) - 1.0) <= 1e-12);
        CHECK(std::abs(weight_mean(space, w.control) - 1.0) <= 1e-12);
        const auto t1 = verify_optimality(space, 100, rng);
        CHECK(t1.max_violation <= 1e-12);
        if (t1.nonzero_perturbations > 0) CHECK(t1.min_gap_nonzero > 0.0);
    }
}

TEST_CASE("battery report") {
    const auto r = run_oracle_battery(1, 20, 20);
    CHECK(r.spaces == 20);
    CHECK(r.max_unbiasedness_deviation <= 1e-12);
    CHECK(r.max_optimality_violation <= 1e-12);
    CHECK(r.min_optimality_gap > 0.0);
}
