#include <doctest.h>

#include <cmath>

#include "abloop/errors.hpp"
#include "abloop/mlcore.hpp"

using namespace abloop;

namespace {

Batch random_batch(Stream& rng, std::size_t n, int d = 10) {
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        ModelInput in;
        for (int j = 0; j < d; ++j) in.features.push_back(rng.uniform());
        in.is_short_indicator = rng.uniform() < 0.5;
        Outcome o{rng.uniform() < 0.4 ? 1 : 0, rng.exponential_mean(4.0)};
        b.push_back(in, o, rng.uniform() < 0.5 ? 1 : 0);
    }
    return b;
}

PredictorModel random_model(Stream& rng, int d = 10) {
    auto m = PredictorModel::zeros(d);
    for (auto& w : m.fr_weights) w = rng.uniform() - 0.5;
    for (auto& w : m.sd_weights) w = 2.0 * rng.uniform() - 1.0;
    return m;
}

std::vector<double> flat(const PredictorModel& m) {
    auto v = m.fr_weights;
    v.insert(v.end(), m.sd_weights.begin(), m.sd_weights.end());
    return v;
}

std::vector<double> random_weights(Stream& rng, std::size_t n) {
    std::vector<double> w(n);
    for (auto& x : w) x = 2.0 * rng.uniform();
    return w;
}

}  // namespace

TEST_CASE("predict closed forms") {
    const ModelInput in{std::vector<double>(10, 0.7), 1};
    auto m = PredictorModel::zeros(10);
    CHECK(predict(m, in).fr == 0.5);
    CHECK(predict(m, in).sd == 0.0);

    m.fr_weights.back() = -2.5;
    CHECK(predict(m, in).fr == doctest::Approx(0.07585818002124355).epsilon(1e-12));
    CHECK(predict(m, ModelInput{std::vector<double>(10, 0.1), 0}).fr ==
          doctest::Approx(0.07585818002124355).epsilon(1e-12));

    m.sd_weights[10] = 1.0;  // indicator
    m.sd_weights[11] = 2.0;  // intercept
    CHECK(predict(m, ModelInput{std::vector<double>(10, 0.0), 1}).sd == 3.0);
}

TEST_CASE("weighted_sgd_step special cases") {
    Stream rng(11);
    const auto batch = random_batch(rng, 16);
    const auto model = random_model(rng);

    CHECK(weighted_sgd_step(model, batch, std::vector<double>(16, 0.0), 0.1) == model);

    // Hand gradient: one point, only the intercept is active for the sd head.
    Batch one;
    one.push_back(ModelInput{std::vector<double>(10, 0.0), 0}, Outcome{0, 1.0}, 1);
    const auto stepped = weighted_sgd_step(PredictorModel::zeros(10), one, std::vector<double>{2.0}, 0.1);
    CHECK(stepped.sd_weights[11] == doctest::Approx(0.2).epsilon(1e-15));
    for (int j = 0; j < 11; ++j) CHECK(stepped.sd_weights[j] == 0.0);

    CHECK_THROWS_AS(weighted_sgd_step(model, batch, std::vector<double>(3, 1.0), 0.1), ContractError);
    CHECK_THROWS_AS(weighted_sgd_step(model, batch, std::vector<double>(16, 1.0), 0.0), ContractError);
}

TEST_CASE("weighted gradient is linear in the weights") {
    Stream rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto batch = random_batch(rng, 32);
        const auto model = random_model(rng);
        const auto w = random_weights(rng, 32);
        const double a = 3.0 * rng.uniform();
        std::vector<double> aw(w);
        for (auto& x : aw) x *= a;
        const auto g = flat(predictor_gradient(model, batch, w));
        const auto ga = flat(predictor_gradient(model, batch, aw));
        for (std::size_t k = 0; k < g.size(); ++k) CHECK(ga[k] == doctest::Approx(a * g[k]).epsilon(1e-12));
    }
}

TEST_CASE("assignment weights bridge to the splitting gradient") {
    Stream rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const auto batch = random_batch(rng, 40);
        const auto model = random_model(rng);
        std::vector<double> z(batch.assignments.begin(), batch.assignments.end());
        const auto treated = batch.arm(1);
        REQUIRE(treated.size() > 0);
        const auto weighted = flat(predictor_gradient(model, batch, z));
        const auto split = flat(predictor_gradient(model, treated, std::vector<double>(treated.size(), 1.0)));
        const double factor = double(treated.size()) / double(batch.size());
        for (std::size_t k = 0; k < split.size(); ++k)
            CHECK(weighted[k] == doctest::Approx(factor * split[k]).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradients match central differences") {
    Stream rng(14);
    const auto batch = random_batch(rng, 24);
    const auto w = random_weights(rng, 24);
    const auto model = random_model(rng);
    CHECK(gradient_check(LossKind::kSdHead, flat(model), batch, w) <= 1e-7);
    CHECK(gradient_check(LossKind::kFrHead, flat(model), batch, w) <= 1e-4);
    CHECK(gradient_check(LossKind::kPredictor, flat(model), batch, w) <= 1e-4);

    const auto small = random_batch(rng, 8);
    const auto net = WeightNet::init(11, rng);
    CHECK(gradient_check(LossKind::kWeightNet, net.params, small) <= 1e-4);
}

TEST_CASE("weightnet forward") {
    const ModelInput in{std::vector<double>(10, 0.4), 1};
    auto net = WeightNet::zeros(11);
    CHECK(weightnet_forward(net, in) == 0.5);
    net.params[net.b3_offset()] = 10.0;
    CHECK(weightnet_forward(net, in) == doctest::Approx(0.9999546021312976).epsilon(1e-12));

    Stream rng(3);
    auto live = WeightNet::init(11, rng);
    // Make every second-layer unit active so raising a final weight matters.
    for (int u = 0; u < live.hidden; ++u) live.params[live.b2_offset() + u] = 5.0;
    const double before = weightnet_forward(live, in);
    live.params[live.w3_offset()] += 0.5;
    CHECK(weightnet_forward(live, in) > before);
}

TEST_CASE("weightnet Adam step") {
    SUBCASE("zero gradient leaves the net unchanged") {
        // Output 0.5 against balanced labels with no live hidden units.
        Batch b;
        b.push_back(ModelInput{std::vector<double>(10, 0.2), 1}, Outcome{}, 1);
        b.push_back(ModelInput{std::vector<double>(10, 0.6), 0}, Outcome{}, 0);
        const auto net = WeightNet::zeros(11);
        const auto stepped = weightnet_adam_step(net, b, 0.001);
        CHECK(stepped.params == net.params);
        CHECK(stepped.adam_step == 1);
    }

    SUBCASE("first step is -lr * g / (|g| + eps)") {
        Stream rng(21);
        const auto b = random_batch(rng, 16);
        const auto net = WeightNet::init(11, rng);
        const auto g = weightnet_gradient(net, b);
        const auto stepped = weightnet_adam_step(net, b, 0.001);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double expected = net.params[k] - 0.001 * g[k] / (std::abs(g[k]) + 1e-8);
            CHECK(stepped.params[k] == doctest::Approx(expected).epsilon(1e-12));
        }
    }

    SUBCASE("deterministic") {
        Stream r1(5), r2(5);
        const auto b = random_batch(r1, 16);
        random_batch(r2, 16);
        auto n1 = WeightNet::init(11, r1);
        auto n2 = WeightNet::init(11, r2);
        for (int s = 0; s < 3; ++s) {
            n1 = weightnet_adam_step(n1, b, 0.001);
            n2 = weightnet_adam_step(n2, b, 0.001);
        }
        CHECK(n1 == n2);
    }

    SUBCASE("training lowers the loss on a learnable signal") {
        Stream rng(8);
        Batch b;
        for (int i = 0; i < 128; ++i) {
            ModelInput in{std::vector<double>(10, 0.0), 0};
            for (auto& f : in.features) f = rng.uniform();
            b.push_back(in, Outcome{}, in.features[0] > 0.5 ? 1 : 0);
        }
        auto net = WeightNet::init(11, rng);
        const double before = weightnet_loss(net, b);
        for (int s = 0; s < 200; ++s) net = weightnet_adam_step(net, b, 0.001);
        CHECK(weightnet_loss(net, b) < 0.5 * before);
    }
}

TEST_CASE("init draws within the fan-in bound") {
    Stream rng(1);
    const auto net = WeightNet::init(11, rng);
    const double b1 = std::sqrt(6.0 / 11.0), b2 = std::sqrt(6.0 / 64.0);
    for (std::size_t k = net.w1_offset(); k < net.b1_offset(); ++k) CHECK(std::abs(net.params[k]) <= b1);
    for (std::size_t k = net.w2_offset(); k < net.b2_offset(); ++k) CHECK(std::abs(net.params[k]) <= b2);
    for (std::size_t k = net.b1_offset(); k < net.w2_offset(); ++k) CHECK(net.params[k] == 0.0);
}
