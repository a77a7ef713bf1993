#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "abloop/env.hpp"
#include "abloop/rng.hpp"

namespace abloop {

/// Model-facing view of a shown video: raw features plus the short/long flag
/// (1 = short).
struct ModelInput {
    std::vector<double> features;
    int is_short_indicator = 0;

    static ModelInput from(const Candidate& c) { return {c.features, c.is_short ? 1 : 0}; }
};

/// One period of logged data: parallel arrays of inputs, outcomes and
/// assignments.
struct Batch {
    std::vector<ModelInput> inputs;
    std::vector<Outcome> outcomes;
    std::vector<int> assignments;

    std::size_t size() const noexcept { return inputs.size(); }
    void push_back(ModelInput in, Outcome out, int z);
    /// Subset holding only users with the given assignment.
    Batch arm(int z) const;
    /// Throws ContractError unless the three arrays agree and are nonempty.
    void validate() const;
};

/// Two-head predictor: logistic finishing-rate head and linear stay-duration
/// head over [features, indicator, 1].
struct PredictorModel {
    std::vector<double> fr_weights;
    std::vector<double> sd_weights;

    static PredictorModel zeros(int feature_dim);
    int feature_dim() const noexcept { return static_cast<int>(fr_weights.size()) - 2; }

    bool operator==(const PredictorModel&) const = default;
};

struct Prediction {
    double fr = 0.5;
    double sd = 0.0;
};

Prediction predict(const PredictorModel& model, std::span<const double> features, int is_short);
inline Prediction predict(const PredictorModel& model, const ModelInput& input) {
    return predict(model, input.features, input.is_short_indicator);
}

/// Mean over the batch of w_i * (BCE_i + 0.5 * (sd_hat_i - sd_i)^2), using the
/// full batch size as the denominator.
double predictor_loss(const PredictorModel& model, const Batch& batch, std::span<const double> weights);

/// Gradient of predictor_loss, returned in the shape of the model.
PredictorModel predictor_gradient(const PredictorModel& model, const Batch& batch,
                                  std::span<const double> weights);

/// One plain gradient step on predictor_loss. Throws ContractError when the
/// weight count differs from the batch size or lr <= 0.
PredictorModel weighted_sgd_step(const PredictorModel& model, const Batch& batch,
                                 std::span<const double> weights, double lr);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Propensity network [d + 1] -> hidden -> hidden -> 1 with ReLU hidden units
/// and a sigmoid output, plus its Adam state.
///
/// Parameters are kept in one flat vector in the order
/// W1 (hidden x input), b1, W2 (hidden x hidden), b2, w3 (hidden), b3.
struct WeightNet {
    int input_dim = 0;
    int hidden = 64;
    std::vector<double> params;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t adam_step = 0;

    /// Weights uniform in +-sqrt(6 / fan_in), biases zero.
    static WeightNet init(int input_dim, Stream& rng, int hidden = 64);
    static WeightNet zeros(int input_dim, int hidden = 64);
    static std::size_t param_count(int input_dim, int hidden) noexcept;

    std::size_t w1_offset() const noexcept { return 0; }
    std::size_t b1_offset() const noexcept { return w1_offset() + std::size_t(hidden) * input_dim; }
    std::size_t w2_offset() const noexcept { return b1_offset() + std::size_t(hidden); }
    std::size_t b2_offset() const noexcept { return w2_offset() + std::size_t(hidden) * hidden; }
    std::size_t w3_offset() const noexcept { return b2_offset() + std::size_t(hidden); }
    std::size_t b3_offset() const noexcept { return w3_offset() + std::size_t(hidden); }

    bool operator==(const WeightNet&) const = default;
};

/// Pre-sigmoid output of the network.
double weightnet_logit(const WeightNet& net, const ModelInput& input);
/// Estimated P(Z = 1 | x).
double weightnet_forward(const WeightNet& net, const ModelInput& input);

/// Mean binary cross-entropy (natural log) of the network against assignments.
double weightnet_loss(const WeightNet& net, const Batch& batch);
std::vector<double> weightnet_gradient(const WeightNet& net, const Batch& batch);

/// One bias-corrected Adam step on weightnet_loss.
WeightNet weightnet_adam_step(const WeightNet& net, const Batch& batch, double lr,
                              const AdamConfig& adam = {});

enum class LossKind {
    kFrHead,     ///< weighted BCE of the finishing-rate head only
    kSdHead,     ///< weighted half squared error of the stay-duration head only
    kPredictor,  ///< both heads
    kWeightNet,  ///< propensity network BCE
};

/// Max componentwise relative error between the analytic gradient and central
/// finite differences with step h. Denominators are floored at 1e-8.
///
/// For predictor kinds `params` is fr_weights followed by sd_weights and
/// `weights` holds per-point loss weights. For kWeightNet `params` is the flat
/// network vector of a net with `hidden` units and `weights` is ignored.
double gradient_check(LossKind kind, std::span<const double> params, const Batch& batch,
                      std::span<const double> weights = {}, double h = 1e-5, int hidden = 64);

}  // namespace abloop
