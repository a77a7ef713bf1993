#include "abloop/mlcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "abloop/errors.hpp"

namespace abloop {

void Batch::push_back(ModelInput in, Outcome out, int z) {
    inputs.push_back(std::move(in));
    outcomes.push_back(out);
    assignments.push_back(z);
}

Batch Batch::arm(int z) const {
    Batch out;
    for (std::size_t i = 0; i < size(); ++i)
        if (assignments[i] == z) out.push_back(inputs[i], outcomes[i], z);
    return out;
}

void Batch::validate() const {
    if (inputs.empty()) throw ContractError("batch must be nonempty");
    if (outcomes.size() != inputs.size() || assignments.size() != inputs.size())
        throw ContractError("batch arrays must have equal length");
}

PredictorModel PredictorModel::zeros(int feature_dim) {
    const auto n = static_cast<std::size_t>(feature_dim + 2);
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

namespace {

// w . [x, indicator, 1]
double affine(const std::vector<double>& w, std::span<const double> x, int indicator) {
    const std::size_t d = x.size();
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
    return s + w[d] * indicator + w[d + 1];
}

// log(1 + e^z) - y z without overflow.
double bce_from_logit(double z, double y) {
    return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

void check_weights(const Batch& batch, std::span<const double> weights) {
    batch.validate();
    if (weights.size() != batch.size())
        throw ContractError("weight count " + std::to_string(weights.size()) +
                            " does not match batch size " + std::to_string(batch.size()));
}

double predictor_loss_heads(const PredictorModel& model, const Batch& batch,
                            std::span<const double> weights, bool fr, bool sd) {
    check_weights(batch, weights);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& in = batch.inputs[i];
        double l = 0.0;
        if (fr) l += bce_from_logit(affine(model.fr_weights, in.features, in.is_short_indicator),
                                    batch.outcomes[i].finished);
        if (sd) {
            const double r = affine(model.sd_weights, in.features, in.is_short_indicator) -
                             batch.outcomes[i].stay_duration;
            l += 0.5 * r * r;
        }
        total += weights[i] * l;
    }
    return total / static_cast<double>(batch.size());
}

PredictorModel predictor_gradient_heads(const PredictorModel& model, const Batch& batch,
                                        std::span<const double> weights, bool fr, bool sd) {
    check_weights(batch, weights);
    const std::size_t d = model.fr_weights.size() - 2;
    auto grad = PredictorModel::zeros(static_cast<int>(d));
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (weights[i] == 0.0) continue;
        const auto& in = batch.inputs[i];
        const double ind = in.is_short_indicator;
        if (fr) {
            const double z = affine(model.fr_weights, in.features, in.is_short_indicator);
            const double c = weights[i] * (sigmoid(z) - batch.outcomes[i].finished) * inv_n;
            for (std::size_t j = 0; j < d; ++j) grad.fr_weights[j] += c * in.features[j];
            grad.fr_weights[d] += c * ind;
            grad.fr_weights[d + 1] += c;
        }
        if (sd) {
            const double r = affine(model.sd_weights, in.features, in.is_short_indicator) -
                             batch.outcomes[i].stay_duration;
            const double c = weights[i] * r * inv_n;
            for (std::size_t j = 0; j < d; ++j) grad.sd_weights[j] += c * in.features[j];
            grad.sd_weights[d] += c * ind;
            grad.sd_weights[d + 1] += c;
        }
    }
    return grad;
}

}  // namespace

Prediction predict(const PredictorModel& model, std::span<const double> features, int is_short) {
    return {sigmoid(affine(model.fr_weights, features, is_short)),
            affine(model.sd_weights, features, is_short)};
}

double predictor_loss(const PredictorModel& model, const Batch& batch, std::span<const double> weights) {
    return predictor_loss_heads(model, batch, weights, true, true);
}

PredictorModel predictor_gradient(const PredictorModel& model, const Batch& batch,
                                  std::span<const double> weights) {
    return predictor_gradient_heads(model, batch, weights, true, true);
}

PredictorModel weighted_sgd_step(const PredictorModel& model, const Batch& batch,
                                 std::span<const double> weights, double lr) {
    if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
    const auto grad = predictor_gradient(model, batch, weights);
    PredictorModel out = model;
    for (std::size_t j = 0; j < out.fr_weights.size(); ++j) {
        out.fr_weights[j] -= lr * grad.fr_weights[j];
        out.sd_weights[j] -= lr * grad.sd_weights[j];
    }
    return out;
}

// ---------------------------------------------------------------------------
// WeightNet

std::size_t WeightNet::param_count(int input_dim, int hidden) noexcept {
    const auto h = static_cast<std::size_t>(hidden);
    return h * static_cast<std::size_t>(input_dim) + h + h * h + h + h + 1;
}

WeightNet WeightNet::zeros(int input_dim, int hidden) {
    WeightNet net;
    net.input_dim = input_dim;
    net.hidden = hidden;
    const auto n = param_count(input_dim, hidden);
    net.params.assign(n, 0.0);
    net.adam_m.assign(n, 0.0);
    net.adam_v.assign(n, 0.0);
    return net;
}

WeightNet WeightNet::init(int input_dim, Stream& rng, int hidden) {
    auto net = zeros(input_dim, hidden);
    auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (std::size_t k = 0; k < count; ++k)
            net.params[offset + k] = (2.0 * rng.uniform() - 1.0) * bound;
    };
    const auto h = static_cast<std::size_t>(hidden);
    fill(net.w1_offset(), h * static_cast<std::size_t>(input_dim), input_dim);
    fill(net.w2_offset(), h * h, hidden);
    fill(net.w3_offset(), h, hidden);
    return net;
}

namespace {

struct Activations {
    std::vector<double> x;
    std::vector<double> a1, h1, a2, h2;
    double logit = 0.0;
};

void forward(const WeightNet& net, const ModelInput& input, Activations& act) {
    const auto in = static_cast<std::size_t>(net.input_dim);
    const auto h = static_cast<std::size_t>(net.hidden);
    if (input.features.size() + 1 != in)
        throw ContractError("weightnet input dimension mismatch");
    act.x.assign(input.features.begin(), input.features.end());
    act.x.push_back(input.is_short_indicator);
    const double* p = net.params.data();
    act.a1.resize(h);
    act.h1.resize(h);
    act.a2.resize(h);
    act.h2.resize(h);
    for (std::size_t u = 0; u < h; ++u) {
        const double* row = p + net.w1_offset() + u * in;
        double s = p[net.b1_offset() + u];
        for (std::size_t j = 0; j < in; ++j) s += row[j] * act.x[j];
        act.a1[u] = s;
        act.h1[u] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t u = 0; u < h; ++u) {
        const double* row = p + net.w2_offset() + u * h;
        double s = p[net.b2_offset() + u];
        for (std::size_t j = 0; j < h; ++j) s += row[j] * act.h1[j];
        act.a2[u] = s;
        act.h2[u] = s > 0.0 ? s : 0.0;
    }
    double o = p[net.b3_offset()];
    for (std::size_t u = 0; u < h; ++u) o += p[net.w3_offset() + u] * act.h2[u];
    act.logit = o;
}

}  // namespace

double weightnet_logit(const WeightNet& net, const ModelInput& input) {
    Activations act;
    forward(net, input, act);
    return act.logit;
}

double weightnet_forward(const WeightNet& net, const ModelInput& input) {
    return sigmoid(weightnet_logit(net, input));
}

double weightnet_loss(const WeightNet& net, const Batch& batch) {
    batch.validate();
    Activations act;
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward(net, batch.inputs[i], act);
        total += bce_from_logit(act.logit, batch.assignments[i]);
    }
    return total / static_cast<double>(batch.size());
}

std::vector<double> weightnet_gradient(const WeightNet& net, const Batch& batch) {
    batch.validate();
    const auto in = static_cast<std::size_t>(net.input_dim);
    const auto h = static_cast<std::size_t>(net.hidden);
    const double* p = net.params.data();
    std::vector<double> grad(net.params.size(), 0.0);
    std::vector<double> d2(h), d1(h);
    Activations act;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward(net, batch.inputs[i], act);
        const double dout = (sigmoid(act.logit) - batch.assignments[i]) * inv_n;
        grad[net.b3_offset()] += dout;
        for (std::size_t u = 0; u < h; ++u) {
            grad[net.w3_offset() + u] += dout * act.h2[u];
            d2[u] = act.a2[u] > 0.0 ? dout * p[net.w3_offset() + u] : 0.0;
        }
        std::fill(d1.begin(), d1.end(), 0.0);
        for (std::size_t u = 0; u < h; ++u) {
            if (d2[u] == 0.0) continue;
            grad[net.b2_offset() + u] += d2[u];
            const double* row = p + net.w2_offset() + u * h;
            double* grow = grad.data() + net.w2_offset() + u * h;
            for (std::size_t j = 0; j < h; ++j) {
                grow[j] += d2[u] * act.h1[j];
                d1[j] += d2[u] * row[j];
            }
        }
        for (std::size_t u = 0; u < h; ++u) {
            if (act.a1[u] <= 0.0 || d1[u] == 0.0) continue;
            grad[net.b1_offset() + u] += d1[u];
            double* grow = grad.data() + net.w1_offset() + u * in;
            for (std::size_t j = 0; j < in; ++j) grow[j] += d1[u] * act.x[j];
        }
    }
    return grad;
}

WeightNet weightnet_adam_step(const WeightNet& net, const Batch& batch, double lr,
                              const AdamConfig& adam) {
    if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
    const auto grad = weightnet_gradient(net, batch);
    WeightNet out = net;
    out.adam_step += 1;
    const double t = static_cast<double>(out.adam_step);
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const double g = grad[k];
        out.adam_m[k] = adam.beta1 * out.adam_m[k] + (1.0 - adam.beta1) * g;
        out.adam_v[k] = adam.beta2 * out.adam_v[k] + (1.0 - adam.beta2) * g * g;
        const double m_hat = out.adam_m[k] / c1;
        const double v_hat = out.adam_v[k] / c2;
        out.params[k] -= lr * m_hat / (std::sqrt(v_hat) + adam.epsilon);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference check

namespace {

PredictorModel unflatten_predictor(std::span<const double> params) {
    if (params.size() < 6 || params.size() % 2 != 0)
        throw ContractError("predictor parameter vector must hold two equal heads");
    const auto half = params.size() / 2;
    return {{params.begin(), params.begin() + static_cast<std::ptrdiff_t>(half)},
            {params.begin() + static_cast<std::ptrdiff_t>(half), params.end()}};
}

// Central differences of the network loss, evaluated in extended precision so
// rounding stays well below the tolerance even for gradients near the 1e-8
// floor. One parameter moves at a time, so only the activations downstream of
// it are recomputed.
class ExtendedDifferences {
  public:
    ExtendedDifferences(const WeightNet& net, const Batch& batch) : net_(net), batch_(batch) {
        const auto in = static_cast<std::size_t>(net.input_dim);
        const auto h = static_cast<std::size_t>(net.hidden);
        const double* p = net.params.data();
        points_.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto& pt = points_[i];
            const auto& input = batch.inputs[i];
            pt.x.assign(input.features.begin(), input.features.end());
            pt.x.push_back(input.is_short_indicator);
            pt.a1.resize(h);
            pt.a2.resize(h);
            for (std::size_t u = 0; u < h; ++u) {
                long double s = p[net.b1_offset() + u];
                for (std::size_t j = 0; j < in; ++j) s += ld(p[net.w1_offset() + u * in + j]) * pt.x[j];
                pt.a1[u] = s;
            }
            pt.z = p[net.b3_offset()];
            for (std::size_t u = 0; u < h; ++u) {
                long double s = p[net.b2_offset() + u];
                for (std::size_t j = 0; j < h; ++j) s += ld(p[net.w2_offset() + u * h + j]) * relu(pt.a1[j]);
                pt.a2[u] = s;
                pt.z += ld(p[net.w3_offset() + u]) * relu(s);
            }
        }
    }

    // Mean loss with parameter k set to `value`.
    long double loss_with(std::size_t k, double value) const {
        const auto in = static_cast<std::size_t>(net_.input_dim);
        const auto h = static_cast<std::size_t>(net_.hidden);
        const double* p = net_.params.data();
        const long double delta = ld(value) - p[k];
        long double total = 0.0L;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto& pt = points_[i];
            long double z = pt.z;
            if (k >= net_.b3_offset()) {
                z += delta;
            } else if (k >= net_.w3_offset()) {
                z += delta * relu(pt.a2[k - net_.w3_offset()]);
            } else if (k >= net_.w2_offset()) {
                const std::size_t u = k >= net_.b2_offset() ? k - net_.b2_offset() : (k - net_.w2_offset()) / h;
                const long double input = k >= net_.b2_offset() ? 1.0L : relu(pt.a1[(k - net_.w2_offset()) % h]);
                z += ld(p[net_.w3_offset() + u]) * (relu(pt.a2[u] + delta * input) - relu(pt.a2[u]));
            } else {
                const std::size_t u = k >= net_.b1_offset() ? k - net_.b1_offset() : (k - net_.w1_offset()) / in;
                const long double input = k >= net_.b1_offset() ? 1.0L : pt.x[(k - net_.w1_offset()) % in];
                const long double change = relu(pt.a1[u] + delta * input) - relu(pt.a1[u]);
                if (change != 0.0L)
                    for (std::size_t v = 0; v < h; ++v) {
                        const long double a2 = pt.a2[v] + ld(p[net_.w2_offset() + v * h + u]) * change;
                        z += ld(p[net_.w3_offset() + v]) * (relu(a2) - relu(pt.a2[v]));
                    }
            }
            const long double y = batch_.assignments[i];
            total += std::max(z, 0.0L) - y * z + std::log1p(std::exp(-std::abs(z)));
        }
        return total / static_cast<long double>(points_.size());
    }

  private:
    struct Point {
        std::vector<long double> x, a1, a2;
        long double z = 0.0L;
    };
    static long double ld(double v) { return static_cast<long double>(v); }
    static long double relu(long double v) { return v > 0.0L ? v : 0.0L; }

    const WeightNet& net_;
    const Batch& batch_;
    std::vector<Point> points_;
};

}  // namespace

double gradient_check(LossKind kind, std::span<const double> params, const Batch& batch,
                      std::span<const double> weights, double h, int hidden) {
    std::vector<double> theta(params.begin(), params.end());
    std::vector<double> analytic;
    std::function<long double(std::size_t, double)> loss;

    if (kind == LossKind::kWeightNet) {
        batch.validate();
        const int input_dim = static_cast<int>(batch.inputs.front().features.size()) + 1;
        auto net = std::make_shared<WeightNet>(WeightNet::zeros(input_dim, hidden));
        if (net->params.size() != theta.size())
            throw ContractError("weightnet parameter vector has the wrong length");
        net->params = theta;
        analytic = weightnet_gradient(*net, batch);
        auto diffs = std::make_shared<ExtendedDifferences>(*net, batch);
        loss = [net, diffs](std::size_t k, double value) { return diffs->loss_with(k, value); };
    } else {
        const bool fr = kind != LossKind::kSdHead;
        const bool sd = kind != LossKind::kFrHead;
        const auto g = predictor_gradient_heads(unflatten_predictor(theta), batch, weights, fr, sd);
        analytic = g.fr_weights;
        analytic.insert(analytic.end(), g.sd_weights.begin(), g.sd_weights.end());
        loss = [&batch, weights, fr, sd, theta](std::size_t k, double value) mutable {
            const double saved = theta[k];
            theta[k] = value;
            const double l = predictor_loss_heads(unflatten_predictor(theta), batch, weights, fr, sd);
            theta[k] = saved;
            return static_cast<long double>(l);
        };
    }

    double worst = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double saved = theta[k];
        const double hi = saved + h, lo = saved - h;
        const long double up = loss(k, hi);
        const long double down = loss(k, lo);
        const auto numeric = static_cast<double>((up - down) / (static_cast<long double>(hi) - lo));
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    }
    return worst;
}

}  // namespace abloop
