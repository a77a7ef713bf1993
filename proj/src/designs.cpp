#include "abloop/designs.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "abloop/errors.hpp"

namespace abloop {

void ExperimentConfig::validate() const {
    env.validate();
    if (!std::isfinite(alpha_treatment)) throw ConfigError("alpha_treatment", "alpha_treatment must be finite");
    if (!std::isfinite(alpha_control)) throw ConfigError("alpha_control", "alpha_control must be finite");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p", "p must lie in [0, 1]");
    if (periods < 1) throw ConfigError("periods", "periods must be >= 1");
    if (batch < 1) throw ConfigError("batch", "batch must be >= 1");
    if (warmup_periods < 0 || warmup_periods >= periods)
        throw ConfigError("warmup_periods", "warmup_periods must lie in [0, periods)");
    if (production_burnin_periods < 0)
        throw ConfigError("production_burnin_periods", "production_burnin_periods must be >= 0");
    if (!(lr_sgd > 0.0)) throw ConfigError("lr_sgd", "lr_sgd must be positive");
    if (!(lr_adam > 0.0)) throw ConfigError("lr_adam", "lr_adam must be positive");
    if (method == Method::kWeighted && !(p > 0.0 && p < 1.0))
        throw ConfigError("p", "the weighted method needs 0 < p < 1");
    if (clip_epsilon && !(*clip_epsilon >= 0.0 && *clip_epsilon < 0.5))
        throw ConfigError("clip_epsilon", "clip_epsilon must lie in [0, 0.5)");
    if (forced_propensity && !(*forced_propensity >= 0.0 && *forced_propensity <= 1.0))
        throw ConfigError("forced_propensity", "forced_propensity must lie in [0, 1]");
    if (weightnet_hidden < 1) throw ConfigError("weightnet_hidden", "weightnet_hidden must be >= 1");
}

ReplicationStreams ReplicationStreams::from_seed(std::uint64_t seed) {
    return {Stream(split_seed(seed, "environment")), Stream(split_seed(seed, "assignment")),
            Stream(split_seed(seed, "outcome")), Stream(split_seed(seed, "model-init"))};
}

ReplicationStreams ReplicationStreams::burnin_from_seed(std::uint64_t seed) {
    return {Stream(split_seed(seed, "burnin-environment")), Stream(split_seed(seed, "burnin-assignment")),
            Stream(split_seed(seed, "burnin-outcome")), Stream(split_seed(seed, "burnin-model-init"))};
}

std::size_t rank_and_choose(const PredictorModel& model, double alpha, std::span<const Candidate> candidates) {
    if (candidates.empty()) throw ContractError("rank_and_choose needs at least one candidate");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto pred = predict(model, candidates[i].features, candidates[i].is_short ? 1 : 0);
        const double score = alpha * pred.fr + pred.sd;
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

std::size_t choose_best(double alpha, std::span<const Prediction> predictions) {
    if (predictions.empty()) throw ContractError("choose_best needs at least one prediction");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double score = alpha * predictions[i].fr + predictions[i].sd;
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

int assign(Stream& rng, double p) { return rng.uniform() < p ? 1 : 0; }

ArmWeights compute_weights(double g_out, double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("p", "weights are undefined unless 0 < p < 1");
    return {g_out / p, (1.0 - g_out) / (1.0 - p)};
}

LoopState initial_state(const ExperimentConfig& config, const PredictorModel& production,
                        ReplicationStreams& streams, Assignment assignment) {
    LoopState state;
    state.method = config.method;
    state.assignment = assignment;
    state.models = {production, production};
    state.weight_net = WeightNet::init(config.env.feature_dim + 1, streams.model_init, config.weightnet_hidden);
    state.log.reserve(static_cast<std::size_t>(config.periods) * static_cast<std::size_t>(config.batch));
    return state;
}

namespace {

void update_arm_only(LoopState& state, const Batch& batch, int z, double lr) {
    const Batch arm = batch.arm(z);
    if (arm.size() == 0) return;
    const std::vector<double> ones(arm.size(), 1.0);
    state.models[z] = weighted_sgd_step(state.models[z], arm, ones, lr);
}

void update_weighted(LoopState& state, const ExperimentConfig& config, const Batch& batch,
                     std::span<Interaction> rows) {
    const std::size_t n = batch.size();
    std::vector<double> wt(n), wc(n);
    for (std::size_t i = 0; i < n; ++i) {
        double g = config.forced_propensity ? *config.forced_propensity
                                            : weightnet_forward(state.weight_net, batch.inputs[i]);
        if (config.clip_epsilon) g = std::clamp(g, *config.clip_epsilon, 1.0 - *config.clip_epsilon);
        const auto w = compute_weights(g, config.p);
        wt[i] = w.treatment;
        wc[i] = w.control;
        rows[i].g_out = g;
        rows[i].w_treatment = w.treatment;
        rows[i].w_control = w.control;
    }
    state.models[1] = weighted_sgd_step(state.models[1], batch, wt, config.lr_sgd);
    state.models[0] = weighted_sgd_step(state.models[0], batch, wc, config.lr_sgd);
    state.weight_net = weightnet_adam_step(state.weight_net, batch, config.lr_adam);
}

}  // namespace

void run_period(LoopState& state, const ExperimentConfig& config, ReplicationStreams& streams) {
    if (state.period >= config.periods)
        throw ContractError("experiment already ran all " + std::to_string(config.periods) + " periods");
    const int t = state.period + 1;
    const auto first_row = state.log.size();
    Batch batch;
    batch.inputs.reserve(static_cast<std::size_t>(config.batch));
    std::vector<Candidate> pool;

    for (int i = 0; i < config.batch; ++i) {
        sample_candidates(streams.environment, config.env, pool);
        int z = 0;
        switch (state.assignment) {
            case Assignment::kRandom: z = assign(streams.assignment, config.p); break;
            case Assignment::kAllTreatment: z = 1; break;
            case Assignment::kAllControl: z = 0; break;
        }
        const auto& model = state.model_for(z);
        const double alpha = z ? config.alpha_treatment : config.alpha_control;
        const auto& chosen = pool[rank_and_choose(model, alpha, pool)];
        const Outcome outcome = realize_outcome(streams.outcome, chosen, config.env);
        const auto pred = predict(model, chosen.features, chosen.is_short ? 1 : 0);

        Interaction row;
        row.period = t;
        row.user_index = i;
        row.z = static_cast<std::uint8_t>(z);
        row.is_short = chosen.is_short ? 1 : 0;
        row.finished = static_cast<std::uint8_t>(outcome.finished);
        row.stay_duration = outcome.stay_duration;
        row.fr_hat = pred.fr;
        row.sd_hat = pred.sd;
        state.log.push_back(row);
        batch.push_back(ModelInput::from(chosen), outcome, z);
    }

    apply_updates(state, config, t, batch, std::span<Interaction>(state.log.data() + first_row, batch.size()));
    state.period = t;
}

void apply_updates(LoopState& state, const ExperimentConfig& config, int t, const Batch& batch,
                   std::span<Interaction> rows) {
    if (rows.size() != batch.size()) throw ContractError("one log row per batch entry required");
    switch (state.method) {
        case Method::kWeighted:
            if (t <= config.warmup_periods) {
                update_arm_only(state, batch, 1, config.lr_sgd);
                update_arm_only(state, batch, 0, config.lr_sgd);
            } else {
                update_weighted(state, config, batch, rows);
            }
            break;
        case Method::kSplitting:
            update_arm_only(state, batch, 1, config.lr_sgd);
            update_arm_only(state, batch, 0, config.lr_sgd);
            break;
        case Method::kPooling: {
            const std::vector<double> ones(batch.size(), 1.0);
            state.models[0] = weighted_sgd_step(state.models[0], batch, ones, config.lr_sgd);
            break;
        }
        case Method::kSnapshot: break;
    }
}

PredictorModel make_production_model(std::uint64_t seed, const ExperimentConfig& config) {
    auto model = PredictorModel::zeros(config.env.feature_dim);
    if (config.production_burnin_periods == 0) return model;
    ExperimentConfig burn = config;
    burn.method = Method::kPooling;
    burn.periods = config.production_burnin_periods;
    burn.warmup_periods = 0;
    auto streams = ReplicationStreams::burnin_from_seed(seed);
    LoopState state;
    state.method = Method::kPooling;
    state.assignment = Assignment::kAllControl;
    state.models = {model, model};
    for (int t = 0; t < burn.periods; ++t) {
        run_period(state, burn, streams);
        state.log.clear();
    }
    return state.models[0];
}

LoopState run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto production = make_production_model(config.seed, config);
    auto streams = ReplicationStreams::from_seed(config.seed);
    auto state = initial_state(config, production, streams);
    while (state.period < config.periods) run_period(state, config, streams);
    return state;
}

ReplicationResult summarize(const LoopState& state, const ExperimentConfig& config, int rep) {
    ReplicationResult r;
    r.method = state.method;
    r.rep = rep;
    r.seed = config.seed;
    for (Metric m : kAllMetrics) r.metrics[static_cast<std::size_t>(m)] = naive_estimate(state.log, m);
    const auto values = experimentation_values(state.log, config.alpha_treatment, config.alpha_control);
    r.treatment_value = values.treatment_value;
    r.control_value = values.control_value;
    if (state.method == Method::kWeighted &&
        std::any_of(state.log.begin(), state.log.end(), [](const Interaction& x) { return x.has_weights(); }))
        r.weightnet_logloss_bits = weightnet_logloss_bits(state.log);
    return r;
}

ReplicationResult run_replication(const ExperimentConfig& config, int rep) {
    return summarize(run_experiment(config), config, rep);
}

GlobalResult run_global(const ExperimentConfig& config, int arm) {
    ExperimentConfig global = config;
    global.method = Method::kPooling;
    global.validate();
    const auto production = make_production_model(config.seed, config);
    auto streams = ReplicationStreams::from_seed(config.seed);
    auto state = initial_state(global, production, streams,
                               arm ? Assignment::kAllTreatment : Assignment::kAllControl);
    while (state.period < global.periods) run_period(state, global, streams);

    const double alpha = arm ? config.alpha_treatment : config.alpha_control;
    double sums[3] = {0.0, 0.0, 0.0};
    double value = 0.0;
    for (const auto& row : state.log) {
        for (Metric m : kAllMetrics) sums[static_cast<int>(m)] += metric_value(row, m);
        value += alpha * row.finished + row.stay_duration;
    }
    const auto n = static_cast<double>(state.log.size());
    GlobalResult out;
    for (Metric m : kAllMetrics) out.means[m] = sums[static_cast<int>(m)] / n;
    out.value = value / n;
    return out;
}

void write_log_csv(std::ostream& out, std::span<const Interaction> log) {
    out << "period,user_index,z,is_short,finished,stay_duration,fr_hat,sd_hat,g_out\n";
    char buf[256];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%" PRId32 ",%" PRId32 ",%u,%u,%u,%.9g,%.9g,%.9g,", r.period, r.user_index,
                      unsigned{r.z}, unsigned{r.is_short}, unsigned{r.finished}, r.stay_duration, r.fr_hat, r.sd_hat);
        out << buf;
        if (r.has_weights()) {
            std::snprintf(buf, sizeof buf, "%.9g", r.g_out);
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace abloop
