#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "abloop/env.hpp"
#include "abloop/interaction.hpp"
#include "abloop/mlcore.hpp"
#include "abloop/rng.hpp"
#include "abloop/stats.hpp"

namespace abloop {

struct ExperimentConfig {
    double alpha_treatment = 9.0;
    double alpha_control = 10.0;
    double p = 0.5;
    int periods = 10000;
    int batch = 128;
    int warmup_periods = 200;
    int production_burnin_periods = 200;
    double lr_sgd = 0.1;
    double lr_adam = 0.001;
    Method method = Method::kWeighted;
    EnvParams env = EnvParams::defaults();
    std::uint64_t seed = 0;
    /// Clamp propensities to [eps, 1 - eps] before forming weights.
    std::optional<double> clip_epsilon;
    /// Replace the weighting network's output by this constant when forming
    /// weights. Diagnostic hook; the network is still trained.
    std::optional<double> forced_propensity;
    int weightnet_hidden = 64;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Which arm each arriving user joins.
enum class Assignment { kRandom, kAllTreatment, kAllControl };

/// The four per-replication random streams. Methods run on the same seed see
/// the same users, candidates and outcome uniforms.
struct ReplicationStreams {
    Stream environment;
    Stream assignment;
    Stream outcome;
    Stream model_init;

    static ReplicationStreams from_seed(std::uint64_t seed);
    /// Streams for the production-model burn-in, disjoint from the above.
    static ReplicationStreams burnin_from_seed(std::uint64_t seed);
};

struct LoopState {
    Method method = Method::kPooling;
    Assignment assignment = Assignment::kRandom;
    /// Indexed by arm (0 = control, 1 = treatment). Pooling and snapshot
    /// serve every user from models[0].
    std::array<PredictorModel, 2> models;
    WeightNet weight_net;
    int period = 0;
    std::vector<Interaction> log;

    bool shared_model() const noexcept { return method == Method::kPooling || method == Method::kSnapshot; }
    const PredictorModel& model_for(int z) const noexcept { return models[shared_model() ? 0 : z]; }
};

/// Index of the highest alpha * fr_hat + sd_hat; ties go to the lowest index.
std::size_t rank_and_choose(const PredictorModel& model, double alpha, std::span<const Candidate> candidates);
/// Same rule applied to precomputed predictions.
std::size_t choose_best(double alpha, std::span<const Prediction> predictions);

/// 1 with probability p (one uniform from the assignment stream).
int assign(Stream& rng, double p);

struct ArmWeights {
    double treatment = 1.0;
    double control = 1.0;
};

/// (g / p, (1 - g) / (1 - p)). Throws ConfigError("p") unless 0 < p < 1.
ArmWeights compute_weights(double g_out, double p);

/// Burn-in under global control from a zero model, unweighted SGD, on the
/// seed's dedicated burn-in streams.
PredictorModel make_production_model(std::uint64_t seed, const ExperimentConfig& config);

/// Fresh experiment state: both arm models set to `production`, the weighting
/// network initialised from the model-init stream.
LoopState initial_state(const ExperimentConfig& config, const PredictorModel& production,
                        ReplicationStreams& streams, Assignment assignment = Assignment::kRandom);

/// Serves one period of `config.batch` users, then applies the method's
/// model updates. Throws ContractError once all periods have run.
void run_period(LoopState& state, const ExperimentConfig& config, ReplicationStreams& streams);

/// The update half of a period: trains the method's models on `batch` (the
/// users just served in period `period`). `rows` are those users' log rows;
/// weighted updates record propensities and weights there.
void apply_updates(LoopState& state, const ExperimentConfig& config, int period, const Batch& batch,
                   std::span<Interaction> rows);

/// Production model, then every experiment period. Keeps the full log.
LoopState run_experiment(const ExperimentConfig& config);

/// Estimates and experimentation values from a finished experiment.
ReplicationResult summarize(const LoopState& state, const ExperimentConfig& config, int rep = 0);

ReplicationResult run_replication(const ExperimentConfig& config, int rep = 0);

struct GlobalResult {
    MetricVector means;
    double value = 0.0;  ///< mean alpha_arm * finished + stay_duration
};

/// Everyone in one arm, one model trained unweighted on all data. The
/// assignment stream is never touched, so the result does not depend on p.
GlobalResult run_global(const ExperimentConfig& config, int arm);

/// Writes the interaction log CSV:
/// period,user_index,z,is_short,finished,stay_duration,fr_hat,sd_hat,g_out
void write_log_csv(std::ostream& out, std::span<const Interaction> log);

}  // namespace abloop
