#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "abloop/config.hpp"
#include "abloop/designs.hpp"
#include "abloop/errors.hpp"
#include "abloop/reweight.hpp"
#include "abloop/study.hpp"

namespace py = pybind11;
using namespace abloop;

namespace {

py::dict metrics_dict(const MetricVector& m) {
    py::dict d;
    for (Metric k : kAllMetrics) d[py::str(std::string(metric_name(k)))] = m[k];
    return d;
}

// Column-wise copy of an interaction log.
py::dict log_arrays(const std::vector<Interaction>& log) {
    const auto n = static_cast<py::ssize_t>(log.size());
    py::array_t<int> period(n), user(n), z(n), is_short(n), finished(n);
    py::array_t<double> stay(n), fr_hat(n), sd_hat(n), g_out(n), w_t(n), w_c(n);
    for (py::ssize_t i = 0; i < n; ++i) {
        const auto& r = log[static_cast<std::size_t>(i)];
        period.mutable_at(i) = r.period;
        user.mutable_at(i) = r.user_index;
        z.mutable_at(i) = r.z;
        is_short.mutable_at(i) = r.is_short ? 1 : 0;
        finished.mutable_at(i) = r.finished;
        stay.mutable_at(i) = r.stay_duration;
        fr_hat.mutable_at(i) = r.fr_hat;
        sd_hat.mutable_at(i) = r.sd_hat;
        g_out.mutable_at(i) = r.g_out;
        w_t.mutable_at(i) = r.w_treatment;
        w_c.mutable_at(i) = r.w_control;
    }
    py::dict d;
    d["period"] = period;
    d["user_index"] = user;
    d["z"] = z;
    d["is_short"] = is_short;
    d["finished"] = finished;
    d["stay_duration"] = stay;
    d["fr_hat"] = fr_hat;
    d["sd_hat"] = sd_hat;
    d["g_out"] = g_out;
    d["w_treatment"] = w_t;
    d["w_control"] = w_c;
    return d;
}

py::dict gte_dict(const GteEstimate& g) {
    py::dict d;
    d["estimate"] = metrics_dict(g.estimate);
    d["std_error"] = metrics_dict(g.std_error);
    d["replications"] = g.replications;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Feedback-loop A/B testing simulator";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<SchemaError>(m, "SchemaError", PyExc_RuntimeError);
    py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);

    m.def("split_seed", [](std::uint64_t seed, const std::string& label) { return split_seed(seed, label); });

    py::class_<Stream>(m, "Stream")
        .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
        .def("next", [](Stream& s) { return s(); })
        .def("uniform", &Stream::uniform)
        .def("bernoulli", &Stream::bernoulli)
        .def("exponential_mean", &Stream::exponential_mean)
        .def(py::self == py::self);

    // env
    py::class_<EnvParams>(m, "EnvParams")
        .def(py::init<>())
        .def_static("defaults", &EnvParams::defaults, py::arg("feature_dim") = 10, py::arg("n_candidates") = 100)
        .def_readwrite("feature_dim", &EnvParams::feature_dim)
        .def_readwrite("n_candidates", &EnvParams::n_candidates)
        .def_readwrite("beta_fr_short", &EnvParams::beta_fr_short)
        .def_readwrite("beta_fr_long", &EnvParams::beta_fr_long)
        .def_readwrite("beta_sd_short", &EnvParams::beta_sd_short)
        .def_readwrite("beta_sd_long", &EnvParams::beta_sd_long)
        .def_readwrite("fr_offset", &EnvParams::fr_offset)
        .def("validate", &EnvParams::validate);

    py::class_<Candidate>(m, "Candidate")
        .def(py::init([](std::vector<double> features, bool is_short) { return Candidate{std::move(features), is_short}; }),
             py::arg("features"), py::arg("is_short"))
        .def_readwrite("features", &Candidate::features)
        .def_readwrite("is_short", &Candidate::is_short);

    py::class_<Outcome>(m, "Outcome")
        .def(py::init([](int finished, double stay) { return Outcome{finished, stay}; }), py::arg("finished") = 0,
             py::arg("stay_duration") = 0.0)
        .def_readwrite("finished", &Outcome::finished)
        .def_readwrite("stay_duration", &Outcome::stay_duration);

    m.def("sigmoid", &sigmoid);
    m.def("sample_candidates", py::overload_cast<Stream&, const EnvParams&>(&sample_candidates));
    m.def("true_fr", &true_fr);
    m.def("true_mean_sd", &true_mean_sd);
    m.def("realize_outcome", &realize_outcome);

    // mlcore
    py::class_<PredictorModel>(m, "PredictorModel")
        .def(py::init<>())
        .def_static("zeros", &PredictorModel::zeros)
        .def_readwrite("fr_weights", &PredictorModel::fr_weights)
        .def_readwrite("sd_weights", &PredictorModel::sd_weights)
        .def(py::self == py::self);

    py::class_<Prediction>(m, "Prediction")
        .def_readonly("fr", &Prediction::fr)
        .def_readonly("sd", &Prediction::sd)
        .def("__repr__", [](const Prediction& p) {
            return "Prediction(fr=" + std::to_string(p.fr) + ", sd=" + std::to_string(p.sd) + ")";
        });

    m.def("predict", [](const PredictorModel& model, const std::vector<double>& features, bool is_short) {
        return predict(model, features, is_short ? 1 : 0);
    });

    py::class_<Batch>(m, "Batch")
        .def(py::init<>())
        .def("add",
             [](Batch& b, std::vector<double> features, bool is_short, int finished, double stay, int z) {
                 b.push_back(ModelInput{std::move(features), is_short ? 1 : 0}, Outcome{finished, stay}, z);
             },
             py::arg("features"), py::arg("is_short"), py::arg("finished"), py::arg("stay_duration"), py::arg("z"))
        .def("__len__", &Batch::size);

    m.def("predictor_loss", [](const PredictorModel& model, const Batch& b, const std::vector<double>& w) {
        return predictor_loss(model, b, w);
    });
    m.def("weighted_sgd_step",
          [](const PredictorModel& model, const Batch& b, const std::vector<double>& w, double lr) {
              return weighted_sgd_step(model, b, w, lr);
          },
          py::arg("model"), py::arg("batch"), py::arg("weights"), py::arg("lr"));

    py::class_<WeightNet>(m, "WeightNet")
        .def_static("init", &WeightNet::init, py::arg("input_dim"), py::arg("rng"), py::arg("hidden") = 64)
        .def_static("zeros", &WeightNet::zeros, py::arg("input_dim"), py::arg("hidden") = 64)
        .def_readonly("input_dim", &WeightNet::input_dim)
        .def_readonly("hidden", &WeightNet::hidden)
        .def_readwrite("params", &WeightNet::params)
        .def_readonly("adam_step", &WeightNet::adam_step);

    m.def("weightnet_forward", [](const WeightNet& net, std::vector<double> features, bool is_short) {
        return weightnet_forward(net, ModelInput{std::move(features), is_short ? 1 : 0});
    });
    m.def("weightnet_loss", &weightnet_loss);
    m.def("weightnet_adam_step", [](const WeightNet& net, const Batch& b, double lr) {
        return weightnet_adam_step(net, b, lr);
    });

    py::enum_<LossKind>(m, "LossKind")
        .value("FR_HEAD", LossKind::kFrHead)
        .value("SD_HEAD", LossKind::kSdHead)
        .value("PREDICTOR", LossKind::kPredictor)
        .value("WEIGHTNET", LossKind::kWeightNet);
    m.def("gradient_check",
          [](LossKind kind, const std::vector<double>& params, const Batch& b, const std::vector<double>& w, double h,
             int hidden) { return gradient_check(kind, params, b, w, h, hidden); },
          py::arg("kind"), py::arg("params"), py::arg("batch"), py::arg("weights") = std::vector<double>{},
          py::arg("h") = 1e-5, py::arg("hidden") = 64);

    // designs
    py::enum_<Method>(m, "Method")
        .value("WEIGHTED", Method::kWeighted)
        .value("SPLITTING", Method::kSplitting)
        .value("POOLING", Method::kPooling)
        .value("SNAPSHOT", Method::kSnapshot);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("alpha_treatment", &ExperimentConfig::alpha_treatment)
        .def_readwrite("alpha_control", &ExperimentConfig::alpha_control)
        .def_readwrite("p", &ExperimentConfig::p)
        .def_readwrite("periods", &ExperimentConfig::periods)
        .def_readwrite("batch", &ExperimentConfig::batch)
        .def_readwrite("warmup_periods", &ExperimentConfig::warmup_periods)
        .def_readwrite("production_burnin_periods", &ExperimentConfig::production_burnin_periods)
        .def_readwrite("lr_sgd", &ExperimentConfig::lr_sgd)
        .def_readwrite("lr_adam", &ExperimentConfig::lr_adam)
        .def_readwrite("method", &ExperimentConfig::method)
        .def_readwrite("env", &ExperimentConfig::env)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("clip_epsilon", &ExperimentConfig::clip_epsilon)
        .def_readwrite("forced_propensity", &ExperimentConfig::forced_propensity)
        .def_readwrite("weightnet_hidden", &ExperimentConfig::weightnet_hidden)
        .def("validate", &ExperimentConfig::validate);

    m.def("compute_weights", [](double g, double p) {
        const auto w = compute_weights(g, p);
        return py::make_tuple(w.treatment, w.control);
    });
    m.def("rank_and_choose", [](const PredictorModel& model, double alpha, const std::vector<Candidate>& c) {
        return rank_and_choose(model, alpha, c);
    });
    m.def("choose_best", [](double alpha, const std::vector<std::pair<double, double>>& preds) {
        std::vector<Prediction> p;
        for (const auto& [fr, sd] : preds) p.push_back({fr, sd});
        return choose_best(alpha, p);
    });
    m.def("assign", &assign);
    m.def("make_production_model", &make_production_model);

    py::class_<Contrast>(m, "Contrast")
        .def_readonly("treatment_mean", &Contrast::treatment_mean)
        .def_readonly("control_mean", &Contrast::control_mean)
        .def_readonly("estimate", &Contrast::estimate)
        .def_readonly("se", &Contrast::se);

    py::class_<ReplicationResult>(m, "ReplicationResult")
        .def_readonly("method", &ReplicationResult::method)
        .def_readonly("rep", &ReplicationResult::rep)
        .def_readonly("seed", &ReplicationResult::seed)
        .def_readonly("treatment_value", &ReplicationResult::treatment_value)
        .def_readonly("control_value", &ReplicationResult::control_value)
        .def_readonly("weightnet_logloss_bits", &ReplicationResult::weightnet_logloss_bits)
        .def_property_readonly("metrics", [](const ReplicationResult& r) {
            py::dict d;
            for (Metric k : kAllMetrics) d[py::str(std::string(metric_name(k)))] = r[k];
            return d;
        });

    m.def("run_replication", [](const ExperimentConfig& c) { return run_replication(c); }, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("run_experiment_log", [](const ExperimentConfig& c) {
        std::vector<Interaction> log;
        {
            py::gil_scoped_release release;
            log = run_experiment(c).log;
        }
        return log_arrays(log);
    }, py::arg("config"), "Runs one experiment and returns its interaction log as numpy columns.");
    m.def("run_global", [](const ExperimentConfig& c, int arm) {
        GlobalResult g;
        {
            py::gil_scoped_release release;
            g = run_global(c, arm);
        }
        py::dict d = metrics_dict(g.means);
        d["value"] = g.value;
        return d;
    }, py::arg("config"), py::arg("arm"));

    // reweight
    py::class_<DiscreteSpace>(m, "DiscreteSpace")
        .def(py::init([](std::vector<double> t, std::vector<double> c, double p) {
                 DiscreteSpace s{std::move(t), std::move(c), p};
                 s.validate();
                 return s;
             }),
             py::arg("prob_treatment"), py::arg("prob_control"), py::arg("p"))
        .def_readonly("prob_treatment", &DiscreteSpace::prob_treatment)
        .def_readonly("prob_control", &DiscreteSpace::prob_control)
        .def_readonly("p", &DiscreteSpace::p);
    m.def("experiment_distribution", &experiment_distribution);
    m.def("treatment_propensity", &treatment_propensity);
    m.def("oracle_weights", [](const DiscreteSpace& s) {
        const auto w = oracle_weights(s);
        return py::make_tuple(w.treatment.when_treatment, w.control.when_control);
    }, "Per-atom treatment and control weights.");
    m.def("run_oracle_battery", [](std::uint64_t seed, int spaces, int perturbations, std::size_t max_atoms) {
        const auto r = run_oracle_battery(seed, spaces, perturbations, max_atoms);
        py::dict d;
        d["spaces"] = r.spaces;
        d["max_unbiasedness_deviation"] = r.max_unbiasedness_deviation;
        d["max_normalization_error"] = r.max_normalization_error;
        d["max_optimality_violation"] = r.max_optimality_violation;
        d["min_optimality_gap"] = r.min_optimality_gap;
        return d;
    }, py::arg("seed") = 0, py::arg("spaces") = 100, py::arg("perturbations") = 100, py::arg("max_atoms") = 50);

    // stats
    m.def("normal_critical_value", &normal_critical_value);
    m.def("t_reject", &t_reject, py::arg("estimate"), py::arg("se"), py::arg("level") = 0.95);

    // study / config
    py::class_<RunSpec>(m, "RunSpec")
        .def_readwrite("experiment", &RunSpec::experiment)
        .def_readwrite("replications", &RunSpec::replications)
        .def_readwrite("methods", &RunSpec::methods)
        .def_readwrite("base_seed", &RunSpec::base_seed)
        .def_readwrite("threads", &RunSpec::threads)
        .def_readwrite("output_dir", &RunSpec::output_dir)
        .def_readwrite("emit_logs", &RunSpec::emit_logs)
        .def_readwrite("emit_plots", &RunSpec::emit_plots)
        .def("validate", &RunSpec::validate)
        .def("__str__", &to_config_text);

    m.def("config_keys", &config_keys);
    m.def("make_run_spec", &make_run_spec, py::arg("settings"));
    m.def("parse_config", &parse_config, py::arg("path"),
          py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("run_study", [](const RunSpec& spec) {
        StudyResult r;
        {
            py::gil_scoped_release release;
            r = run_study(spec);
        }
        py::dict d;
        d["replications"] = r.replications;
        d["gte"] = gte_dict(r.gte);
        py::list summaries;
        for (const auto& s : r.summaries) {
            py::dict sd;
            sd["method"] = s.method;
            sd["replications"] = s.replications;
            for (Metric k : kAllMetrics) {
                const auto& ms = s[k];
                py::dict md;
                md["bias"] = ms.bias;
                md["std"] = ms.std;
                md["mean_se"] = ms.mean_se;
                md["type1_rate"] = ms.type1_rate;
                md["mean_estimate"] = ms.mean_estimate;
                sd[py::str(std::string(metric_name(k)))] = md;
            }
            sd["mean_treatment_value"] = s.mean_treatment_value;
            sd["mean_control_value"] = s.mean_control_value;
            summaries.append(sd);
        }
        d["summaries"] = summaries;
        return d;
    }, py::arg("spec"));
    m.def("report", &report, py::arg("output_dir"));
}
