// abloop: run weighted-training / splitting / pooling / snapshot A/B studies
// on the simulated recommender feedback loop.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "abloop/config.hpp"
#include "abloop/errors.hpp"
#include "abloop/reweight.hpp"
#include "abloop/study.hpp"

namespace {

struct StudyOptions {
    std::string config_path;
    std::string out_dir = "abloop-out";
    std::map<std::string, std::string> overrides;
};

// Every config key doubles as a --key flag.
void add_study_options(CLI::App* cmd, StudyOptions& opts) {
    cmd->add_option("-c,--config", opts.config_path, "key=value configuration file");
    cmd->add_option("-o,--out", opts.out_dir, "output directory")->capture_default_str();
    for (const auto& key : abloop::config_keys()) {
        cmd->add_option_function<std::string>(
            "--" + key, [&opts, key](const std::string& v) { opts.overrides[key] = v; },
            "override '" + key + "'");
    }
}

abloop::RunSpec load_spec(const StudyOptions& opts) {
    auto spec = abloop::parse_config(opts.config_path, opts.overrides);
    spec.output_dir = opts.out_dir;
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feedback-loop A/B testing simulator"};
    app.require_subcommand(1);

    StudyOptions sim_opts, gte_opts;
    auto* simulate = app.add_subcommand("simulate", "run a study and write CSV/JSON/SVG outputs");
    add_study_options(simulate, sim_opts);
    auto* gte = app.add_subcommand("gte", "estimate the global treatment effect only");
    add_study_options(gte, gte_opts);

    std::uint64_t oracle_seed = 0;
    int oracle_spaces = 100, oracle_perturbations = 100;
    std::size_t oracle_atoms = 50;
    auto* oracle = app.add_subcommand("oracle", "check the reweighting identities on random discrete spaces");
    oracle->add_option("--seed", oracle_seed)->capture_default_str();
    oracle->add_option("--spaces", oracle_spaces)->capture_default_str()->check(CLI::PositiveNumber);
    oracle->add_option("--perturbations", oracle_perturbations)->capture_default_str()->check(CLI::NonNegativeNumber);
    oracle->add_option("--max-atoms", oracle_atoms)->capture_default_str()->check(CLI::PositiveNumber);

    std::string report_dir;
    auto* report = app.add_subcommand("report", "print summary tables for a finished study");
    report->add_option("dir", report_dir, "study output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) {
            const auto spec = load_spec(sim_opts);
            abloop::run_study(spec);
            std::cout << abloop::report(spec.output_dir);
        } else if (*gte) {
            const auto spec = load_spec(gte_opts);
            std::cout << abloop::gte_json(abloop::run_gte_only(spec));
        } else if (*oracle) {
            const auto r = abloop::run_oracle_battery(oracle_seed, oracle_spaces, oracle_perturbations, oracle_atoms);
            const nlohmann::json j = {{"spaces", r.spaces},
                                      {"perturbations_per_space", r.perturbations_per_space},
                                      {"max_unbiasedness_deviation", r.max_unbiasedness_deviation},
                                      {"max_normalization_error", r.max_normalization_error},
                                      {"max_optimality_violation", r.max_optimality_violation},
                                      {"min_optimality_gap", r.min_optimality_gap},
                                      {"pass", r.max_unbiasedness_deviation <= 1e-12 && r.max_optimality_violation <= 1e-12}};
            std::cout << j.dump(2) << '\n';
            return j["pass"].get<bool>() ? 0 : 1;
        } else if (*report) {
            std::cout << abloop::report(report_dir);
        }
    } catch (const abloop::ConfigError& e) {
        std::cerr << "abloop: configuration error";
        if (!e.key().empty()) std::cerr << " [" << e.key() << "]";
        std::cerr << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "abloop: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
