#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "abloop/designs.hpp"

namespace abloop {

/// A complete study: the experiment template plus replication settings.
struct RunSpec {
    ExperimentConfig experiment;  // `method` and `seed` are set per task
    int replications = 100;
    std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
    std::uint64_t base_seed = 0;
    int threads = 1;
    std::filesystem::path output_dir = "abloop-out";
    bool emit_logs = false;
    bool emit_plots = true;

    StudyMode mode() const noexcept {
        return experiment.alpha_treatment == experiment.alpha_control ? StudyMode::kAA : StudyMode::kAB;
    }
    void validate() const;
};

/// Recognised configuration keys, in documentation order.
const std::vector<std::string>& config_keys();

/// Raw key=value pairs. Blank lines and lines starting with '#' are skipped;
/// a trailing "# ..." comment is stripped. Throws ConfigError for malformed
/// lines, duplicate keys or unknown keys.
std::map<std::string, std::string> parse_config_text(std::string_view text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Builds a validated RunSpec from settings. alpha_treatment, alpha_control
/// and p are required; everything else defaults to the reference setup
/// (T = 10000, B = 128, N = 100, d = 10, lr 0.1 / 0.001, warm-up 200).
RunSpec make_run_spec(const std::map<std::string, std::string>& settings);

/// File settings overlaid with command-line overrides.
RunSpec parse_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides = {});

/// Canonical key=value rendering of a spec (round-trips through parse).
std::string to_config_text(const RunSpec& spec);

}  // namespace abloop
