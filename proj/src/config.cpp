#include "abloop/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "abloop/errors.hpp"

namespace abloop {

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "alpha_treatment", "alpha_control", "p", "periods", "batch", "n_candidates",
        "feature_dim", "warmup_periods", "production_burnin_periods", "lr_sgd", "lr_adam",
        "methods", "replications", "base_seed", "threads", "emit_logs", "emit_plots", "clip_epsilon"};
    return keys;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool known_key(const std::string& key) {
    const auto& keys = config_keys();
    return std::find(keys.begin(), keys.end(), key) != keys.end();
}

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x))
        throw ConfigError(key, key + ": expected a finite number, got '" + v + "'");
    return x;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
    Int x{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError(key, key + ": expected an integer, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void RunSpec::validate() const {
    experiment.validate();
    if (replications < 1) throw ConfigError("replications", "replications must be >= 1");
    if (methods.empty()) throw ConfigError("methods", "methods must name at least one method");
    if (threads < 1) throw ConfigError("threads", "threads must be >= 1");
    if (!(experiment.p > 0.0 && experiment.p < 1.0))
        throw ConfigError("p", "an A/B study needs both arms: 0 < p < 1");
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "line " + std::to_string(lineno) + ": expected key=value");
        const auto key = trim(std::string_view(body).substr(0, eq));
        const auto value = trim(std::string_view(body).substr(eq + 1));
        if (!known_key(key)) throw ConfigError(key, "unknown configuration key '" + key + "'");
        if (!out.emplace(key, value).second) throw ConfigError(key, "duplicate configuration key '" + key + "'");
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("", "cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

RunSpec make_run_spec(const std::map<std::string, std::string>& settings) {
    for (const auto& [key, value] : settings)
        if (!known_key(key)) throw ConfigError(key, "unknown configuration key '" + key + "'");
    for (const char* required : {"alpha_treatment", "alpha_control", "p"})
        if (!settings.count(required))
            throw ConfigError(required, std::string("missing required key '") + required + "'");

    auto get = [&](const std::string& key) -> const std::string* {
        const auto it = settings.find(key);
        return it == settings.end() ? nullptr : &it->second;
    };

    RunSpec spec;
    auto& e = spec.experiment;
    e.alpha_treatment = to_double("alpha_treatment", *get("alpha_treatment"));
    e.alpha_control = to_double("alpha_control", *get("alpha_control"));
    e.p = to_double("p", *get("p"));
    if (auto v = get("periods")) e.periods = to_int<int>("periods", *v);
    if (auto v = get("batch")) e.batch = to_int<int>("batch", *v);
    int feature_dim = 10, n_candidates = 100;
    if (auto v = get("feature_dim")) feature_dim = to_int<int>("feature_dim", *v);
    if (auto v = get("n_candidates")) n_candidates = to_int<int>("n_candidates", *v);
    if (auto v = get("warmup_periods")) e.warmup_periods = to_int<int>("warmup_periods", *v);
    if (auto v = get("production_burnin_periods"))
        e.production_burnin_periods = to_int<int>("production_burnin_periods", *v);
    if (auto v = get("lr_sgd")) e.lr_sgd = to_double("lr_sgd", *v);
    if (auto v = get("lr_adam")) e.lr_adam = to_double("lr_adam", *v);
    if (auto v = get("clip_epsilon"); v && !v->empty() && *v != "none")
        e.clip_epsilon = to_double("clip_epsilon", *v);
    if (auto v = get("methods")) {
        spec.methods.clear();
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto name = trim(item);
            if (name.empty()) continue;
            const Method m = parse_method(name);
            if (std::find(spec.methods.begin(), spec.methods.end(), m) != spec.methods.end())
                throw ConfigError("methods", "method '" + name + "' listed twice");
            spec.methods.push_back(m);
        }
    }
    if (auto v = get("replications")) spec.replications = to_int<int>("replications", *v);
    if (auto v = get("base_seed")) spec.base_seed = to_int<std::uint64_t>("base_seed", *v);
    if (auto v = get("threads")) spec.threads = to_int<int>("threads", *v);
    if (auto v = get("emit_logs")) spec.emit_logs = to_bool("emit_logs", *v);
    if (auto v = get("emit_plots")) spec.emit_plots = to_bool("emit_plots", *v);

    if (feature_dim < 1) throw ConfigError("feature_dim", "feature_dim must be >= 1");
    if (n_candidates < 2 || n_candidates % 2 != 0)
        throw ConfigError("n_candidates", "n_candidates must be an even number >= 2");
    e.env = EnvParams::defaults(feature_dim, n_candidates);
    spec.validate();
    return spec;
}

RunSpec parse_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides) {
    auto settings = path.empty() ? std::map<std::string, std::string>{} : read_config_file(path);
    for (const auto& [k, v] : overrides) settings[k] = v;
    return make_run_spec(settings);
}

std::string to_config_text(const RunSpec& spec) {
    const auto& e = spec.experiment;
    std::ostringstream out;
    out << "alpha_treatment=" << fmt_double(e.alpha_treatment) << '\n'
        << "alpha_control=" << fmt_double(e.alpha_control) << '\n'
        << "p=" << fmt_double(e.p) << '\n'
        << "periods=" << e.periods << '\n'
        << "batch=" << e.batch << '\n'
        << "n_candidates=" << e.env.n_candidates << '\n'
        << "feature_dim=" << e.env.feature_dim << '\n'
        << "warmup_periods=" << e.warmup_periods << '\n'
        << "production_burnin_periods=" << e.production_burnin_periods << '\n'
        << "lr_sgd=" << fmt_double(e.lr_sgd) << '\n'
        << "lr_adam=" << fmt_double(e.lr_adam) << '\n'
        << "methods=";
    for (std::size_t i = 0; i < spec.methods.size(); ++i)
        out << (i ? "," : "") << method_name(spec.methods[i]);
    out << '\n'
        << "replications=" << spec.replications << '\n'
        << "base_seed=" << spec.base_seed << '\n'
        << "threads=" << spec.threads << '\n'
        << "emit_logs=" << (spec.emit_logs ? "true" : "false") << '\n'
        << "emit_plots=" << (spec.emit_plots ? "true" : "false") << '\n'
        << "clip_epsilon=" << (e.clip_epsilon ? fmt_double(*e.clip_epsilon) : "none") << '\n';
    return out.str();
}

}  // namespace abloop
