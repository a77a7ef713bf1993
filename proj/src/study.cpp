#include "abloop/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "abloop/errors.hpp"
#include "abloop/violin.hpp"

namespace abloop {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t replication_seed(std::uint64_t base_seed, int rep) {
    return split_seed(base_seed, "rep:" + std::to_string(rep));
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                        failed = true;
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Ground truth

GteEstimate gte_from_pairs(std::vector<GlobalPair> pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.rep < b.rep; });
    GteEstimate out;
    out.replications = static_cast<int>(pairs.size());
    for (Metric m : kAllMetrics) {
        std::vector<double> diffs;
        for (const auto& p : pairs) diffs.push_back(p.treatment.means[m] - p.control.means[m]);
        const auto ms = mean_sem(diffs);
        out.estimate[m] = ms.mean;
        out.std_error[m] = ms.sem;
    }
    out.pairs = std::move(pairs);
    return out;
}

GteEstimate compute_gte(const RunSpec& spec) {
    const auto reps = static_cast<std::size_t>(spec.replications);
    std::vector<GlobalPair> pairs(reps);
    parallel_for(2 * reps, spec.threads, [&](std::size_t task) {
        const auto rep = static_cast<int>(task / 2);
        const int arm = task % 2 == 0 ? 1 : 0;
        ExperimentConfig cfg = spec.experiment;
        cfg.seed = replication_seed(spec.base_seed, rep);
        auto result = run_global(cfg, arm);
        auto& pair = pairs[task / 2];
        pair.rep = rep;
        (arm ? pair.treatment : pair.control) = result;
    });
    return gte_from_pairs(std::move(pairs));
}

std::string gte_cache_key(const RunSpec& spec) {
    const auto& e = spec.experiment;
    std::ostringstream s;
    s << std::setprecision(17) << "v1|d=" << e.env.feature_dim << "|n=" << e.env.n_candidates << "|off=" << e.env.fr_offset;
    for (const auto* beta : {&e.env.beta_fr_short, &e.env.beta_fr_long, &e.env.beta_sd_short, &e.env.beta_sd_long}) {
        s << '|';
        for (double b : *beta) s << b << ',';
    }
    s << "|aT=" << e.alpha_treatment << "|aC=" << e.alpha_control << "|T=" << e.periods << "|B=" << e.batch
      << "|burn=" << e.production_burnin_periods << "|lr=" << e.lr_sgd << "|seed=" << spec.base_seed
      << "|reps=" << spec.replications;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s.str())));
    return buf;
}

namespace {

json global_to_json(const GlobalResult& g) {
    return {{"short_proportion", g.means.short_proportion},
            {"stay_duration", g.means.stay_duration},
            {"finishing_rate", g.means.finishing_rate},
            {"value", g.value}};
}

GlobalResult global_from_json(const json& j) {
    GlobalResult g;
    g.means.short_proportion = j.at("short_proportion").get<double>();
    g.means.stay_duration = j.at("stay_duration").get<double>();
    g.means.finishing_rate = j.at("finishing_rate").get<double>();
    g.value = j.at("value").get<double>();
    return g;
}

std::string cache_json(const std::string& key, const GteEstimate& gte) {
    json pairs = json::array();
    for (const auto& p : gte.pairs)
        pairs.push_back({{"rep", p.rep}, {"treatment", global_to_json(p.treatment)}, {"control", global_to_json(p.control)}});
    return json{{"key", key}, {"pairs", pairs}}.dump(1) + "\n";
}

std::optional<GteEstimate> load_cache(const fs::path& path, const std::string& key) {
    std::ifstream f(path);
    if (!f) return std::nullopt;
    try {
        const auto j = json::parse(f);
        if (j.at("key").get<std::string>() != key) return std::nullopt;
        std::vector<GlobalPair> pairs;
        for (const auto& p : j.at("pairs"))
            pairs.push_back({p.at("rep").get<int>(), global_from_json(p.at("treatment")), global_from_json(p.at("control"))});
        return gte_from_pairs(std::move(pairs));
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

/// Files are written next to their destination with a ".partial" suffix and
/// renamed on commit; anything uncommitted is deleted on destruction.
class Staging {
  public:
    explicit Staging(fs::path dir) : dir_(std::move(dir)) {}
    Staging(const Staging&) = delete;
    Staging& operator=(const Staging&) = delete;
    ~Staging() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& name : names_) fs::remove_all(partial(name), ec);
    }

    fs::path stage(const std::string& name) {
        names_.push_back(name);
        return partial(name);
    }

    void write(const std::string& name, const std::string& content) {
        const auto path = stage(name);
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << content;
        if (!f.flush()) throw std::runtime_error("write failed for " + path.string());
    }

    void commit() {
        for (const auto& name : names_) {
            const auto target = dir_ / name;
            std::error_code ec;
            fs::remove_all(target, ec);
            fs::rename(partial(name), target, ec);
            if (ec) throw std::runtime_error("cannot move output into place at " + target.string() + ": " + ec.message());
        }
        committed_ = true;
    }

  private:
    fs::path partial(const std::string& name) const { return dir_ / (name + ".partial"); }

    fs::path dir_;
    std::vector<std::string> names_;
    bool committed_ = false;
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

GteEstimate cached_gte(const RunSpec& spec, Staging& staging) {
    if (spec.mode() == StudyMode::kAA) {
        GteEstimate zero;
        staging.write("gte.json", gte_json(zero));
        return zero;
    }
    const auto key = gte_cache_key(spec);
    auto gte = load_cache(spec.output_dir / "gte_cache.json", key);
    if (!gte) gte = compute_gte(spec);
    staging.write("gte_cache.json", cache_json(key, *gte));
    staging.write("gte.json", gte_json(*gte));
    return *gte;
}

}  // namespace

std::string gte_json(const GteEstimate& gte) {
    json j = json::object();
    for (Metric m : kAllMetrics)
        j[std::string(metric_name(m))] = {
            {"estimate", gte.estimate[m]}, {"std_error", gte.std_error[m]}, {"replications", gte.replications}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Replications

std::vector<ReplicationResult> run_replications(const RunSpec& spec) {
    std::vector<Method> methods = spec.methods;
    std::sort(methods.begin(), methods.end());
    const auto reps = static_cast<std::size_t>(spec.replications);
    std::vector<ReplicationResult> results(methods.size() * reps);
    parallel_for(results.size(), spec.threads, [&](std::size_t task) {
        ExperimentConfig cfg = spec.experiment;
        cfg.method = methods[task / reps];
        const auto rep = static_cast<int>(task % reps);
        cfg.seed = replication_seed(spec.base_seed, rep);
        if (spec.emit_logs) {
            const auto state = run_experiment(cfg);
            const auto path = spec.output_dir / "logs.partial" /
                              (std::string(method_name(cfg.method)) + "_rep" + std::to_string(rep) + ".csv");
            std::ofstream f(path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + path.string());
            write_log_csv(f, state.log);
            results[task] = summarize(state, cfg, rep);
        } else {
            results[task] = run_replication(cfg, rep);
        }
    });
    return results;
}

std::string format6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

void write_replications_csv(std::ostream& out, const std::vector<ReplicationResult>& results) {
    out << "method,rep,seed,metric,treatment_mean,control_mean,estimate,se,weightnet_logloss_bits\n";
    for (const auto& r : results)
        for (Metric m : kAllMetrics) {
            const auto& c = r[m];
            out << method_name(r.method) << ',' << r.rep << ',' << r.seed << ',' << metric_name(m) << ','
                << format6(c.treatment_mean) << ',' << format6(c.control_mean) << ',' << format6(c.estimate) << ','
                << format6(c.se) << ',' << (r.weightnet_logloss_bits ? format6(*r.weightnet_logloss_bits) : "")
                << '\n';
        }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryStats>& summaries) {
    out << "method,metric,bias,std,mean_se,type1_rate,mean_estimate\n";
    for (const auto& s : summaries)
        for (Metric m : kAllMetrics) {
            const auto& x = s[m];
            out << method_name(s.method) << ',' << metric_name(m) << ',' << format6(x.bias) << ',' << format6(x.std)
                << ',' << format6(x.mean_se) << ',' << format6(x.type1_rate) << ',' << format6(x.mean_estimate)
                << '\n';
        }
}

void write_values_csv(std::ostream& out, const std::vector<ReplicationResult>& results,
                      const std::vector<GlobalPair>& global) {
    out << "method,rep,treatment_value,control_value\n";
    for (const auto& g : global)
        out << "global," << g.rep << ',' << format6(g.treatment.value) << ',' << format6(g.control.value) << '\n';
    for (const auto& r : results)
        out << method_name(r.method) << ',' << r.rep << ',' << format6(r.treatment_value) << ','
            << format6(r.control_value) << '\n';
}

StudyResult run_study(const RunSpec& spec) {
    spec.validate();
    ensure_dir(spec.output_dir);
    Staging staging(spec.output_dir);
    if (spec.emit_logs) ensure_dir(staging.stage("logs"));

    StudyResult study;
    study.gte = cached_gte(spec, staging);
    study.replications = run_replications(spec);

    const auto mode = spec.mode();
    for (Method m : kAllMethods) {
        std::vector<ReplicationResult> mine;
        for (const auto& r : study.replications)
            if (r.method == m) mine.push_back(r);
        if (mine.size() >= 2) study.summaries.push_back(aggregate(mine, study.gte.estimate, mode));
    }

    std::ostringstream reps_csv, summary_csv, values_csv;
    write_replications_csv(reps_csv, study.replications);
    write_summary_csv(summary_csv, study.summaries);
    write_values_csv(values_csv, study.replications, study.gte.pairs);
    staging.write("replications.csv", reps_csv.str());
    staging.write("summary.csv", summary_csv.str());
    staging.write("values.csv", values_csv.str());

    if (spec.emit_plots) {
        for (Metric m : kAllMetrics) {
            std::vector<ViolinGroup> groups;
            for (Method method : kAllMethods) {
                ViolinGroup g{std::string(method_name(method)), {}};
                for (const auto& r : study.replications)
                    if (r.method == method) g.values.push_back(r[m].estimate);
                if (!g.values.empty()) groups.push_back(std::move(g));
            }
            const std::string title = std::string("Treatment effect estimates: ") + std::string(metric_name(m));
            staging.write("violin_" + std::string(metric_name(m)) + ".svg",
                          violin_svg(title, groups, study.gte.estimate[m]));
        }
    }
    staging.commit();
    return study;
}

GteEstimate run_gte_only(const RunSpec& spec) {
    spec.validate();
    ensure_dir(spec.output_dir);
    Staging staging(spec.output_dir);
    auto gte = cached_gte(spec, staging);
    staging.commit();
    return gte;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
    static const std::vector<std::string> header = {"method", "metric", "bias", "std", "mean_se", "type1_rate",
                                                    "mean_estimate"};
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("summary.csv: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (split_csv_line(line) != header)
        throw SchemaError("summary.csv row 1: header must be method,metric,bias,std,mean_se,type1_rate,mean_estimate");
    std::vector<SummaryRow> rows;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw SchemaError("summary.csv row " + std::to_string(row) + ": expected " +
                              std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        SummaryRow r;
        r.method = cells[0];
        r.metric = cells[1];
        double* targets[] = {&r.bias, &r.std, &r.mean_se, &r.type1_rate, &r.mean_estimate};
        for (std::size_t k = 0; k < 5; ++k) {
            const auto& cell = cells[k + 2];
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v))
                throw SchemaError("summary.csv row " + std::to_string(row) + ", column '" + header[k + 2] +
                                  "': not a finite number: '" + cell + "'");
            *targets[k] = v;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string render_report(const std::vector<SummaryRow>& rows) {
    std::vector<std::string> metrics;
    for (const auto& r : rows)
        if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
    std::ostringstream out;
    char buf[160];
    for (const auto& metric : metrics) {
        out << metric << '\n';
        std::snprintf(buf, sizeof buf, "  %-12s %12s %12s %12s %12s\n", "method", "Bias", "STD", "SE", "Reject");
        out << buf;
        for (const auto& r : rows) {
            if (r.metric != metric) continue;
            std::snprintf(buf, sizeof buf, "  %-12s %12s %12s %12s %12s\n", r.method.c_str(), format6(r.bias).c_str(),
                          format6(r.std).c_str(), format6(r.mean_se).c_str(), format6(r.type1_rate).c_str());
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

std::string report(const fs::path& dir) {
    const auto path = dir / "summary.csv";
    std::ifstream f(path);
    if (!f) throw SchemaError("cannot open " + path.string());
    return render_report(read_summary_csv(f));
}

}  // namespace abloop
