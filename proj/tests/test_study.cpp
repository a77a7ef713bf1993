#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "abloop/errors.hpp"
#include "abloop/study.hpp"
#include "abloop/violin.hpp"

using namespace abloop;
namespace fs = std::filesystem;

namespace {

RunSpec tiny_spec(const fs::path& dir, int reps = 3) {
    RunSpec s;
    s.experiment.periods = 30;
    s.experiment.batch = 8;
    s.experiment.warmup_periods = 5;
    s.experiment.production_burnin_periods = 10;
    s.experiment.env = EnvParams::defaults(10, 10);
    s.replications = reps;
    s.base_seed = 11;
    s.output_dir = dir;
    return s;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("abloop-test-" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

std::size_t count_of(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("replication seeds") {
    CHECK(replication_seed(0, 0) == replication_seed(0, 0));
    CHECK(replication_seed(0, 0) != replication_seed(0, 1));
    CHECK(replication_seed(0, 0) != replication_seed(1, 0));
}

TEST_CASE("parallel_for covers every index and propagates errors") {
    std::vector<int> hits(50);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 7) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("single snapshot replication writes one row per metric") {
    auto spec = tiny_spec(scratch("single"), 1);
    spec.methods = {Method::kSnapshot};
    const auto result = run_study(spec);
    CHECK(result.replications.size() == 1);
    CHECK(result.summaries.empty());  // fewer than two replications
    const auto csv = slurp(spec.output_dir / "replications.csv");
    CHECK(count_lines(csv) == 1 + 3);
    CHECK(fs::exists(spec.output_dir / "gte.json"));
    fs::remove_all(spec.output_dir);
}

TEST_CASE("studies are reproducible and independent of thread count") {
    auto a = tiny_spec(scratch("det-a"));
    auto b = tiny_spec(scratch("det-b"));
    b.threads = 4;
    run_study(a);
    run_study(b);
    for (const char* f : {"replications.csv", "summary.csv", "values.csv", "gte.json"}) {
        INFO(f);
        const auto x = slurp(a.output_dir / f);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(b.output_dir / f));
    }
    // Reruns into the same directory are byte-identical.
    const auto before = slurp(a.output_dir / "replications.csv");
    run_study(a);
    CHECK(before == slurp(a.output_dir / "replications.csv"));
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
}

TEST_CASE("result ordering and schema") {
    auto spec = tiny_spec(scratch("schema"));
    spec.emit_logs = true;
    const auto r = run_study(spec);
    REQUIRE(r.replications.size() == 12);
    for (std::size_t i = 0; i < r.replications.size(); ++i) {
        CHECK(r.replications[i].method == kAllMethods[i / 3]);
        CHECK(r.replications[i].rep == int(i % 3));
    }
    CHECK(r.summaries.size() == 4);
    CHECK(r.gte.replications == 3);

    const auto csv = slurp(spec.output_dir / "replications.csv");
    CHECK(csv.rfind("method,rep,seed,metric,treatment_mean,control_mean,estimate,se", 0) == 0);
    CHECK(count_lines(csv) == 1 + 12 * 3);

    const auto values = slurp(spec.output_dir / "values.csv");
    CHECK(count_of(values, "\nglobal,") == 3);

    const auto gte = nlohmann::json::parse(slurp(spec.output_dir / "gte.json"));
    CHECK(gte.at("short_proportion").at("replications") == 3);
    CHECK(gte.at("stay_duration").contains("std_error"));

    for (Metric m : kAllMetrics)
        CHECK(fs::exists(spec.output_dir / ("violin_" + std::string(metric_name(m)) + ".svg")));
    CHECK(fs::exists(spec.output_dir / "logs" / "weighted_rep0.csv"));
    const auto log = slurp(spec.output_dir / "logs" / "pooling_rep2.csv");
    CHECK(count_lines(log) == 1 + 30 * 8);
    for (const auto& e : fs::directory_iterator(spec.output_dir))
        CHECK(e.path().extension() != ".partial");
    fs::remove_all(spec.output_dir);
}

TEST_CASE("A/A studies skip the global runs") {
    auto spec = tiny_spec(scratch("aa"));
    spec.experiment.alpha_treatment = spec.experiment.alpha_control = 10.0;
    const auto r = run_study(spec);
    CHECK(r.gte.replications == 0);
    CHECK(r.gte.estimate == MetricVector{});
    CHECK(r.summaries.size() == 4);
    fs::remove_all(spec.output_dir);
}

TEST_CASE("ground truth cache") {
    auto spec = tiny_spec(scratch("cache"));
    const auto first = run_gte_only(spec);
    const auto cache = spec.output_dir / "gte_cache.json";
    REQUIRE(fs::exists(cache));
    auto j = nlohmann::json::parse(slurp(cache));
    CHECK(j.at("key") == gte_cache_key(spec));

    // A cache with the right key is trusted as is.
    for (auto& pair : j["pairs"]) {
        pair["treatment"]["stay_duration"] = 123.0;
        pair["control"]["stay_duration"] = 100.0;
    }
    std::ofstream(cache) << j.dump();
    CHECK(run_gte_only(spec).estimate.stay_duration == 23.0);

    // Anything that changes the ground truth changes the key.
    auto other = spec;
    other.experiment.alpha_treatment = 8.0;
    CHECK(gte_cache_key(other) != gte_cache_key(spec));
    auto same = spec;
    same.threads = 3;
    same.methods = {Method::kPooling};
    CHECK(gte_cache_key(same) == gte_cache_key(spec));
    auto changed_p = spec;
    changed_p.experiment.p = 0.2;
    CHECK(gte_cache_key(changed_p) == gte_cache_key(spec));
    CHECK(first.replications == 3);
    fs::remove_all(spec.output_dir);
}

TEST_CASE("failed studies leave no partial files") {
    auto spec = tiny_spec(scratch("fail"));
    fs::create_directories(spec.output_dir / "summary.csv.partial" / "blocker");
    CHECK_THROWS(run_study(spec));
    CHECK_FALSE(fs::exists(spec.output_dir / "replications.csv.partial"));
    CHECK_FALSE(fs::exists(spec.output_dir / "replications.csv"));
    CHECK_FALSE(fs::exists(spec.output_dir / "values.csv.partial"));
    fs::remove_all(spec.output_dir);
}

TEST_CASE("report round trip") {
    auto spec = tiny_spec(scratch("report"));
    const auto r = run_study(spec);
    std::ifstream in(spec.output_dir / "summary.csv");
    const auto rows = read_summary_csv(in);
    REQUIRE(rows.size() == 12);
    for (const auto& row : rows) {
        const auto& s = *std::find_if(r.summaries.begin(), r.summaries.end(),
                                      [&](const SummaryStats& x) { return method_name(x.method) == row.method; });
        const auto m = std::find_if(kAllMetrics.begin(), kAllMetrics.end(),
                                    [&](Metric x) { return metric_name(x) == row.metric; });
        REQUIRE(m != kAllMetrics.end());
        const auto& ms = s[*m];
        auto close6 = [](double a, double b) { return std::abs(a - b) <= 5e-6 * std::max(std::abs(b), 1e-300); };
        CHECK(close6(row.bias, ms.bias));
        CHECK(close6(row.std, ms.std));
        CHECK(close6(row.mean_se, ms.mean_se));
    }
    const auto text = report(spec.output_dir);
    for (Method m : kAllMethods) CHECK(text.find(method_name(m)) != std::string::npos);
    CHECK(text.find("Bias") != std::string::npos);
    fs::remove_all(spec.output_dir);
}

TEST_CASE("summary parser rejects bad cells") {
    const std::string header = "method,metric,bias,std,mean_se,type1_rate,mean_estimate\n";
    std::istringstream ok(header + "pooling,stay_duration,0.1,0.2,0.3,0.05,1\n");
    CHECK(read_summary_csv(ok).size() == 1);

    std::istringstream bad(header + "pooling,stay_duration,0.1,0.2,0.3,0.05,1\nweighted,stay_duration,nan,0.2,0.3,0,1\n");
    try {
        read_summary_csv(bad);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        const std::string what = e.what();
        CHECK(what.find("bias") != std::string::npos);
        CHECK(what.find("row 3") != std::string::npos);
    }
    std::istringstream wrong_header("a,b\n");
    CHECK_THROWS_AS(read_summary_csv(wrong_header), SchemaError);
}

TEST_CASE("violin svg") {
    const auto svg = violin_svg("stay <duration>", {{"weighted", {1, 2, 3, 2.5}}, {"pooling", {0.5}}, {"snapshot", {}}},
                                1.5);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(count_of(svg, "<svg") == 1);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(count_of(svg, "<g class=\"method\"") == 3);
    CHECK(count_of(svg, "class=\"reference\"") == 1);
    CHECK(svg.find("<duration>") == std::string::npos);  // escaped
    CHECK(count_of(svg, "<g") == count_of(svg, "</g>"));
}

TEST_CASE("replication streams do not collide") {
    // Every (rep, stream) pair of a study draws from its own sequence.
    std::set<std::vector<std::uint64_t>> prefixes;
    std::size_t streams = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const auto seed = replication_seed(0, rep);
        for (auto s : {ReplicationStreams::from_seed(seed), ReplicationStreams::burnin_from_seed(seed)})
            for (Stream* st : {&s.environment, &s.assignment, &s.outcome, &s.model_init}) {
                std::vector<std::uint64_t> prefix(4);
                for (auto& x : prefix) x = (*st)();
                prefixes.insert(prefix);
                ++streams;
            }
    }
    CHECK(prefixes.size() == streams);
}

TEST_CASE("report renders a single method") {
    const std::string csv =
        "method,metric,bias,std,mean_se,type1_rate,mean_estimate\n"
        "pooling,short_proportion,0.018,0.002,0.001,1,-0.05\n";
    std::istringstream in(csv);
    const auto text = render_report(read_summary_csv(in));
    CHECK(count_of(text, "pooling") == 1);
    CHECK(text.find("0.018") != std::string::npos);
}

TEST_CASE("missing summary names the path") {
    const auto dir = scratch("missing");
    try {
        report(dir);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("summary.csv") != std::string::npos);
    }
}
