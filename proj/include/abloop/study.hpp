#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "abloop/config.hpp"
#include "abloop/stats.hpp"

namespace abloop {

/// Seed of replication `rep`. Every method and both global arms of a
/// replication share it, so they see the same users and candidates.
std::uint64_t replication_seed(std::uint64_t base_seed, int rep);

/// Runs fn(0) ... fn(n - 1) on up to `threads` workers. The first exception
/// thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct GlobalPair {
    int rep = 0;
    GlobalResult treatment;
    GlobalResult control;
};

/// Ground truth from paired global runs.
struct GteEstimate {
    MetricVector estimate;   // mean of paired differences
    MetricVector std_error;  // standard error of that mean
    int replications = 0;
    std::vector<GlobalPair> pairs;  // sorted by rep
};

GteEstimate gte_from_pairs(std::vector<GlobalPair> pairs);

/// Runs global treatment and global control on each replication seed.
GteEstimate compute_gte(const RunSpec& spec);

/// Hex content hash of everything the ground truth depends on.
std::string gte_cache_key(const RunSpec& spec);

/// Every (method, rep) task, sorted by (method order in kAllMethods, rep).
std::vector<ReplicationResult> run_replications(const RunSpec& spec);

struct StudyResult {
    std::vector<ReplicationResult> replications;
    std::vector<SummaryStats> summaries;  // one per method with >= 2 reps
    GteEstimate gte;                      // zero with no pairs in A/A mode
};

/// Runs the whole study and writes replications.csv, summary.csv,
/// values.csv, gte.json, gte_cache.json and, when enabled, one
/// violin_<metric>.svg per metric and logs/<method>_rep<r>.csv.
/// Files are staged and renamed at the end; on failure the staged files are
/// removed and the error rethrown.
StudyResult run_study(const RunSpec& spec);

/// Ground truth only: writes gte.json and gte_cache.json, reusing a cache
/// with a matching key.
GteEstimate run_gte_only(const RunSpec& spec);

// CSV / JSON writers, exposed for testing.
void write_replications_csv(std::ostream& out, const std::vector<ReplicationResult>& results);
void write_summary_csv(std::ostream& out, const std::vector<SummaryStats>& summaries);
void write_values_csv(std::ostream& out, const std::vector<ReplicationResult>& results,
                      const std::vector<GlobalPair>& global);
std::string gte_json(const GteEstimate& gte);

/// 6 significant digits, the precision of every output CSV.
std::string format6(double x);

struct SummaryRow {
    std::string method;
    std::string metric;
    double bias = 0.0;
    double std = 0.0;
    double mean_se = 0.0;
    double type1_rate = 0.0;
    double mean_estimate = 0.0;
};

/// Parses summary.csv. Throws SchemaError naming the row and column of the
/// first bad cell.
std::vector<SummaryRow> read_summary_csv(std::istream& in);

/// Fixed-width Bias / STD / SE table per metric.
std::string render_report(const std::vector<SummaryRow>& rows);

/// Reads <dir>/summary.csv and renders it.
std::string report(const std::filesystem::path& dir);

}  // namespace abloop
