#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stoiht/model.hpp"
#include "stoiht/parallel.hpp"
#include "stoiht/solvers.hpp"
#include "stoiht/tally.hpp"

namespace stoiht {

enum class ExperimentKind { fig1, fig2a, fig2b, custom };

/// Everything an experiment depends on. Problem and solver defaults are
/// n = 1000, m = 300, s = 20, b = 15, gamma = 1, tol = 1e-7, 1500 iterations.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::fig1;
  Index n = 1000;
  Index m = 300;
  Index s = 20;
  Index b = 15;
  double gamma = 1.0;
  double tol = 1e-7;
  int max_iters = 1500;
  double noise_std = 0.0;
  /// Unset means the experiment's default (fig1: 50, fig2: 500, bench: 100).
  std::optional<int> trials;
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> cores_grid{1, 2, 4, 8, 16};
  std::vector<int> workers_grid{2, 4, 8};
  double slow_fraction = 0.5;
  int slow_period = 4;
  int slow_delay_us = 200;
  ColdStart cold_start = ColdStart::tie_fill;
  std::uint64_t master_seed = 1;
  std::filesystem::path out_dir = "out";
  /// Trial-level worker threads; 0 uses the hardware concurrency.
  int threads = 0;

  int trials_or(int fallback) const { return trials.value_or(fallback); }
  SolverConfig solver(std::uint64_t seed, bool record_history) const;
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Sets one field from its textual form (`n`, `alphas = 0,0.5,1`, ...).
/// Throws std::invalid_argument for unknown keys or unparsable values.
void apply_setting(ExperimentConfig& cfg, std::string_view key,
                   std::string_view value);

/// Reads `key = value` lines; `#` starts a comment.
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

struct ParallelColumns {
  double wall_ms = 0.0;
  std::vector<int> worker_iters;
  std::uint64_t torn_reads = 0;
};

/// One (trial, algorithm, parameter point) outcome.
struct TrialRecord {
  int trial = 0;
  std::string algorithm;
  std::optional<double> alpha;
  std::optional<int> cores;
  int iterations = 0;
  bool converged = false;
  double final_residual = 0.0;
  double final_error = 0.0;
  std::optional<ParallelColumns> parallel;
};

inline constexpr std::string_view kTrialSchema = "# stoiht trial records v1";
inline constexpr std::string_view kSummarySchema = "# stoiht summary v1";

std::string trial_csv_header(bool parallel_columns);
std::string to_csv_row(const TrialRecord& record, bool parallel_columns);
/// Parses a file written by write_trial_csv.
std::vector<TrialRecord> read_trial_csv(const std::filesystem::path& path);
void write_trial_csv(const std::filesystem::path& path,
                     const std::vector<TrialRecord>& records);

/// Mean and sample standard deviation of the iteration counts of one group.
struct SummaryRow {
  std::string algorithm;
  std::optional<double> alpha;
  std::optional<int> cores;
  int trials = 0;
  double mean_iterations = 0.0;
  double std_iterations = 0.0;
  double converged_fraction = 0.0;
  /// Torn reads per tally read; only for threaded runs.
  std::optional<double> torn_fraction;
};

double mean(const std::vector<double>& values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_std(const std::vector<double>& values);

/// Groups records by (algorithm, alpha, cores) in order of first appearance.
std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records);
void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

/// Mean ||x^t - x_true|| per iteration; a run that stopped early holds its
/// final error for the remaining iterations.
struct ErrorCurve {
  std::string algorithm;
  std::optional<double> alpha;
  std::vector<double> mean_error;
};

struct Fig1Result {
  std::vector<TrialRecord> records;
  std::vector<SummaryRow> summary;
  std::vector<ErrorCurve> curves;
};

struct Fig2Result {
  std::vector<TrialRecord> records;
  std::vector<SummaryRow> summary;
  bool slow = false;
};

struct BenchResult {
  std::vector<TrialRecord> records;
  std::vector<SummaryRow> summary;
};

/// Standard stochastic IHT against the support-estimate variant, one run
/// per alpha, all sharing each trial's instance and block sequence.
Fig1Result run_experiment_fig1(const ExperimentConfig& cfg);

/// Standard stochastic IHT against the time-step simulator for each core
/// count, on paired instances and seeds.
Fig2Result run_experiment_fig2(const ExperimentConfig& cfg, bool slow);

/// Threaded executor with read instrumentation against the simulator with
/// the same core count, per trial and worker count. Trials run one after
/// another since each already uses several threads.
BenchResult run_bench(const ExperimentConfig& cfg, bool slow = false);

/// Slow cores for a core count: floor(slow_fraction * cores).
int slow_core_count(const ExperimentConfig& cfg, int cores);

/// raw.csv, summary.csv, curves.csv and plot.svg under cfg.out_dir.
void write_outputs(const ExperimentConfig& cfg, const Fig1Result& result);
/// raw.csv, summary.csv and plot.svg under cfg.out_dir.
void write_outputs(const ExperimentConfig& cfg, const Fig2Result& result);
void write_outputs(const ExperimentConfig& cfg, const BenchResult& result);

struct SingleRunOptions {
  /// One of iht, stoiht, stoiht-oracle, async-sim, async-parallel.
  std::string algorithm = "stoiht";
  int trial = 0;
  double alpha = 1.0;
  int cores = 1;
  bool slow = false;
  std::optional<std::filesystem::path> instance;
  std::optional<std::filesystem::path> save_instance;
};

/// One trial end to end. Throws std::invalid_argument for an unknown
/// algorithm tag.
TrialRecord run_single(const ExperimentConfig& cfg, const SingleRunOptions& options);

/// Instance used by trial `trial` of every experiment.
ProblemInstance trial_instance(const ExperimentConfig& cfg, int trial);

}  // namespace stoiht
