#include "stoiht/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "stoiht/seeding.hpp"
#include "stoiht/svg.hpp"

namespace stoiht {

namespace {

// Seed purposes within one trial.
constexpr std::uint64_t kInstanceSeed = 0;
constexpr std::uint64_t kSolverSeed = 1;
constexpr std::uint64_t kOracleSeedBase = 100;

std::uint64_t solver_seed(const ExperimentConfig& cfg, int trial) {
  return trial_seed(cfg.master_seed, static_cast<std::uint64_t>(trial), kSolverSeed);
}

std::uint64_t oracle_seed(const ExperimentConfig& cfg, int trial, double alpha) {
  const auto hits = static_cast<std::uint64_t>(std::llround(alpha * cfg.s));
  return trial_seed(cfg.master_seed, static_cast<std::uint64_t>(trial),
                    kOracleSeedBase + hits);
}

// Runs fn(trial) for every trial on a small thread pool. Results must be
// written to per-trial slots so output order never depends on scheduling.
template <typename Fn>
void for_each_trial(int trials, int threads, Fn&& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  threads = std::min(threads, trials);
  if (threads <= 1) {
    for (int t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1)) {
          try {
            fn(t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(trials);
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

TrialRecord make_record(int trial, std::string algorithm, const RunResult& run) {
  TrialRecord r;
  r.trial = trial;
  r.algorithm = std::move(algorithm);
  r.iterations = run.iterations;
  r.converged = run.converged;
  r.final_residual = run.final_residual;
  r.final_error = run.final_error;
  return r;
}

TrialRecord make_record(int trial, const SimResult& sim, int cores) {
  TrialRecord r;
  r.trial = trial;
  r.algorithm = "async-sim";
  r.cores = cores;
  r.iterations = sim.time_steps;
  r.converged = sim.converged;
  r.final_residual = sim.final_residual;
  r.final_error = sim.final_error;
  return r;
}

TrialRecord make_record(int trial, const ParallelResult& run, int workers) {
  TrialRecord r;
  r.trial = trial;
  r.algorithm = "async-parallel";
  r.cores = workers;
  r.iterations = run.time_steps;
  r.converged = run.converged;
  r.final_residual = run.final_residual;
  r.final_error = run.final_error;
  r.parallel = ParallelColumns{run.wall_ms, run.worker_iterations, run.torn_reads};
  return r;
}

SimConfig sim_config(const ExperimentConfig& cfg, int cores, bool slow,
                     std::uint64_t seed) {
  SimConfig sc;
  sc.cores = cores;
  sc.slow_fraction = slow ? static_cast<double>(slow_core_count(cfg, cores)) / cores : 0.0;
  sc.slow_period = cfg.slow_period;
  sc.solver = cfg.solver(seed, false);
  sc.iteration.cold_start = cfg.cold_start;
  return sc;
}

ParallelConfig parallel_config(const ExperimentConfig& cfg, int workers,
                               bool slow, std::uint64_t seed) {
  ParallelConfig pc;
  pc.workers = workers;
  pc.slow_fraction =
      slow ? static_cast<double>(slow_core_count(cfg, workers)) / workers : 0.0;
  pc.slow_delay = std::chrono::microseconds(cfg.slow_delay_us);
  pc.solver = cfg.solver(seed, false);
  pc.iteration.cold_start = cfg.cold_start;
  return pc;
}

std::string format_alpha(const std::optional<double>& alpha) {
  return alpha ? fmt::format("{}", *alpha) : std::string();
}

std::string format_cores(const std::optional<int>& cores) {
  return cores ? fmt::format("{}", *cores) : std::string();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = line.find(sep);
    out.push_back(line.substr(0, pos));
    if (pos == std::string_view::npos) break;
    line.remove_prefix(pos + 1);
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, const std::filesystem::path& path) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::runtime_error(
        fmt::format("malformed field '{}' in '{}'", text, path.string()));
  }
  return value;
}

template <typename T>
std::optional<T> parse_optional(std::string_view text,
                                const std::filesystem::path& path) {
  if (text.empty()) return std::nullopt;
  return parse_field<T>(text, path);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  }
  return out;
}

std::vector<std::string> data_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::string> lines;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    lines.push_back(line);
  }
  return lines;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

}  // namespace

int slow_core_count(const ExperimentConfig& cfg, int cores) {
  return static_cast<int>(std::floor(cfg.slow_fraction * cores + 1e-9));
}

ProblemInstance trial_instance(const ExperimentConfig& cfg, int trial) {
  return generate_instance(
      cfg.n, cfg.m, cfg.s, cfg.b, cfg.noise_std,
      trial_seed(cfg.master_seed, static_cast<std::uint64_t>(trial), kInstanceSeed));
}

// ---------------------------------------------------------------- CSV

std::string trial_csv_header(bool parallel_columns) {
  std::string header =
      "trial,algorithm,alpha,cores,iterations,converged,final_residual,final_error";
  if (parallel_columns) header += ",wall_ms,worker_iters,torn_reads";
  return header;
}

std::string to_csv_row(const TrialRecord& r, bool parallel_columns) {
  std::string row = fmt::format("{},{},{},{},{},{},{:.17g},{:.17g}", r.trial,
                                r.algorithm, format_alpha(r.alpha),
                                format_cores(r.cores), r.iterations,
                                r.converged ? 1 : 0, r.final_residual, r.final_error);
  if (parallel_columns) {
    if (r.parallel) {
      row += fmt::format(",{:.3f},{},{}", r.parallel->wall_ms,
                         fmt::join(r.parallel->worker_iters, ";"),
                         r.parallel->torn_reads);
    } else {
      row += ",,,";
    }
  }
  return row;
}

void write_trial_csv(const std::filesystem::path& path,
                     const std::vector<TrialRecord>& records) {
  const bool parallel_columns = std::any_of(
      records.begin(), records.end(), [](const auto& r) { return r.parallel.has_value(); });
  std::string text = fmt::format("{}\n{}\n", kTrialSchema, trial_csv_header(parallel_columns));
  for (const auto& r : records) {
    text += to_csv_row(r, parallel_columns);
    text += '\n';
  }
  write_text(path, text);
}

std::vector<TrialRecord> read_trial_csv(const std::filesystem::path& path) {
  std::vector<TrialRecord> records;
  for (const auto& line : data_lines(path)) {
    const auto f = split(line, ',');
    if (f.size() != 8 && f.size() != 11) {
      throw std::runtime_error(fmt::format("bad column count in '{}'", path.string()));
    }
    TrialRecord r;
    r.trial = parse_field<int>(f[0], path);
    r.algorithm = std::string(f[1]);
    r.alpha = parse_optional<double>(f[2], path);
    r.cores = parse_optional<int>(f[3], path);
    r.iterations = parse_field<int>(f[4], path);
    r.converged = parse_field<int>(f[5], path) != 0;
    r.final_residual = parse_field<double>(f[6], path);
    r.final_error = parse_field<double>(f[7], path);
    if (f.size() == 11 && !f[8].empty()) {
      ParallelColumns p;
      p.wall_ms = parse_field<double>(f[8], path);
      for (auto it : split(f[9], ';')) p.worker_iters.push_back(parse_field<int>(it, path));
      p.torn_reads = parse_field<std::uint64_t>(f[10], path);
      r.parallel = std::move(p);
    }
    records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------- statistics

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
  using Key = std::tuple<std::string, std::optional<double>, std::optional<int>>;
  std::vector<Key> order;
  std::map<Key, std::vector<const TrialRecord*>> groups;
  for (const auto& r : records) {
    Key key{r.algorithm, r.alpha, r.cores};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }

  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    const auto& group = groups.at(key);
    SummaryRow row;
    std::tie(row.algorithm, row.alpha, row.cores) = key;
    row.trials = static_cast<int>(group.size());
    std::vector<double> iterations;
    int converged = 0;
    std::uint64_t torn = 0, reads = 0;
    bool threaded = false;
    for (const auto* r : group) {
      iterations.push_back(r->iterations);
      converged += r->converged ? 1 : 0;
      if (r->parallel) {
        threaded = true;
        torn += r->parallel->torn_reads;
        for (int it : r->parallel->worker_iters) reads += static_cast<std::uint64_t>(it);
      }
    }
    row.mean_iterations = mean(iterations);
    row.std_iterations = sample_std(iterations);
    row.converged_fraction = static_cast<double>(converged) / row.trials;
    if (threaded) {
      row.torn_fraction =
          reads == 0 ? 0.0 : static_cast<double>(torn) / static_cast<double>(reads);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SummaryRow>& rows) {
  std::string text = fmt::format(
      "{}\nalgorithm,alpha,cores,trials,mean_iterations,std_iterations,"
      "converged_fraction,torn_fraction\n",
      kSummarySchema);
  for (const auto& r : rows) {
    text += fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{}\n", r.algorithm,
                        format_alpha(r.alpha), format_cores(r.cores), r.trials,
                        r.mean_iterations, r.std_iterations, r.converged_fraction,
                        r.torn_fraction ? fmt::format("{:.17g}", *r.torn_fraction)
                                        : std::string());
  }
  write_text(path, text);
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::vector<SummaryRow> rows;
  for (const auto& line : data_lines(path)) {
    const auto f = split(line, ',');
    if (f.size() != 8) {
      throw std::runtime_error(fmt::format("bad column count in '{}'", path.string()));
    }
    SummaryRow r;
    r.algorithm = std::string(f[0]);
    r.alpha = parse_optional<double>(f[1], path);
    r.cores = parse_optional<int>(f[2], path);
    r.trials = parse_field<int>(f[3], path);
    r.mean_iterations = parse_field<double>(f[4], path);
    r.std_iterations = parse_field<double>(f[5], path);
    r.converged_fraction = parse_field<double>(f[6], path);
    r.torn_fraction = parse_optional<double>(f[7], path);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------- experiments

Fig1Result run_experiment_fig1(const ExperimentConfig& cfg) {
  cfg.validate();
  const int trials = cfg.trials_or(50);
  const std::size_t runs = cfg.alphas.size() + 1;

  struct TrialOutput {
    std::vector<TrialRecord> records;
    std::vector<std::vector<double>> errors;
  };
  std::vector<TrialOutput> outputs(static_cast<std::size_t>(trials));

  for_each_trial(trials, cfg.threads, [&](int trial) {
    const ProblemInstance problem = trial_instance(cfg, trial);
    const SolverConfig solver = cfg.solver(solver_seed(cfg, trial), true);
    auto& out = outputs[static_cast<std::size_t>(trial)];

    RunResult standard = run_stoiht(problem, solver);
    out.records.push_back(make_record(trial, "stoiht", standard));
    out.errors.push_back(std::move(standard.error_history));

    for (double alpha : cfg.alphas) {
      const SupportSet estimate = make_oracle_support(
          problem.true_support(), alpha, cfg.s, cfg.n, oracle_seed(cfg, trial, alpha));
      RunResult run = run_stoiht_oracle(problem, solver, estimate);
      TrialRecord record = make_record(trial, "stoiht-oracle", run);
      record.alpha = alpha;
      out.records.push_back(std::move(record));
      out.errors.push_back(std::move(run.error_history));
    }
  });

  Fig1Result result;
  std::size_t horizon = 0;
  for (const auto& out : outputs) {
    for (const auto& e : out.errors) horizon = std::max(horizon, e.size());
    result.records.insert(result.records.end(), out.records.begin(), out.records.end());
  }
  for (std::size_t q = 0; q < runs; ++q) {
    ErrorCurve curve;
    curve.algorithm = q == 0 ? "stoiht" : "stoiht-oracle";
    if (q > 0) curve.alpha = cfg.alphas[q - 1];
    curve.mean_error.assign(horizon, 0.0);
    for (std::size_t k = 0; k < horizon; ++k) {
      double sum = 0.0;
      for (const auto& out : outputs) {
        const auto& e = out.errors[q];
        sum += e.empty() ? 0.0 : e[std::min(k, e.size() - 1)];
      }
      curve.mean_error[k] = sum / trials;
    }
    result.curves.push_back(std::move(curve));
  }
  result.summary = summarize(result.records);
  return result;
}

Fig2Result run_experiment_fig2(const ExperimentConfig& cfg, bool slow) {
  cfg.validate();
  const int trials = cfg.trials_or(500);
  std::vector<std::vector<TrialRecord>> outputs(static_cast<std::size_t>(trials));

  for_each_trial(trials, cfg.threads, [&](int trial) {
    const ProblemInstance problem = trial_instance(cfg, trial);
    const std::uint64_t seed = solver_seed(cfg, trial);
    auto& out = outputs[static_cast<std::size_t>(trial)];
    out.push_back(make_record(trial, "stoiht", run_stoiht(problem, cfg.solver(seed, false))));
    for (int cores : cfg.cores_grid) {
      const SimResult sim = simulate_async(problem, sim_config(cfg, cores, slow, seed));
      out.push_back(make_record(trial, sim, cores));
    }
  });

  Fig2Result result;
  result.slow = slow;
  for (auto& out : outputs) {
    result.records.insert(result.records.end(), out.begin(), out.end());
  }
  result.summary = summarize(result.records);
  return result;
}

BenchResult run_bench(const ExperimentConfig& cfg, bool slow) {
  cfg.validate();
  const int trials = cfg.trials_or(100);
  BenchResult result;
  for (int trial = 0; trial < trials; ++trial) {
    const ProblemInstance problem = trial_instance(cfg, trial);
    const std::uint64_t seed = solver_seed(cfg, trial);
    for (int workers : cfg.workers_grid) {
      const TornReadReport report =
          torn_read_stress(problem, parallel_config(cfg, workers, slow, seed));
      result.records.push_back(make_record(trial, report.run, workers));
      const SimResult sim = simulate_async(problem, sim_config(cfg, workers, slow, seed));
      result.records.push_back(make_record(trial, sim, workers));
    }
  }
  result.summary = summarize(result.records);
  return result;
}

// ---------------------------------------------------------------- outputs

void write_outputs(const ExperimentConfig& cfg, const Fig1Result& result) {
  std::filesystem::create_directories(cfg.out_dir);
  write_trial_csv(cfg.out_dir / "raw.csv", result.records);
  write_summary_csv(cfg.out_dir / "summary.csv", result.summary);

  std::string curves = "# stoiht fig1 curves v1\nalgorithm,alpha,iteration,mean_error\n";
  for (const auto& c : result.curves) {
    for (std::size_t k = 0; k < c.mean_error.size(); ++k) {
      curves += fmt::format("{},{},{},{:.17g}\n", c.algorithm, format_alpha(c.alpha),
                            k + 1, c.mean_error[k]);
    }
  }
  write_text(cfg.out_dir / "curves.csv", curves);

  svg::Chart chart;
  chart.title = fmt::format("Mean recovery error over {} trials", cfg.trials_or(50));
  chart.x_label = "iteration";
  chart.y_label = "mean ||x_t - x||_2";
  chart.log_y = true;
  for (std::size_t q = 0; q < result.curves.size(); ++q) {
    const auto& c = result.curves[q];
    svg::Series s;
    s.label = c.alpha ? fmt::format("support est. alpha={}", *c.alpha) : "StoIHT";
    s.color = q == 0 ? "#000000" : svg::palette(q - 1);
    s.dashed = q == 0;
    for (std::size_t k = 0; k < c.mean_error.size(); ++k) {
      s.x.push_back(static_cast<double>(k + 1));
      s.y.push_back(c.mean_error[k]);
    }
    chart.series.push_back(std::move(s));
  }
  write_text(cfg.out_dir / "plot.svg", svg::render(chart));
}

void write_outputs(const ExperimentConfig& cfg, const Fig2Result& result) {
  std::filesystem::create_directories(cfg.out_dir);
  write_trial_csv(cfg.out_dir / "raw.csv", result.records);
  write_summary_csv(cfg.out_dir / "summary.csv", result.summary);

  svg::Chart chart;
  chart.title = result.slow ? "Time steps to exit, half of the cores slow"
                            : "Time steps to exit, all cores fast";
  chart.x_label = "cores";
  chart.y_label = "time steps";
  svg::Series async;
  async.label = "asynchronous";
  async.color = svg::palette(0);
  async.markers = true;
  const SummaryRow* baseline = nullptr;
  for (const auto& row : result.summary) {
    if (row.algorithm == "stoiht") baseline = &row;
    if (row.algorithm != "async-sim" || !row.cores) continue;
    async.x.push_back(*row.cores);
    async.y.push_back(row.mean_iterations);
    async.band_low.push_back(row.mean_iterations - row.std_iterations);
    async.band_high.push_back(row.mean_iterations + row.std_iterations);
  }
  if (baseline && !async.x.empty()) {
    svg::Series base;
    base.label = "standard";
    base.color = "#000000";
    base.dashed = true;
    for (double x : {async.x.front(), async.x.back()}) {
      base.x.push_back(x);
      base.y.push_back(baseline->mean_iterations);
      base.band_low.push_back(baseline->mean_iterations - baseline->std_iterations);
      base.band_high.push_back(baseline->mean_iterations + baseline->std_iterations);
    }
    chart.series.push_back(std::move(base));
  }
  chart.series.push_back(std::move(async));
  write_text(cfg.out_dir / "plot.svg", svg::render(chart));
}

void write_outputs(const ExperimentConfig& cfg, const BenchResult& result) {
  std::filesystem::create_directories(cfg.out_dir);
  write_trial_csv(cfg.out_dir / "raw.csv", result.records);
  write_summary_csv(cfg.out_dir / "summary.csv", result.summary);

  svg::Chart chart;
  chart.title = "Convergence rate, threads vs. time-step simulation";
  chart.x_label = "workers";
  chart.y_label = "converged fraction";
  svg::Series threaded;
  threaded.label = "threads";
  threaded.color = svg::palette(0);
  svg::Series simulated;
  simulated.label = "simulator";
  simulated.color = svg::palette(1);
  threaded.markers = simulated.markers = true;
  for (const auto& row : result.summary) {
    auto& s = row.algorithm == "async-parallel" ? threaded : simulated;
    if (!row.cores) continue;
    s.x.push_back(*row.cores);
    s.y.push_back(row.converged_fraction);
  }
  chart.series.push_back(std::move(threaded));
  chart.series.push_back(std::move(simulated));
  write_text(cfg.out_dir / "plot.svg", svg::render(chart));
}

// ---------------------------------------------------------------- single

TrialRecord run_single(const ExperimentConfig& cfg, const SingleRunOptions& options) {
  cfg.validate();
  const std::string& algo = options.algorithm;
  if (algo != "iht" && algo != "stoiht" && algo != "stoiht-oracle" &&
      algo != "async-sim" && algo != "async-parallel") {
    throw std::invalid_argument(fmt::format("unknown algorithm '{}'", algo));
  }
  const ProblemInstance problem = options.instance
                                      ? load_instance(*options.instance)
                                      : trial_instance(cfg, options.trial);
  if (options.save_instance) save_instance(problem, *options.save_instance);

  ExperimentConfig local = cfg;
  local.s = problem.sparsity();
  const std::uint64_t seed = solver_seed(cfg, options.trial);
  if (algo == "iht") {
    return make_record(options.trial, algo, run_iht(problem, local.solver(seed, false)));
  }
  if (algo == "stoiht") {
    return make_record(options.trial, algo, run_stoiht(problem, local.solver(seed, false)));
  }
  if (algo == "stoiht-oracle") {
    const SupportSet estimate =
        make_oracle_support(problem.true_support(), options.alpha, problem.sparsity(),
                            problem.n(), oracle_seed(cfg, options.trial, options.alpha));
    TrialRecord r = make_record(options.trial, algo,
                                run_stoiht_oracle(problem, local.solver(seed, false), estimate));
    r.alpha = options.alpha;
    return r;
  }
  if (algo == "async-sim") {
    return make_record(options.trial,
                       simulate_async(problem, sim_config(local, options.cores, options.slow, seed)),
                       options.cores);
  }
  const TornReadReport report = torn_read_stress(
      problem, parallel_config(local, options.cores, options.slow, seed));
  return make_record(options.trial, report.run, options.cores);
}

}  // namespace stoiht
