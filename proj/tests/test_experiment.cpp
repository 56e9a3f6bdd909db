#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>

#include "stoiht/experiment.hpp"

using namespace stoiht;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.n = 300;
  cfg.m = 90;
  cfg.s = 10;
  cfg.b = 15;
  cfg.max_iters = 400;
  cfg.trials = 6;
  cfg.alphas = {0.0, 0.5, 1.0};
  cfg.cores_grid = {1, 2, 4};
  cfg.workers_grid = {2};
  cfg.out_dir = fs::temp_directory_path() / out;
  fs::remove_all(cfg.out_dir);
  return cfg;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> data_rows(const fs::path& path) {
  std::vector<std::string> rows;
  std::istringstream in(slurp(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    rows.push_back(line);
  }
  return rows;
}

// Two-pass textbook formulas, grouped with a std::map keyed on the same
// triple the summary uses.
struct Reference {
  double mean;
  double std;
  double converged;
};

std::map<std::tuple<std::string, std::optional<double>, std::optional<int>>, Reference>
reference_summary(const std::vector<TrialRecord>& records) {
  std::map<std::tuple<std::string, std::optional<double>, std::optional<int>>,
           std::vector<const TrialRecord*>>
      groups;
  for (const auto& r : records) groups[{r.algorithm, r.alpha, r.cores}].push_back(&r);
  std::map<std::tuple<std::string, std::optional<double>, std::optional<int>>, Reference> out;
  for (const auto& [key, group] : groups) {
    double sum = 0.0, conv = 0.0;
    for (const auto* r : group) {
      sum += r->iterations;
      conv += r->converged;
    }
    const double k = static_cast<double>(group.size());
    const double mu = sum / k;
    double ss = 0.0;
    for (const auto* r : group) ss += (r->iterations - mu) * (r->iterations - mu);
    out[key] = {mu, k > 1 ? std::sqrt(ss / (k - 1)) : 0.0, conv / k};
  }
  return out;
}

}  // namespace

TEST_CASE("defaults are the standard experiment settings") {
  const ExperimentConfig cfg;
  CHECK(cfg.n == 1000);
  CHECK(cfg.m == 300);
  CHECK(cfg.s == 20);
  CHECK(cfg.b == 15);
  CHECK(cfg.gamma == 1.0);
  CHECK(cfg.tol == 1e-7);
  CHECK(cfg.max_iters == 1500);
  CHECK(cfg.alphas == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(cfg.cores_grid == std::vector<int>{1, 2, 4, 8, 16});
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("settings parse from text and reject junk") {
  ExperimentConfig cfg;
  apply_setting(cfg, "n", "500");
  apply_setting(cfg, " alphas ", " 0, 0.5 ,1 ");
  apply_setting(cfg, "cores_grid", "2,4");
  apply_setting(cfg, "cold_start", "empty");
  apply_setting(cfg, "experiment", "fig2b");
  apply_setting(cfg, "master_seed", "18446744073709551615");
  CHECK(cfg.n == 500);
  CHECK(cfg.alphas == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(cfg.cores_grid == std::vector<int>{2, 4});
  CHECK(cfg.cold_start == ColdStart::empty);
  CHECK(cfg.experiment == ExperimentKind::fig2b);
  CHECK(cfg.master_seed == 18446744073709551615ull);
  CHECK_THROWS_AS(apply_setting(cfg, "n", "12x"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "bogus", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "alphas", ""), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(cfg, "cold_start", "warm"), std::invalid_argument);

  ExperimentConfig bad;
  bad.alphas = {0.33};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ExperimentConfig{};
  bad.b = 7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("config files apply key = value lines") {
  const fs::path path = fs::temp_directory_path() / "stoiht_test_config.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n\nn = 400  # trailing\nm=120\ntrials = 3\n";
  }
  ExperimentConfig cfg;
  load_config_file(cfg, path);
  CHECK(cfg.n == 400);
  CHECK(cfg.m == 120);
  CHECK(cfg.trials == 3);
  {
    std::ofstream out(path);
    out << "n = 400\nnot a setting\n";
  }
  CHECK_THROWS_WITH_AS(load_config_file(cfg, path), doctest::Contains(":2:"),
                       std::invalid_argument);
  fs::remove(path);
  CHECK_THROWS_AS(load_config_file(cfg, path), std::invalid_argument);
}

TEST_CASE("sample standard deviation uses n - 1") {
  CHECK(mean({1.0, 2.0, 3.0, 4.0}) == 2.5);
  CHECK(sample_std({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(sample_std({7.0}) == 0.0);
  CHECK(mean({}) == 0.0);
}

TEST_CASE("trial records survive a CSV round trip") {
  std::vector<TrialRecord> records(3);
  records[0] = {0, "stoiht", std::nullopt, std::nullopt, 812, true, 9.1e-8, 1.0 / 3.0, std::nullopt};
  records[1] = {0, "stoiht-oracle", 0.75, std::nullopt, 1500, false, 0.1, 2e-300, std::nullopt};
  records[2] = {1, "async-parallel", std::nullopt, 4, 311, true, 5e-8, 1e-9,
                ParallelColumns{12.5, {311, 290, 305, 300}, 17}};
  const fs::path path = fs::temp_directory_path() / "stoiht_records.csv";
  write_trial_csv(path, records);
  CHECK(slurp(path).rfind(std::string(kTrialSchema) + "\n", 0) == 0);
  const auto back = read_trial_csv(path);
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].trial == records[k].trial);
    CHECK(back[k].algorithm == records[k].algorithm);
    CHECK(back[k].alpha == records[k].alpha);
    CHECK(back[k].cores == records[k].cores);
    CHECK(back[k].iterations == records[k].iterations);
    CHECK(back[k].converged == records[k].converged);
    CHECK(back[k].final_residual == records[k].final_residual);
    CHECK(back[k].final_error == records[k].final_error);
  }
  CHECK_FALSE(back[0].parallel.has_value());
  REQUIRE(back[2].parallel.has_value());
  CHECK(back[2].parallel->worker_iters == std::vector<int>{311, 290, 305, 300});
  CHECK(back[2].parallel->torn_reads == 17);
  fs::remove(path);
}

TEST_CASE("summaries group by algorithm and parameter in order of appearance") {
  std::vector<TrialRecord> records;
  for (int t = 0; t < 4; ++t) {
    records.push_back({t, "stoiht", std::nullopt, std::nullopt, 100 + 10 * t, t != 3, 0, 0, std::nullopt});
    records.push_back({t, "async-sim", std::nullopt, 2, 90 + t, true, 0, 0, std::nullopt});
  }
  const auto rows = summarize(records);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].algorithm == "stoiht");
  CHECK(rows[0].trials == 4);
  CHECK(rows[0].mean_iterations == 115.0);
  CHECK(rows[0].std_iterations == doctest::Approx(std::sqrt(500.0 / 3.0)));
  CHECK(rows[0].converged_fraction == 0.75);
  CHECK(rows[1].cores == 2);
  CHECK(rows[1].mean_iterations == 91.5);
  CHECK_FALSE(rows[1].torn_fraction.has_value());
}

TEST_CASE("fig1 outputs match an independent recomputation") {
  const ExperimentConfig cfg = small_config("stoiht_fig1_test");
  const Fig1Result result = run_experiment_fig1(cfg);
  write_outputs(cfg, result);
  CHECK(result.records.size() == 6 * 4);

  const auto records = read_trial_csv(cfg.out_dir / "raw.csv");
  const auto summary = read_summary_csv(cfg.out_dir / "summary.csv");
  const auto reference = reference_summary(records);
  REQUIRE(summary.size() == reference.size());
  for (const auto& row : summary) {
    const auto& ref = reference.at({row.algorithm, row.alpha, row.cores});
    CHECK(std::abs(row.mean_iterations - ref.mean) <= 1e-12 * std::max(1.0, ref.mean));
    CHECK(std::abs(row.std_iterations - ref.std) <= 1e-12 * std::max(1.0, ref.std));
    CHECK(row.converged_fraction == ref.converged);
  }

  int horizon = 0;
  for (const auto& r : records) horizon = std::max(horizon, r.iterations);
  CHECK(data_rows(cfg.out_dir / "curves.csv").size() ==
        (cfg.alphas.size() + 1) * static_cast<std::size_t>(horizon));
  for (const auto& curve : result.curves) {
    CHECK(curve.mean_error.size() == static_cast<std::size_t>(horizon));
  }
  CHECK(fs::exists(cfg.out_dir / "plot.svg"));
  CHECK(slurp(cfg.out_dir / "plot.svg").find("<svg") != std::string::npos);
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("fig1 curves end at the mean final error of each run") {
  ExperimentConfig cfg = small_config("stoiht_fig1_curve");
  cfg.trials = 4;
  cfg.alphas = {0.5, 1.0};
  const Fig1Result result = run_experiment_fig1(cfg);
  REQUIRE(result.curves.size() == 3);
  for (const auto& curve : result.curves) {
    double sum = 0.0;
    for (const auto& r : result.records) {
      if (r.algorithm == curve.algorithm && r.alpha == curve.alpha) sum += r.final_error;
    }
    CHECK(curve.mean_error.back() == doctest::Approx(sum / 4).epsilon(1e-12));
    CHECK(curve.mean_error.front() > curve.mean_error.back());
  }
}

TEST_CASE("experiments do not depend on the trial thread count") {
  ExperimentConfig one = small_config("stoiht_threads_one");
  one.threads = 1;
  ExperimentConfig many = small_config("stoiht_threads_many");
  many.threads = 4;
  write_outputs(one, run_experiment_fig2(one, false));
  write_outputs(many, run_experiment_fig2(many, false));
  CHECK(slurp(one.out_dir / "raw.csv") == slurp(many.out_dir / "raw.csv"));
  CHECK(slurp(one.out_dir / "summary.csv") == slurp(many.out_dir / "summary.csv"));
  CHECK(slurp(one.out_dir / "plot.svg") == slurp(many.out_dir / "plot.svg"));

  write_outputs(one, run_experiment_fig1(one));
  write_outputs(many, run_experiment_fig1(many));
  CHECK(slurp(one.out_dir / "raw.csv") == slurp(many.out_dir / "raw.csv"));
  CHECK(slurp(one.out_dir / "curves.csv") == slurp(many.out_dir / "curves.csv"));
  fs::remove_all(one.out_dir);
  fs::remove_all(many.out_dir);
}

TEST_CASE("fig2 pairs the baseline with every core count") {
  ExperimentConfig cfg = small_config("stoiht_fig2_test");
  cfg.cores_grid = {1, 2, 4};
  const Fig2Result fast = run_experiment_fig2(cfg, false);
  CHECK(fast.records.size() == 6 * 4);
  CHECK(fast.summary.size() == 4);
  CHECK(fast.summary[0].algorithm == "stoiht");
  CHECK(fast.summary[3].cores == 4);

  const Fig2Result slow = run_experiment_fig2(cfg, true);
  CHECK(slow.slow);
  // The standard baseline does not depend on the core speeds.
  CHECK(slow.summary[0].mean_iterations == fast.summary[0].mean_iterations);
  CHECK(slow_core_count(cfg, 1) == 0);
  CHECK(slow_core_count(cfg, 3) == 1);
  CHECK(slow_core_count(cfg, 4) == 2);
}

TEST_CASE("single runs are deterministic and honor saved instances") {
  ExperimentConfig cfg = small_config("stoiht_single");
  SingleRunOptions opts;
  opts.trial = 2;
  const TrialRecord a = run_single(cfg, opts);
  const TrialRecord b = run_single(cfg, opts);
  CHECK(to_csv_row(a, false) == to_csv_row(b, false));

  const fs::path saved = fs::temp_directory_path() / "stoiht_single_instance.txt";
  opts.save_instance = saved;
  run_single(cfg, opts);
  opts.save_instance.reset();
  opts.instance = saved;
  CHECK(to_csv_row(run_single(cfg, opts), false) == to_csv_row(a, false));
  fs::remove(saved);

  opts.instance.reset();
  opts.algorithm = "async-sim";
  opts.cores = 1;
  const TrialRecord sim = run_single(cfg, opts);
  CHECK(sim.cores == 1);
  opts.algorithm = "async-parallel";
  const TrialRecord par = run_single(cfg, opts);
  CHECK(par.parallel.has_value());
  CHECK(par.iterations == sim.iterations);

  opts.algorithm = "nonsense";
  CHECK_THROWS_AS(run_single(cfg, opts), std::invalid_argument);
  opts.algorithm = "stoiht";
  opts.instance = fs::temp_directory_path() / "stoiht_missing_instance.txt";
  CHECK_THROWS_WITH_AS(run_single(cfg, opts), doctest::Contains("stoiht_missing_instance"),
                       std::runtime_error);
}

TEST_CASE("full-gradient IHT on a zero instance stops after one iteration") {
  ExperimentConfig cfg = small_config("stoiht_iht_zero");
  const ProblemInstance base = trial_instance(cfg, 0);
  const ProblemInstance zero(base.a(), Vector::Zero(cfg.n), Vector::Zero(cfg.m), cfg.s, cfg.b);
  const fs::path path = fs::temp_directory_path() / "stoiht_zero_instance.txt";
  save_instance(zero, path);
  SingleRunOptions opts;
  opts.algorithm = "iht";
  opts.instance = path;
  const TrialRecord r = run_single(cfg, opts);
  CHECK(r.iterations == 1);
  CHECK(r.converged);
  fs::remove(path);
}
