// Command-line harness: figure reproductions, single runs, instance
// generation and the threaded-executor benchmark.
//
// Exit codes: 0 success, 1 the run finished but did not converge,
// 2 usage or input error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stoiht/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kNotConverged = 1;
constexpr int kUsage = 2;

// Flags that map one-to-one onto ExperimentConfig settings.
const std::vector<std::pair<std::string, std::string>> kSettingFlags = {
    {"n", "signal dimension"},
    {"m", "number of measurements"},
    {"s", "sparsity level"},
    {"b", "rows per block"},
    {"gamma", "step size"},
    {"tol", "exit tolerance on ||y - Ax||"},
    {"max_iters", "iteration cap"},
    {"noise_std", "measurement noise standard deviation"},
    {"trials", "number of trials"},
    {"alphas", "comma-separated support accuracies"},
    {"cores_grid", "comma-separated simulated core counts"},
    {"workers_grid", "comma-separated thread counts (bench)"},
    {"slow_fraction", "fraction of slow cores"},
    {"slow_period", "time steps per slow-core iteration"},
    {"slow_delay_us", "sleep of slow threads per iteration"},
    {"cold_start", "tie_fill or empty"},
    {"master_seed", "master random seed"},
    {"out", "output directory"},
    {"threads", "trial-level threads (0 = all cores)"},
};

struct Settings {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  for (auto& c : flag) {
    if (c == '_') c = '-';
  }
  return flag;
}

void add_settings(CLI::App* app, Settings& settings) {
  app->add_option("--config", settings.config_file, "key = value settings file");
  for (const auto& [key, help] : kSettingFlags) {
    settings.options[key] = app->add_option(flag_name(key), settings.values[key], help);
  }
}

// File first, then flags on top.
stoiht::ExperimentConfig resolve(const Settings& settings, stoiht::ExperimentKind kind) {
  stoiht::ExperimentConfig cfg;
  cfg.experiment = kind;
  if (!settings.config_file.empty()) {
    stoiht::load_config_file(cfg, settings.config_file);
  }
  for (const auto& [key, option] : settings.options) {
    if (option->count() > 0) stoiht::apply_setting(cfg, key, settings.values.at(key));
  }
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<stoiht::SummaryRow>& rows) {
  fmt::print("{:<16} {:>6} {:>6} {:>7} {:>10} {:>10} {:>10}\n", "algorithm", "alpha",
             "cores", "trials", "mean", "std", "converged");
  for (const auto& r : rows) {
    fmt::print("{:<16} {:>6} {:>6} {:>7} {:>10.2f} {:>10.2f} {:>10.3f}\n", r.algorithm,
               r.alpha ? fmt::format("{}", *r.alpha) : "-",
               r.cores ? fmt::format("{}", *r.cores) : "-", r.trials, r.mean_iterations,
               r.std_iterations, r.converged_fraction);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic IHT with asynchronous tally updates"};
  app.require_subcommand(1);

  Settings fig1_settings, fig2_settings, single_settings, gen_settings, bench_settings;

  auto* fig1 = app.add_subcommand("fig1", "support-estimate speedup experiment");
  add_settings(fig1, fig1_settings);

  auto* fig2 = app.add_subcommand("fig2", "time steps versus simulated core count");
  add_settings(fig2, fig2_settings);
  bool fast = false, slow = false;
  auto* fast_flag = fig2->add_flag("--fast", fast, "all cores fast");
  fig2->add_flag("--slow", slow, "half the cores slow")->excludes(fast_flag);

  auto* single = app.add_subcommand("single", "one trial, printed as a CSV row");
  add_settings(single, single_settings);
  stoiht::SingleRunOptions single_opts;
  std::string instance_in, instance_out;
  bool header = false;
  single->add_option("--algorithm", single_opts.algorithm,
                     "iht | stoiht | stoiht-oracle | async-sim | async-parallel")
      ->check(CLI::IsMember({"iht", "stoiht", "stoiht-oracle", "async-sim", "async-parallel"}));
  single->add_option("--trial", single_opts.trial, "trial index");
  single->add_option("--alpha", single_opts.alpha, "support accuracy (stoiht-oracle)");
  single->add_option("--cores", single_opts.cores, "cores or threads (async-*)");
  single->add_flag("--slow", single_opts.slow, "make slow_fraction of the cores slow");
  single->add_option("--instance", instance_in, "load the instance from this file");
  single->add_option("--save-instance", instance_out, "save the instance to this file");
  single->add_flag("--header", header, "print the CSV header first");

  auto* gen = app.add_subcommand("gen-instance", "write a problem instance file");
  add_settings(gen, gen_settings);
  std::string gen_output;
  int gen_trial = 0;
  gen->add_option("--output,-o", gen_output, "instance file")->required();
  gen->add_option("--trial", gen_trial, "trial index whose instance to write");

  auto* bench = app.add_subcommand("bench", "threaded executor with torn-read counting");
  add_settings(bench, bench_settings);
  bool bench_slow = false;
  bench->add_flag("--slow", bench_slow, "make slow_fraction of the threads slow");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fig1) {
      const auto cfg = resolve(fig1_settings, stoiht::ExperimentKind::fig1);
      const auto result = stoiht::run_experiment_fig1(cfg);
      stoiht::write_outputs(cfg, result);
      print_summary(result.summary);
      return kOk;
    }
    if (*fig2) {
      if (!fast && !slow) {
        std::cerr << "fig2: pass --fast or --slow\n";
        return kUsage;
      }
      const auto cfg = resolve(
          fig2_settings, slow ? stoiht::ExperimentKind::fig2b : stoiht::ExperimentKind::fig2a);
      const auto result = stoiht::run_experiment_fig2(cfg, slow);
      stoiht::write_outputs(cfg, result);
      print_summary(result.summary);
      return kOk;
    }
    if (*single) {
      const auto cfg = resolve(single_settings, stoiht::ExperimentKind::custom);
      if (!instance_in.empty()) single_opts.instance = instance_in;
      if (!instance_out.empty()) single_opts.save_instance = instance_out;
      const auto record = stoiht::run_single(cfg, single_opts);
      const bool parallel_columns = record.parallel.has_value();
      if (header) std::cout << stoiht::trial_csv_header(parallel_columns) << '\n';
      std::cout << stoiht::to_csv_row(record, parallel_columns) << '\n';
      return record.converged ? kOk : kNotConverged;
    }
    if (*gen) {
      const auto cfg = resolve(gen_settings, stoiht::ExperimentKind::custom);
      stoiht::save_instance(stoiht::trial_instance(cfg, gen_trial), gen_output);
      return kOk;
    }
    if (*bench) {
      const auto cfg = resolve(bench_settings, stoiht::ExperimentKind::custom);
      const auto result = stoiht::run_bench(cfg, bench_slow);
      stoiht::write_outputs(cfg, result);
      print_summary(result.summary);
      for (const auto& row : result.summary) {
        if (row.converged_fraction == 0.0) return kNotConverged;
      }
      return kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
