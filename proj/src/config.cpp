#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "stoiht/experiment.hpp"

namespace stoiht {

namespace {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument(
        fmt::format("invalid value '{}' for '{}'", text, key));
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_number<T>(key, text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) {
    throw std::invalid_argument(fmt::format("'{}' needs at least one value", key));
  }
  return out;
}

ExperimentKind parse_kind(std::string_view text) {
  if (text == "fig1") return ExperimentKind::fig1;
  if (text == "fig2a") return ExperimentKind::fig2a;
  if (text == "fig2b") return ExperimentKind::fig2b;
  if (text == "custom") return ExperimentKind::custom;
  throw std::invalid_argument(fmt::format("unknown experiment '{}'", text));
}

}  // namespace

SolverConfig ExperimentConfig::solver(std::uint64_t seed, bool record_history) const {
  SolverConfig out;
  out.sparsity = s;
  out.gamma = gamma;
  out.tol = tol;
  out.max_iters = max_iters;
  out.seed = seed;
  out.record_history = record_history;
  return out;
}

void ExperimentConfig::validate() const {
  if (n <= 0 || m <= 0 || b <= 0) throw std::invalid_argument("n, m, b must be positive");
  if (s < 0 || s > n) throw std::invalid_argument("need 0 <= s <= n");
  if (m % b != 0) throw std::invalid_argument("b must divide m");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
  if (trials && *trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (slow_period < 1) throw std::invalid_argument("slow_period must be >= 1");
  if (slow_delay_us < 0) throw std::invalid_argument("slow_delay_us must be >= 0");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  for (double alpha : alphas) {
    const double hits = alpha * static_cast<double>(s);
    if (!(alpha >= 0.0 && alpha <= 1.0) || std::abs(hits - std::round(hits)) > 1e-9) {
      throw std::invalid_argument(fmt::format(
          "alpha {} invalid: need 0 <= alpha <= 1 with alpha * s integral", alpha));
    }
  }
  for (int c : cores_grid) {
    if (c < 1) throw std::invalid_argument("core counts must be >= 1");
  }
  for (int w : workers_grid) {
    if (w < 1) throw std::invalid_argument("worker counts must be >= 1");
  }
}

void apply_setting(ExperimentConfig& cfg, std::string_view key,
                   std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "experiment") cfg.experiment = parse_kind(value);
  else if (key == "n") cfg.n = parse_number<Index>(key, value);
  else if (key == "m") cfg.m = parse_number<Index>(key, value);
  else if (key == "s") cfg.s = parse_number<Index>(key, value);
  else if (key == "b") cfg.b = parse_number<Index>(key, value);
  else if (key == "gamma") cfg.gamma = parse_number<double>(key, value);
  else if (key == "tol") cfg.tol = parse_number<double>(key, value);
  else if (key == "max_iters") cfg.max_iters = parse_number<int>(key, value);
  else if (key == "noise_std") cfg.noise_std = parse_number<double>(key, value);
  else if (key == "trials") cfg.trials = parse_number<int>(key, value);
  else if (key == "alphas") cfg.alphas = parse_list<double>(key, value);
  else if (key == "cores_grid") cfg.cores_grid = parse_list<int>(key, value);
  else if (key == "workers_grid") cfg.workers_grid = parse_list<int>(key, value);
  else if (key == "slow_fraction") cfg.slow_fraction = parse_number<double>(key, value);
  else if (key == "slow_period") cfg.slow_period = parse_number<int>(key, value);
  else if (key == "slow_delay_us") cfg.slow_delay_us = parse_number<int>(key, value);
  else if (key == "master_seed") cfg.master_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out") cfg.out_dir = std::string(value);
  else if (key == "threads") cfg.threads = parse_number<int>(key, value);
  else if (key == "cold_start") {
    if (value == "tie_fill") cfg.cold_start = ColdStart::tie_fill;
    else if (value == "empty") cfg.cold_start = ColdStart::empty;
    else throw std::invalid_argument(fmt::format("unknown cold_start '{}'", value));
  } else {
    throw std::invalid_argument(fmt::format("unknown setting '{}'", key));
  }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument(
        fmt::format("cannot open config file '{}'", path.string()));
  }
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) {
      text = text.substr(0, hash);
    }
    if (trim(text).empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("{}:{}: expected 'key = value'",
                                              path.string(), line_no));
    }
    try {
      apply_setting(cfg, text.substr(0, eq), text.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(
          fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
}

}  // namespace stoiht
