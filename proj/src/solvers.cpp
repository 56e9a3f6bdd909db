#include "stoiht/solvers.hpp"

#include <cmath>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "stoiht/seeding.hpp"

namespace stoiht {

void SolverConfig::validate(Index num_blocks) const {
  if (sparsity < 0) throw std::invalid_argument("sparsity must be >= 0");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite");
  if (probs.empty()) return;
  if (static_cast<Index>(probs.size()) != num_blocks) {
    throw std::invalid_argument(fmt::format(
        "probs has {} entries, expected {}", probs.size(), num_blocks));
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("probs must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument(
        fmt::format("probs must sum to 1 (got {:.17g})", total));
  }
}

namespace {

std::vector<double> uniform_weights(std::span<const double> probs,
                                    Index num_blocks) {
  if (!probs.empty()) return {probs.begin(), probs.end()};
  return std::vector<double>(static_cast<std::size_t>(num_blocks), 1.0);
}

// x + scale * A_rows^T (y_rows - A_rows x)
Vector gradient_step(const ProblemInstance& problem, const Vector& x,
                     Index row_begin, Index rows, double scale) {
  const Vector residual = problem.y().segment(row_begin, rows) -
                          apply_rows(problem.a(), row_begin, rows, x);
  Vector out = x;
  out.noalias() +=
      scale * (problem.a().middleRows(row_begin, rows).transpose() * residual);
  return out;
}

void check_sizes(const ProblemInstance& problem, const SolverConfig& cfg) {
  cfg.validate(problem.num_blocks());
  if (cfg.sparsity > problem.n()) {
    throw std::invalid_argument("sparsity exceeds the signal dimension");
  }
}

// Shared loop for the thresholded iterations; `step` maps x^t to the proxy.
template <typename Step>
RunResult iterate(const ProblemInstance& problem, const SolverConfig& cfg,
                  const SupportSet& extra, Step&& step) {
  RunResult result;
  Vector x = Vector::Zero(problem.n());
  if (cfg.record_history) {
    result.residual_history.reserve(static_cast<std::size_t>(cfg.max_iters));
    result.error_history.reserve(static_cast<std::size_t>(cfg.max_iters));
  }
  for (int t = 1; t <= cfg.max_iters; ++t) {
    const Vector proxy = step(x);
    const SupportSet identified = largest_support(proxy, cfg.sparsity);
    x = project(proxy, extra.empty() ? identified : identified.unite(extra));
    result.iterations = t;
    result.final_residual = residual_norm(problem, x);
    if (cfg.record_history) {
      result.residual_history.push_back(result.final_residual);
      result.error_history.push_back((x - problem.x_true()).norm());
    }
    if (result.final_residual < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  result.final_error = (x - problem.x_true()).norm();
  result.x_hat = std::move(x);
  return result;
}

}  // namespace

BlockSampler::BlockSampler(std::span<const double> probs, Index num_blocks) {
  const auto weights = uniform_weights(probs, num_blocks);
  dist_ = std::discrete_distribution<Index>(weights.begin(), weights.end());
}

Vector stoiht_proxy(const ProblemInstance& problem, const Vector& x,
                    Index block, double gamma, std::span<const double> probs) {
  const BlockView view = problem.block(block);
  double scale = gamma;
  if (!probs.empty()) {
    if (static_cast<Index>(probs.size()) != problem.num_blocks()) {
      throw std::invalid_argument("stoiht_proxy: probs size mismatch");
    }
    const double p = probs[static_cast<std::size_t>(block)];
    if (!(p > 0.0)) {
      throw std::invalid_argument(
          fmt::format("stoiht_proxy: block {} has zero probability", block));
    }
    scale = gamma / (static_cast<double>(problem.num_blocks()) * p);
  }
  return gradient_step(problem, x, view.row_begin, view.rows, scale);
}

RunResult run_stoiht(const ProblemInstance& problem, const SolverConfig& cfg) {
  return run_stoiht_oracle(problem, cfg, SupportSet{});
}

RunResult run_stoiht_oracle(const ProblemInstance& problem,
                            const SolverConfig& cfg,
                            const SupportSet& support_estimate) {
  check_sizes(problem, cfg);
  if (!support_estimate.fits(problem.n())) {
    throw std::out_of_range("support estimate index outside the signal");
  }
  std::mt19937_64 rng(stream_seed(cfg.seed, 0));
  BlockSampler sampler(cfg.probs, problem.num_blocks());
  return iterate(problem, cfg, support_estimate, [&](const Vector& x) {
    return stoiht_proxy(problem, x, sampler(rng), cfg.gamma, cfg.probs);
  });
}

RunResult run_iht(const ProblemInstance& problem, const SolverConfig& cfg) {
  check_sizes(problem, cfg);
  return iterate(problem, cfg, SupportSet{}, [&](const Vector& x) {
    return gradient_step(problem, x, 0, problem.m(), cfg.gamma);
  });
}

SupportSet make_oracle_support(const SupportSet& true_support, double alpha,
                               Index s, Index n, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  const double hits_real = alpha * static_cast<double>(s);
  const auto hits = static_cast<Index>(std::llround(hits_real));
  if (std::abs(hits_real - static_cast<double>(hits)) > 1e-9) {
    throw std::invalid_argument(
        fmt::format("alpha * s = {} is not an integer", hits_real));
  }
  if (static_cast<Index>(true_support.size()) != s) {
    throw std::invalid_argument("true support must have exactly s indices");
  }
  if (!true_support.fits(n) || n - s < s - hits) {
    throw std::invalid_argument("signal too small for the requested support");
  }

  std::mt19937_64 rng(seed);
  std::vector<Index> picked;
  picked.reserve(static_cast<std::size_t>(s));
  std::sample(true_support.begin(), true_support.end(),
              std::back_inserter(picked), hits, rng);

  std::vector<Index> complement;
  complement.reserve(static_cast<std::size_t>(n - s));
  for (Index j = 0; j < n; ++j) {
    if (!true_support.contains(j)) complement.push_back(j);
  }
  std::sample(complement.begin(), complement.end(), std::back_inserter(picked),
              s - hits, rng);
  return SupportSet(std::move(picked));
}

}  // namespace stoiht
