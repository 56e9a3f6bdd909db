#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "stoiht/model.hpp"

namespace stoiht {

/// Inputs shared by every solver. Defaults are the standard experiment
/// settings (s = 20, gamma = 1, tol = 1e-7, at most 1500 iterations).
struct SolverConfig {
  Index sparsity = 20;
  double gamma = 1.0;
  /// Block selection probabilities; empty means uniform over the blocks.
  std::vector<double> probs;
  double tol = 1e-7;
  int max_iters = 1500;
  std::uint64_t seed = 0;
  /// Keep per-iteration residual and signal-error histories.
  bool record_history = true;

  /// Throws std::invalid_argument if any invariant fails for a problem
  /// with `num_blocks` blocks.
  void validate(Index num_blocks) const;
};

struct RunResult {
  Vector x_hat;
  int iterations = 0;
  bool converged = false;
  double final_residual = 0.0;
  double final_error = 0.0;
  /// ||y - A x^{t+1}|| after each completed iteration.
  std::vector<double> residual_history;
  /// ||x^{t+1} - x_true|| after each completed iteration.
  std::vector<double> error_history;
};

/// Draws block indices i.i.d. from the configured distribution.
class BlockSampler {
 public:
  BlockSampler(std::span<const double> probs, Index num_blocks);
  Index operator()(std::mt19937_64& rng) { return dist_(rng); }

 private:
  std::discrete_distribution<Index> dist_;
};

/// x + gamma / (M p(i)) * A_i^T (y_i - A_i x) for block i (0-based).
/// Empty `probs` means uniform, giving a scale of exactly gamma. Throws
/// std::invalid_argument when p(i) is not positive.
Vector stoiht_proxy(const ProblemInstance& problem, const Vector& x,
                    Index block, double gamma, std::span<const double> probs);

/// Stochastic IHT from x = 0: sample a block, take the proxy step, keep
/// the s largest entries. Stops once ||y - A x|| < tol.
RunResult run_stoiht(const ProblemInstance& problem, const SolverConfig& cfg);

/// Stochastic IHT whose estimate step keeps the top-s proxy entries plus
/// every index of the fixed `support_estimate`. Iterates may hold up to
/// 2s nonzeros. With an empty estimate this is run_stoiht exactly.
RunResult run_stoiht_oracle(const ProblemInstance& problem,
                            const SolverConfig& cfg,
                            const SupportSet& support_estimate);

/// Full-gradient IHT: x <- H_s(x + gamma A^T (y - A x)).
RunResult run_iht(const ProblemInstance& problem, const SolverConfig& cfg);

/// A size-s support estimate sharing exactly alpha*s indices with
/// `true_support`, the rest drawn from the complement. Throws
/// std::invalid_argument if alpha*s is not an integer or the sizes do not
/// allow it.
SupportSet make_oracle_support(const SupportSet& true_support, double alpha,
                               Index s, Index n, std::uint64_t seed);

}  // namespace stoiht
