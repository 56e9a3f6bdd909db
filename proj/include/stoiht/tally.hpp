#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "stoiht/model.hpp"
#include "stoiht/solvers.hpp"

namespace stoiht {

/// Length-n vote vector shared by the cores. Every component supports an
/// indivisible add from any thread. Whole-vector reads load component by
/// component and are not synchronized with writers.
class Tally {
 public:
  using Vote = std::int64_t;

  explicit Tally(Index n);

  Index size() const { return static_cast<Index>(votes_.size()); }
  Vote load(Index j) const {
    return votes_[static_cast<std::size_t>(j)].load(std::memory_order_relaxed);
  }
  void add(Index j, Vote delta) {
    votes_[static_cast<std::size_t>(j)].fetch_add(delta, std::memory_order_relaxed);
  }

  /// Copies the components into `out` one relaxed load at a time.
  void read_into(std::span<Vote> out) const;
  std::vector<Vote> snapshot() const;
  Vote total() const;

 private:
  std::vector<std::atomic<Vote>> votes_;
};

/// Indices of the s largest votes, ties to the lowest index.
SupportSet top_voted(std::span<const Tally::Vote> votes, Index s);

/// top_voted over a component-wise read of the tally.
SupportSet tally_read_top(const Tally& tally, Index s);

/// Adds t on `current` and removes t-1 from `previous` (the same core's
/// support from iteration t-1, empty when t == 1). Increments are applied
/// before decrements so a core's own contribution never goes negative.
void tally_update(Tally& tally, const SupportSet& current,
                  const SupportSet& previous, int t);

enum class CoreSpeed { fast, slow };

/// How the support estimate is formed while the tally holds no votes.
enum class ColdStart {
  tie_fill,  // top_voted of the zero vector, i.e. {0, ..., s-1}
  empty,     // no extra indices until some vote is nonzero
};

struct IterationOptions {
  ColdStart cold_start = ColdStart::tie_fill;
  /// Test hook: always use an empty tally estimate.
  bool force_empty_estimate = false;
};

/// One core's private state. `t` is the number of the next iteration.
struct CoreState {
  CoreState(int id, const ProblemInstance& problem, const SolverConfig& cfg,
            CoreSpeed speed = CoreSpeed::fast);

  int id;
  Vector x;
  int t = 1;
  SupportSet last_support;
  std::mt19937_64 rng;
  BlockSampler sampler;
  CoreSpeed speed;
  double residual;
  std::vector<double> residual_history;

  int completed() const { return t - 1; }
};

/// Output of the randomize, proxy, identify and estimate steps, before
/// the tally is touched.
struct CoreProposal {
  Vector x_next;
  SupportSet identified;
  double residual = 0.0;
};

/// Support estimate a core takes from a vote vector it has read.
SupportSet support_estimate(std::span<const Tally::Vote> votes, Index s,
                            const IterationOptions& options);

CoreProposal propose_iteration(const ProblemInstance& problem, CoreState& core,
                               const SupportSet& tally_estimate,
                               const SolverConfig& cfg);

/// Moves the proposal into the core and advances it to t + 1. Does not
/// touch any tally.
void advance_core(CoreState& core, CoreProposal proposal, bool record_history);

/// Applies the proposal's tally update and advances the core to t + 1.
void commit_iteration(CoreState& core, Tally& tally, CoreProposal proposal,
                      bool record_history);

/// One full asynchronous iteration against `tally`. Returns whether the
/// new iterate satisfies ||y - A x|| < tol.
bool async_core_iteration(const ProblemInstance& problem, CoreState& core,
                          Tally& tally, const SolverConfig& cfg,
                          const IterationOptions& options = {});

struct SimConfig {
  int cores = 1;
  /// Fraction of cores (the highest ids) that are slow.
  double slow_fraction = 0.0;
  /// Slow cores act on steps slow_period, 2 slow_period, ...
  int slow_period = 4;
  SolverConfig solver;
  IterationOptions iteration;
  /// Verify the tally bookkeeping at every step; throws std::logic_error.
  bool audit = false;
  bool record_snapshots = false;
  bool record_audit_log = false;

  void validate() const;
  int slow_cores() const;
};

/// One line of the per-step audit log.
struct AuditRow {
  int step = 0;
  int active_cores = 0;
  Tally::Vote sum_phi = 0;
  bool winner = false;
};

struct SimResult {
  /// Elapsed steps until exit, or max_iters without convergence.
  int time_steps = 0;
  int winning_core = -1;
  bool converged = false;
  Vector x_hat;
  double final_residual = 0.0;
  double final_error = 0.0;
  std::vector<int> core_iterations;
  std::vector<Tally::Vote> final_tally;
  /// Per core, when solver.record_history is set.
  std::vector<std::vector<double>> residual_histories;
  /// Tally after each step, when record_snapshots is set.
  std::vector<std::vector<Tally::Vote>> tally_snapshots;
  std::vector<AuditRow> audit_log;
};

/// Lockstep multi-core simulation of the tally iteration. Each step, the
/// active cores read the same start-of-step tally, all compute, all
/// updates are applied, and the lowest-id active core under tolerance
/// ends the run. Deterministic given the configuration.
SimResult simulate_async(const ProblemInstance& problem, const SimConfig& cfg);

/// `step,active_cores,sum_phi,winner_flag` per line.
void write_audit_log(std::ostream& out, std::span<const AuditRow> rows);

}  // namespace stoiht
