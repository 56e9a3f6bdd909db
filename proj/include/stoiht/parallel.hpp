#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

#include "stoiht/model.hpp"
#include "stoiht/solvers.hpp"
#include "stoiht/tally.hpp"

namespace stoiht {

/// Tally shared between worker threads. Reads are never synchronized with
/// writers. When instrumented, a read is counted as torn if any update was
/// in flight at some point while it ran.
class SharedTally {
 public:
  SharedTally(Index n, bool instrumented);

  void read_into(std::span<Tally::Vote> out);
  void update(const SupportSet& current, const SupportSet& previous, int t);

  const Tally& votes() const { return votes_; }
  std::uint64_t torn_reads() const { return torn_reads_.load(); }
  std::uint64_t reads() const { return reads_.load(); }

 private:
  Tally votes_;
  bool instrumented_;
  std::atomic<std::uint64_t> updates_started_{0};
  std::atomic<std::uint64_t> updates_finished_{0};
  std::atomic<std::uint64_t> torn_reads_{0};
  std::atomic<std::uint64_t> reads_{0};
};

/// Once-set stop flag carrying the winning worker. Among workers that
/// claim it, the lowest id is kept.
class StopSignal {
 public:
  void claim(int worker);
  bool is_set() const { return set_.load(std::memory_order_acquire); }
  int winner() const { return winner_.load(std::memory_order_acquire); }

 private:
  std::atomic<int> winner_{-1};
  std::atomic<bool> set_{false};
};

struct ParallelConfig {
  int workers = 1;
  /// Fraction of workers (the highest ids) that sleep after each iteration.
  double slow_fraction = 0.0;
  std::chrono::microseconds slow_delay{0};
  std::chrono::milliseconds wall_clock_limit{60'000};
  SolverConfig solver;
  IterationOptions iteration;
  bool instrument_reads = false;

  void validate() const;
  int slow_workers() const;
};

struct ParallelResult {
  bool converged = false;
  bool timed_out = false;
  int winning_worker = -1;
  /// Local iterations completed by the winner (max over workers otherwise).
  int time_steps = 0;
  Vector x_hat;
  double final_residual = 0.0;
  double final_error = 0.0;
  double wall_ms = 0.0;
  std::vector<int> worker_iterations;
  std::uint64_t torn_reads = 0;
  std::uint64_t tally_reads = 0;
  std::vector<Tally::Vote> final_tally;
  /// Final tally equals the sum of each worker's iteration count placed on
  /// its last support.
  bool conserved = false;
  /// Per worker, when solver.record_history is set.
  std::vector<std::vector<double>> residual_histories;
};

/// Runs the tally iteration on `workers` threads with no coordination
/// between iterations. The first worker under tolerance raises the stop
/// signal; every worker finishes its in-flight iteration, including the
/// tally update, and exits.
ParallelResult run_async_parallel(const ProblemInstance& problem,
                                  const ParallelConfig& cfg);

struct TornReadReport {
  ParallelResult run;
  std::uint64_t torn_reads = 0;
  std::uint64_t reads = 0;
  double torn_fraction = 0.0;
};

/// run_async_parallel with read instrumentation switched on.
TornReadReport torn_read_stress(const ProblemInstance& problem,
                                ParallelConfig cfg);

}  // namespace stoiht
