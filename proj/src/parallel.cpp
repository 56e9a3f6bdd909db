#include "stoiht/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace stoiht {

SharedTally::SharedTally(Index n, bool instrumented)
    : votes_(n), instrumented_(instrumented) {}

void SharedTally::read_into(std::span<Tally::Vote> out) {
  if (!instrumented_) {
    votes_.read_into(out);
    return;
  }
  const auto started = updates_started_.load(std::memory_order_seq_cst);
  const auto finished = updates_finished_.load(std::memory_order_seq_cst);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  votes_.read_into(out);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  const auto started_after = updates_started_.load(std::memory_order_seq_cst);
  reads_.fetch_add(1, std::memory_order_relaxed);
  if (started != finished || started_after != started) {
    torn_reads_.fetch_add(1, std::memory_order_relaxed);
  }
}

void SharedTally::update(const SupportSet& current, const SupportSet& previous,
                         int t) {
  if (instrumented_) {
    updates_started_.fetch_add(1, std::memory_order_seq_cst);
    std::atomic_thread_fence(std::memory_order_seq_cst);
  }
  tally_update(votes_, current, previous, t);
  if (instrumented_) {
    std::atomic_thread_fence(std::memory_order_seq_cst);
    updates_finished_.fetch_add(1, std::memory_order_seq_cst);
  }
}

void StopSignal::claim(int worker) {
  int current = winner_.load(std::memory_order_relaxed);
  while ((current < 0 || worker < current) &&
         !winner_.compare_exchange_weak(current, worker,
                                        std::memory_order_acq_rel)) {
  }
  set_.store(true, std::memory_order_release);
}

void ParallelConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (!(slow_fraction >= 0.0 && slow_fraction <= 1.0)) {
    throw std::invalid_argument("slow_fraction must lie in [0, 1]");
  }
  const double slow = slow_fraction * workers;
  if (std::abs(slow - std::round(slow)) > 1e-9) {
    throw std::invalid_argument(fmt::format(
        "slow_fraction * workers = {} is not an integer", slow));
  }
  if (slow_delay.count() < 0) throw std::invalid_argument("slow_delay must be >= 0");
}

int ParallelConfig::slow_workers() const {
  return static_cast<int>(std::lround(slow_fraction * workers));
}

namespace {

struct WorkerOutcome {
  Vector x;
  double residual = 0.0;
  int iterations = 0;
  SupportSet last_support;
  std::vector<double> history;
};

}  // namespace

ParallelResult run_async_parallel(const ProblemInstance& problem,
                                  const ParallelConfig& cfg) {
  cfg.validate();
  cfg.solver.validate(problem.num_blocks());
  if (cfg.solver.sparsity > problem.n()) {
    throw std::invalid_argument("sparsity exceeds the signal dimension");
  }

  SharedTally tally(problem.n(), cfg.instrument_reads);
  StopSignal stop;
  std::atomic<bool> timed_out{false};
  std::vector<WorkerOutcome> outcomes(static_cast<std::size_t>(cfg.workers));
  const int slow_from = cfg.workers - cfg.slow_workers();
  const auto start = std::chrono::steady_clock::now();
  const auto deadline = start + cfg.wall_clock_limit;

  auto work = [&](int id) {
    CoreState core(id, problem, cfg.solver,
                   id >= slow_from ? CoreSpeed::slow : CoreSpeed::fast);
    std::vector<Tally::Vote> votes(static_cast<std::size_t>(problem.n()));
    while (!stop.is_set() && core.t <= cfg.solver.max_iters) {
      if (std::chrono::steady_clock::now() > deadline) {
        timed_out.store(true, std::memory_order_relaxed);
        break;
      }
      tally.read_into(votes);
      const SupportSet estimate =
          support_estimate(votes, cfg.solver.sparsity, cfg.iteration);
      CoreProposal proposal = propose_iteration(problem, core, estimate, cfg.solver);
      const bool converged = proposal.residual < cfg.solver.tol;
      tally.update(proposal.identified, core.last_support, core.t);
      advance_core(core, std::move(proposal), cfg.solver.record_history);
      if (converged) {
        stop.claim(id);
        break;
      }
      if (core.speed == CoreSpeed::slow && cfg.slow_delay.count() > 0) {
        std::this_thread::sleep_for(cfg.slow_delay);
      }
    }
    auto& out = outcomes[static_cast<std::size_t>(id)];
    out.x = std::move(core.x);
    out.residual = core.residual;
    out.iterations = core.completed();
    out.last_support = std::move(core.last_support);
    out.history = std::move(core.residual_history);
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(cfg.workers));
    for (int id = 0; id < cfg.workers; ++id) threads.emplace_back(work, id);
  }

  ParallelResult result;
  result.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  result.timed_out = timed_out.load();
  result.winning_worker = stop.winner();
  result.converged = result.winning_worker >= 0;

  const WorkerOutcome* reported = nullptr;
  if (result.converged) {
    reported = &outcomes[static_cast<std::size_t>(result.winning_worker)];
    result.time_steps = reported->iterations;
  } else {
    reported = &*std::min_element(outcomes.begin(), outcomes.end(),
                                  [](const auto& a, const auto& b) {
                                    return a.residual < b.residual;
                                  });
    for (const auto& o : outcomes) {
      result.time_steps = std::max(result.time_steps, o.iterations);
    }
  }
  result.x_hat = reported->x;
  result.final_residual = reported->residual;
  result.final_error = (reported->x - problem.x_true()).norm();
  result.torn_reads = tally.torn_reads();
  result.tally_reads = tally.reads();
  result.final_tally = tally.votes().snapshot();

  std::vector<Tally::Vote> expected(result.final_tally.size(), 0);
  for (auto& o : outcomes) {
    result.worker_iterations.push_back(o.iterations);
    for (Index j : o.last_support) {
      expected[static_cast<std::size_t>(j)] += o.iterations;
    }
    if (cfg.solver.record_history) {
      result.residual_histories.push_back(std::move(o.history));
    }
  }
  result.conserved = expected == result.final_tally;
  return result;
}

TornReadReport torn_read_stress(const ProblemInstance& problem,
                                ParallelConfig cfg) {
  cfg.instrument_reads = true;
  TornReadReport report;
  report.run = run_async_parallel(problem, cfg);
  report.torn_reads = report.run.torn_reads;
  report.reads = report.run.tally_reads;
  report.torn_fraction =
      report.reads == 0 ? 0.0
                        : static_cast<double>(report.torn_reads) /
                              static_cast<double>(report.reads);
  return report;
}

}  // namespace stoiht
