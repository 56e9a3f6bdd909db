#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "stoiht/parallel.hpp"

using namespace stoiht;

namespace {

ProblemInstance small_problem(std::uint64_t seed) {
  return generate_instance(300, 90, 10, 15, 0.0, seed);
}

ParallelConfig config(int workers, std::uint64_t seed) {
  ParallelConfig cfg;
  cfg.workers = workers;
  cfg.solver.sparsity = 10;
  cfg.solver.seed = seed;
  return cfg;
}

Tally::Vote tally_sum(const std::vector<Tally::Vote>& votes) {
  return std::accumulate(votes.begin(), votes.end(), Tally::Vote{0});
}

}  // namespace

TEST_CASE("one worker replays the sequential core loop") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ProblemInstance p = small_problem(seed);
    const ParallelConfig cfg = config(1, seed);
    const ParallelResult result = run_async_parallel(p, cfg);

    CoreState core(0, p, cfg.solver);
    Tally tally(p.n());
    bool converged = false;
    while (!converged && core.t <= cfg.solver.max_iters) {
      converged = async_core_iteration(p, core, tally, cfg.solver);
    }
    CHECK(result.residual_histories.at(0) == core.residual_history);
    CHECK(result.x_hat == core.x);
    CHECK(result.converged == converged);
    CHECK(result.time_steps == core.completed());
    CHECK(result.final_tally == tally.snapshot());
  }
}

TEST_CASE("one worker never sees a torn read") {
  const ProblemInstance p = small_problem(3);
  const TornReadReport report = torn_read_stress(p, config(1, 3));
  CHECK(report.torn_reads == 0);
  CHECK(report.reads == static_cast<std::uint64_t>(report.run.worker_iterations[0]));
  CHECK(report.torn_fraction == 0.0);
}

TEST_CASE("the tally is conserved after every concurrent run") {
  for (int workers : {2, 4, 8}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const ProblemInstance p = small_problem(seed);
      ParallelConfig cfg = config(workers, seed);
      cfg.instrument_reads = seed % 2 == 1;
      const ParallelResult r = run_async_parallel(p, cfg);
      CHECK(r.conserved);
      const int done = std::accumulate(r.worker_iterations.begin(),
                                       r.worker_iterations.end(), 0);
      CHECK(tally_sum(r.final_tally) == 10 * done);
      CHECK(std::all_of(r.final_tally.begin(), r.final_tally.end(),
                        [](auto v) { return v >= 0; }));
      if (cfg.instrument_reads) {
        CHECK(r.tally_reads == static_cast<std::uint64_t>(done));
        CHECK(r.torn_reads <= r.tally_reads);
      }
    }
  }
}

TEST_CASE("slow workers still leave a conserved tally") {
  const ProblemInstance p = small_problem(7);
  ParallelConfig cfg = config(4, 7);
  cfg.slow_fraction = 0.5;
  cfg.slow_delay = std::chrono::microseconds(50);
  const ParallelResult r = run_async_parallel(p, cfg);
  CHECK(r.conserved);
  CHECK(r.converged);
}

TEST_CASE("concurrent workers recover small problems") {
  int converged = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ParallelResult r = run_async_parallel(small_problem(seed), config(4, seed));
    if (r.converged) {
      ++converged;
      CHECK(r.final_residual < 1e-7);
      CHECK(r.winning_worker >= 0);
      CHECK(r.time_steps == r.worker_iterations[static_cast<std::size_t>(r.winning_worker)]);
    }
  }
  CHECK(converged >= 9);
}

TEST_CASE("an expired wall clock stops the run without convergence") {
  const ProblemInstance p = small_problem(1);
  ParallelConfig cfg = config(2, 1);
  cfg.wall_clock_limit = std::chrono::milliseconds(0);
  const ParallelResult r = run_async_parallel(p, cfg);
  CHECK(r.timed_out);
  CHECK_FALSE(r.converged);
  CHECK(r.conserved);
}

TEST_CASE("the stop signal keeps the lowest claiming worker") {
  StopSignal stop;
  CHECK_FALSE(stop.is_set());
  CHECK(stop.winner() == -1);
  stop.claim(5);
  CHECK(stop.is_set());
  CHECK(stop.winner() == 5);
  stop.claim(7);
  CHECK(stop.winner() == 5);
  stop.claim(2);
  CHECK(stop.winner() == 2);

  StopSignal raced;
  {
    std::vector<std::jthread> threads;
    for (int id = 15; id >= 0; --id) threads.emplace_back([&raced, id] { raced.claim(id); });
  }
  CHECK(raced.winner() == 0);
}

TEST_CASE("concurrent tally updates are never lost") {
  constexpr Index n = 64;
  constexpr int threads = 8;
  constexpr int iterations = 2000;
  SharedTally tally(n, true);
  std::vector<SupportSet> last(threads);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        std::mt19937_64 rng(static_cast<std::uint64_t>(w));
        std::vector<Index> all(n);
        std::iota(all.begin(), all.end(), Index{0});
        std::vector<Tally::Vote> scratch(n);
        SupportSet previous;
        for (int t = 1; t <= iterations; ++t) {
          tally.read_into(scratch);
          std::vector<Index> pick;
          std::sample(all.begin(), all.end(), std::back_inserter(pick), 6, rng);
          SupportSet current(pick);
          tally.update(current, previous, t);
          previous = std::move(current);
        }
        last[static_cast<std::size_t>(w)] = previous;
      });
    }
  }
  std::vector<Tally::Vote> expected(n, 0);
  for (const auto& support : last) {
    for (Index j : support) expected[static_cast<std::size_t>(j)] += iterations;
  }
  CHECK(tally.votes().snapshot() == expected);
  CHECK(tally.reads() == static_cast<std::uint64_t>(threads) * iterations);
  CHECK(tally.torn_reads() <= tally.reads());
}

TEST_CASE("parallel configuration is validated") {
  ParallelConfig cfg;
  cfg.workers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.workers = 3;
  cfg.slow_fraction = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.slow_fraction = 2.0 / 3.0;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.slow_workers() == 2);
}
