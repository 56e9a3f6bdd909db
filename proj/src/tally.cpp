#include "stoiht/tally.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "stoiht/seeding.hpp"

namespace stoiht {

Tally::Tally(Index n) : votes_(static_cast<std::size_t>(n)) {
  if (n <= 0) throw std::invalid_argument("Tally: size must be positive");
}

void Tally::read_into(std::span<Vote> out) const {
  for (std::size_t j = 0; j < votes_.size(); ++j) {
    out[j] = votes_[j].load(std::memory_order_relaxed);
  }
}

std::vector<Tally::Vote> Tally::snapshot() const {
  std::vector<Vote> out(votes_.size());
  read_into(out);
  return out;
}

Tally::Vote Tally::total() const {
  Vote sum = 0;
  for (const auto& v : votes_) sum += v.load(std::memory_order_relaxed);
  return sum;
}

SupportSet top_voted(std::span<const Tally::Vote> votes, Index s) {
  const auto n = static_cast<Index>(votes.size());
  if (s < 0 || s > n) throw std::invalid_argument("top_voted: need 0 <= s <= n");
  std::vector<Index> order(votes.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::nth_element(order.begin(), order.begin() + s, order.end(),
                   [votes](Index i, Index j) {
                     const auto vi = votes[static_cast<std::size_t>(i)];
                     const auto vj = votes[static_cast<std::size_t>(j)];
                     return vi > vj || (vi == vj && i < j);
                   });
  order.resize(static_cast<std::size_t>(s));
  return SupportSet(std::move(order));
}

SupportSet tally_read_top(const Tally& tally, Index s) {
  return top_voted(tally.snapshot(), s);
}

void tally_update(Tally& tally, const SupportSet& current,
                  const SupportSet& previous, int t) {
  if (t < 1) throw std::invalid_argument("tally_update: t must be >= 1");
  if (t == 1 && !previous.empty()) {
    throw std::invalid_argument("tally_update: no previous support at t = 1");
  }
  for (Index j : current) tally.add(j, t);
  if (t > 1) {
    for (Index j : previous) tally.add(j, -(t - 1));
  }
}

CoreState::CoreState(int core_id, const ProblemInstance& problem,
                     const SolverConfig& cfg, CoreSpeed core_speed)
    : id(core_id),
      x(Vector::Zero(problem.n())),
      rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(core_id))),
      sampler(cfg.probs, problem.num_blocks()),
      speed(core_speed),
      residual(problem.y().norm()) {}

SupportSet support_estimate(std::span<const Tally::Vote> votes, Index s,
                            const IterationOptions& options) {
  if (options.force_empty_estimate) return {};
  if (options.cold_start == ColdStart::empty &&
      std::all_of(votes.begin(), votes.end(), [](auto v) { return v == 0; })) {
    return {};
  }
  return top_voted(votes, s);
}

CoreProposal propose_iteration(const ProblemInstance& problem, CoreState& core,
                               const SupportSet& tally_estimate,
                               const SolverConfig& cfg) {
  CoreProposal out;
  const Index block = core.sampler(core.rng);
  const Vector proxy = stoiht_proxy(problem, core.x, block, cfg.gamma, cfg.probs);
  out.identified = largest_support(proxy, cfg.sparsity);
  out.x_next = project(proxy, out.identified.unite(tally_estimate));
  out.residual = residual_norm(problem, out.x_next);
  return out;
}

void advance_core(CoreState& core, CoreProposal proposal, bool record_history) {
  core.last_support = std::move(proposal.identified);
  core.x = std::move(proposal.x_next);
  core.residual = proposal.residual;
  if (record_history) core.residual_history.push_back(core.residual);
  ++core.t;
}

void commit_iteration(CoreState& core, Tally& tally, CoreProposal proposal,
                      bool record_history) {
  tally_update(tally, proposal.identified, core.last_support, core.t);
  advance_core(core, std::move(proposal), record_history);
}

bool async_core_iteration(const ProblemInstance& problem, CoreState& core,
                          Tally& tally, const SolverConfig& cfg,
                          const IterationOptions& options) {
  const SupportSet estimate =
      support_estimate(tally.snapshot(), cfg.sparsity, options);
  CoreProposal proposal = propose_iteration(problem, core, estimate, cfg);
  const bool converged = proposal.residual < cfg.tol;
  commit_iteration(core, tally, std::move(proposal), cfg.record_history);
  return converged;
}

void SimConfig::validate() const {
  if (cores < 1) throw std::invalid_argument("cores must be >= 1");
  if (slow_period < 1) throw std::invalid_argument("slow_period must be >= 1");
  if (!(slow_fraction >= 0.0 && slow_fraction <= 1.0)) {
    throw std::invalid_argument("slow_fraction must lie in [0, 1]");
  }
  const double slow = slow_fraction * cores;
  if (std::abs(slow - std::round(slow)) > 1e-9) {
    throw std::invalid_argument(fmt::format(
        "slow_fraction * cores = {} is not an integer", slow));
  }
}

int SimConfig::slow_cores() const {
  return static_cast<int>(std::lround(slow_fraction * cores));
}

namespace {

void audit_step(const std::vector<CoreState>& cores, const Tally& tally,
                Index s, int step) {
  const auto votes = tally.snapshot();
  std::vector<Tally::Vote> expected(votes.size(), 0);
  Tally::Vote expected_sum = 0;
  for (const auto& core : cores) {
    expected_sum += static_cast<Tally::Vote>(s) * core.completed();
    for (Index j : core.last_support) {
      expected[static_cast<std::size_t>(j)] += core.completed();
    }
  }
  const auto sum = std::accumulate(votes.begin(), votes.end(), Tally::Vote{0});
  if (sum != expected_sum) {
    throw std::logic_error(fmt::format(
        "tally conservation broken at step {}: sum {} != {}", step, sum,
        expected_sum));
  }
  if (std::any_of(votes.begin(), votes.end(), [](auto v) { return v < 0; })) {
    throw std::logic_error(fmt::format("negative tally entry at step {}", step));
  }
  if (votes != expected) {
    throw std::logic_error(fmt::format(
        "tally differs from per-core contributions at step {}", step));
  }
}

}  // namespace

SimResult simulate_async(const ProblemInstance& problem, const SimConfig& cfg) {
  cfg.validate();
  cfg.solver.validate(problem.num_blocks());
  if (cfg.solver.sparsity > problem.n()) {
    throw std::invalid_argument("sparsity exceeds the signal dimension");
  }

  const int slow_from = cfg.cores - cfg.slow_cores();
  std::vector<CoreState> cores;
  cores.reserve(static_cast<std::size_t>(cfg.cores));
  for (int k = 0; k < cfg.cores; ++k) {
    cores.emplace_back(k, problem, cfg.solver,
                       k >= slow_from ? CoreSpeed::slow : CoreSpeed::fast);
  }
  Tally tally(problem.n());
  std::vector<Tally::Vote> votes(static_cast<std::size_t>(problem.n()));
  std::vector<CoreState*> active;
  std::vector<CoreProposal> proposals;

  SimResult result;
  for (int step = 1; step <= cfg.solver.max_iters; ++step) {
    tally.read_into(votes);
    const SupportSet estimate =
        support_estimate(votes, cfg.solver.sparsity, cfg.iteration);

    active.clear();
    for (auto& core : cores) {
      if (core.speed == CoreSpeed::fast || step % cfg.slow_period == 0) {
        active.push_back(&core);
      }
    }
    proposals.clear();
    for (CoreState* core : active) {
      proposals.push_back(propose_iteration(problem, *core, estimate, cfg.solver));
    }
    int winner = -1;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (winner < 0 && proposals[k].residual < cfg.solver.tol) {
        winner = active[k]->id;
      }
      commit_iteration(*active[k], tally, std::move(proposals[k]),
                       cfg.solver.record_history);
    }

    if (cfg.audit) audit_step(cores, tally, cfg.solver.sparsity, step);
    if (cfg.record_snapshots) result.tally_snapshots.push_back(tally.snapshot());
    if (cfg.record_audit_log) {
      result.audit_log.push_back(AuditRow{step, static_cast<int>(active.size()),
                                          tally.total(), winner >= 0});
    }
    result.time_steps = step;
    if (winner >= 0) {
      result.converged = true;
      result.winning_core = winner;
      break;
    }
  }

  const CoreState* reported = nullptr;
  if (result.converged) {
    reported = &cores[static_cast<std::size_t>(result.winning_core)];
  } else {
    reported = &*std::min_element(
        cores.begin(), cores.end(),
        [](const CoreState& a, const CoreState& b) { return a.residual < b.residual; });
  }
  result.x_hat = reported->x;
  result.final_residual = reported->residual;
  result.final_error = (reported->x - problem.x_true()).norm();
  result.final_tally = tally.snapshot();
  for (auto& core : cores) {
    result.core_iterations.push_back(core.completed());
    if (cfg.solver.record_history) {
      result.residual_histories.push_back(std::move(core.residual_history));
    }
  }
  return result;
}

void write_audit_log(std::ostream& out, std::span<const AuditRow> rows) {
  out << "step,active_cores,sum_phi,winner_flag\n";
  for (const auto& row : rows) {
    out << fmt::format("{},{},{},{}\n", row.step, row.active_cores, row.sum_phi,
                       row.winner ? 1 : 0);
  }
}

}  // namespace stoiht
