#pragma once

#include <cstdint>

namespace stoiht {

/// SplitMix64 finalizer; a bijective mix of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

/// Seed of random stream `stream` under master `seed`: seed xor hash(stream).
/// Sequential solvers draw from stream 0, and simulated or threaded core k
/// from stream k, so core 0 replays the sequential block sequence.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed ^ mix64(stream);
}

/// Seed for one purpose (instance, solver, oracle support, ...) of one
/// trial of an experiment.
constexpr std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial,
                                   std::uint64_t purpose) {
  return mix64(mix64(master ^ mix64(trial)) + purpose);
}

}  // namespace stoiht
