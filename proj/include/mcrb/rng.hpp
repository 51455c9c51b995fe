#pragma once

#include <cstdint>
#include <random>

namespace mcrb {

/// Random stream handed to every simulation routine.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Stream for one Monte Carlo trial. The seed is a pure function of the
/// (master_seed, sweep_index, trial_index) counters, so trials can run in
/// any order or in parallel and still reproduce bit-for-bit.
Rng derive_trial_rng(std::uint64_t master_seed, std::uint64_t sweep_index, std::uint64_t trial_index);

/// Auxiliary stream (pseudo-true averaging, population bounds) that must
/// not collide with trial streams. `purpose` distinguishes uses.
Rng derive_aux_rng(std::uint64_t master_seed, std::uint64_t purpose, std::uint64_t index);

/// Standard normal draw. Implemented on top of uniform bits with the polar
/// method so results do not depend on the standard library's distributions.
double standard_normal(Rng& rng);

/// Uniform draw on the open interval (0, 1).
double uniform_open(Rng& rng);

}  // namespace mcrb
