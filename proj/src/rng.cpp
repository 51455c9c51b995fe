#include "mcrb/rng.hpp"

#include <cmath>

namespace mcrb {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

Rng seeded_from(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t domain) {
    std::uint64_t h = splitmix64(a ^ domain);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ (c + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
    return Rng(seq);
}

}  // namespace

Rng derive_trial_rng(std::uint64_t master_seed, std::uint64_t sweep_index, std::uint64_t trial_index) {
    return seeded_from(master_seed, sweep_index, trial_index, 0x5452494c4bULL);
}

Rng derive_aux_rng(std::uint64_t master_seed, std::uint64_t purpose, std::uint64_t index) {
    return seeded_from(master_seed, purpose, index, 0x415558ULL);
}

double uniform_open(Rng& rng) {
    // 53 random bits, shifted off zero.
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    for (;;) {
        const double u = 2.0 * uniform_open(rng) - 1.0;
        const double v = 2.0 * uniform_open(rng) - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

}  // namespace mcrb
