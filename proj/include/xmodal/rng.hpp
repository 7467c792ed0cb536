#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace xmodal {

// Mixes a 64-bit value (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

// Derives an independent stream seed from a root seed, a stream name and an
// optional index. Every component (data, init, mask, swap, shuffle) draws from
// derive_seed(root, name, index) so runs are reproducible from one seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

// Explicit random stream. Distributions are computed here from raw
// mt19937_64 output rather than through <random> distributions, whose
// algorithms differ between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace xmodal
