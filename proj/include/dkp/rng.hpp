#pragma once

#include <cstdint>
#include <string>

namespace dkp {

/// Deterministic PRNG with explicit distribution algorithms so that streams
/// are reproducible across platforms and standard-library versions
/// (std::*_distribution makes no such guarantee).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    /// splitmix64 step.
    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Unbiased uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal via Box-Muller (no cached spare, one value per call).
    double normal();

private:
    std::uint64_t state_;
};

/// Derives an independent sub-seed from a root seed and a stream name.
std::uint64_t sub_seed(std::uint64_t root, const std::string& name);

}  // namespace dkp
