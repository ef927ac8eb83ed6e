#pragma once

#include <cstdint>
#include <random>

namespace embchord::sim {

/// Single seeded generator feeding every random draw in a run. Determinism
/// follows from the event loop's fixed ordering: same seed, same draw
/// sequence, same run.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
    }

    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    /// Bernoulli draw used for per-fragment loss.
    bool chance(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return unit() < p;
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace embchord::sim
