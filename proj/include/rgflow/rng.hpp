#pragma once

#include <cstdint>
#include <random>

namespace rgflow {

/// Deterministic double generation on top of mt19937_64. The standard
/// distributions are implementation-defined, so uniforms are derived from the
/// raw 64-bit stream directly; results are identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Uniform in [-1, 1).
    double symmetric() { return 2.0 * uniform01() - 1.0; }

    std::uint64_t raw() { return engine_(); }

    /// Independent stream for a subtask; stable under reordering of subtasks.
    static Rng substream(std::uint64_t seed, std::uint64_t task) {
        // splitmix64 of (seed, task) so neighbouring tasks decorrelate
        std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (task + 1);
        x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27; x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return Rng(x);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace rgflow
