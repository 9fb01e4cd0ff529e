#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pzero {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);

/// Derives an independent seed for a labeled concern ("dataset", "init",
/// "rollout/7/3", ...) from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t a, std::uint64_t b = 0);

/// mt19937_64 wrapper with platform-independent real draws (the standard
/// distributions are implementation defined, so we avoid them where
/// bit-reproducibility matters).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
    double normal();

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace pzero
