#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stablecir {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stateless seed for replicate `replicate` at grid point `grid` of a study.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t grid, std::uint64_t replicate) noexcept {
    std::uint64_t s = splitmix64(master);
    s = splitmix64(s ^ (grid * 0xD1B54A32D192ED03ULL));
    s = splitmix64(s ^ (replicate * 0xABC98388FB8FAC03ULL));
    return s;
}

/// A random stream owned by exactly one thread. Same seed gives the same sequence.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0,1), 53-bit resolution.
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() { return normal_(engine_); }

    /// Standard exponential draw.
    double exponential() { return -std::log(uniform_open()); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace stablecir
