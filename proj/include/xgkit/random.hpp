#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace xgkit {

// Seeded generator with platform-independent derived distributions. The
// standard <random> distributions are implementation-defined, so every
// draw here is built directly on the raw 64-bit engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Uniform real in [0, 1) with 53 random bits.
    double uniform01();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (no cached spare, so state stays a pure engine state).
    double normal();

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string state() const;
    void set_state(const std::string& s);

    // Derives an independent seed from a base seed and a label, e.g. a language code.
    static std::uint64_t derive(std::uint64_t seed, std::string_view label);

private:
    std::mt19937_64 engine_;
};

} // namespace xgkit
