#include "xgkit/random.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/hash.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace xgkit {

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw InputError("Rng::below called with n = 0");
    }
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw InputError("Rng::uniform_int with empty range");
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(below(span));
}

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) {
        throw FormatError("malformed rng state");
    }
}

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view label) {
    Fnv1a h;
    h.update(&seed, sizeof seed);
    h.update(label);
    return h.digest();
}

} // namespace xgkit
