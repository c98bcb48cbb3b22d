#pragma once

#include <cmath>
#include <limits>

namespace syntrack {

// Probabilities are carried in natural-log space; zero is -inf.
constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_from_linear(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

inline double linear_from_log(double lp) { return std::isinf(lp) && lp < 0 ? 0.0 : std::exp(lp); }

inline double log_add(double a, double b) {
    if (a == kLogZero) return b;
    if (b == kLogZero) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

}  // namespace syntrack
