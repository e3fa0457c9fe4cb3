#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fans/error.hpp"

namespace fans {

using Vector = std::vector<double>;

inline void require_size(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
    }
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double norm_inf(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// ||a - b||_2 / max(||a||_2, ||b||_2, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(diff) / std::max({norm2(a), norm2(b), floor});
}

}  // namespace fans
