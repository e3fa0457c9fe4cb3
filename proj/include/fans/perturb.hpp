#pragma once
// Perturbation engine: baselines, Bernoulli masks, the hard perturbation
// that replaces masked coordinates of a subset by the baseline, and its
// relaxations over a continuous mask s in [0,1]^d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fans/error.hpp"
#include "fans/random.hpp"
#include "fans/vector.hpp"

namespace fans {

enum class DataKind { tabular, image };

inline std::string_view to_string(DataKind k) { return k == DataKind::image ? "image" : "tabular"; }

inline DataKind parse_data_kind(std::string_view s) {
    if (s == "tabular") return DataKind::tabular;
    if (s == "image") return DataKind::image;
    throw ConfigError("unknown data kind '" + std::string(s) + "'");
}

enum class BaselineKind { zeros, uniform, user };

inline std::string_view to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::zeros: return "zeros";
        case BaselineKind::uniform: return "uniform";
        case BaselineKind::user: return "user";
    }
    return "?";
}

/// Stand-in value x' a feature takes when it is perturbed.
struct Baseline {
    Vector values;
    BaselineKind kind = BaselineKind::zeros;

    std::size_t dim() const { return values.size(); }
};

inline Baseline zero_baseline(std::size_t d) { return Baseline{Vector(d, 0.0), BaselineKind::zeros}; }

inline Baseline user_baseline(Vector values) {
    if (!all_finite(values)) throw ConfigError("baseline has non-finite entries");
    return Baseline{std::move(values), BaselineKind::user};
}

/// Image data: i.i.d. Uniform[0,1]^d. Tabular data: all zeros.
inline Baseline default_baseline(DataKind kind, std::size_t d, Rng& rng) {
    if (d == 0) throw ConfigError("baseline dimension must be positive");
    if (kind == DataKind::tabular) return zero_baseline(d);
    Baseline b{Vector(d), BaselineKind::uniform};
    for (double& v : b.values) v = rng.uniform();
    return b;
}

/// Sorted set of distinct feature indices in [0, d).
class DimSubset {
public:
    DimSubset() = default;

    DimSubset(std::vector<std::size_t> indices, std::size_t d) : indices_(std::move(indices)), dim_(d) {
        std::sort(indices_.begin(), indices_.end());
        if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
            throw ConfigError("subset has duplicate indices");
        if (!indices_.empty() && indices_.back() >= d)
            throw ConfigError("subset index " + std::to_string(indices_.back()) + " out of range for d = " +
                              std::to_string(d));
    }

    static DimSubset full(std::size_t d) {
        std::vector<std::size_t> all(d);
        for (std::size_t i = 0; i < d; ++i) all[i] = i;
        return DimSubset(std::move(all), d);
    }

    static DimSubset empty(std::size_t d) { return DimSubset({}, d); }

    /// Coordinates where s_i >= 0.5.
    static DimSubset from_mask(std::span<const double> s) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= 0.5) idx.push_back(i);
        return DimSubset(std::move(idx), s.size());
    }

    DimSubset complement() const {
        std::vector<std::size_t> rest;
        std::size_t j = 0;
        for (std::size_t i = 0; i < dim_; ++i) {
            if (j < indices_.size() && indices_[j] == i) {
                ++j;
                continue;
            }
            rest.push_back(i);
        }
        return DimSubset(std::move(rest), dim_);
    }

    bool contains(std::size_t i) const { return std::binary_search(indices_.begin(), indices_.end(), i); }

    /// 0/1 indicator vector of length d.
    Vector indicator() const {
        Vector v(dim_, 0.0);
        for (std::size_t i : indices_) v[i] = 1.0;
        return v;
    }

    const std::vector<std::size_t>& indices() const { return indices_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return indices_.size(); }
    bool empty() const { return indices_.empty(); }

    friend bool operator==(const DimSubset&, const DimSubset&) = default;

private:
    std::vector<std::size_t> indices_;
    std::size_t dim_ = 0;
};

/// Binary replacement mask; 1 means "take the baseline value".
using Mask = std::vector<std::uint8_t>;

/// i.i.d. Bernoulli(phi) entries for all d coordinates; consumers read only
/// the coordinates they perturb.
inline Mask sample_mask(std::size_t d, double phi, Rng& rng) {
    if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("Bernoulli parameter phi must lie in [0, 1]");
    Mask m(d);
    for (auto& v : m) v = rng.bernoulli(phi) ? 1 : 0;
    return m;
}

/// Hard perturbation: on s, x_i -> (1 - m_i) x_i + m_i x'_i; off s unchanged.
inline Vector perturb(std::span<const double> x, const DimSubset& s, const Baseline& baseline, const Mask& m) {
    require_size(baseline.values, x.size(), "baseline");
    require_size(std::span<const double>(x), s.dim(), "subset dimension");
    if (m.size() != x.size()) throw ShapeError("mask length does not match input");
    Vector out(x.begin(), x.end());
    for (std::size_t i : s.indices())
        if (m[i]) out[i] = baseline.values[i];
    return out;
}

/// Literal relaxation: out_i = (1 - m_i) x_i s_i + m_i x'_i s_i.
/// Coordinates with s_i = 0 are zeroed, unlike the hard perturbation.
inline Vector relaxed_perturb(std::span<const double> x, std::span<const double> s, const Baseline& baseline,
                              const Mask& m) {
    require_size(s, x.size(), "relaxed mask");
    require_size(baseline.values, x.size(), "baseline");
    if (m.size() != x.size()) throw ShapeError("mask length does not match input");
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (m[i] ? baseline.values[i] : x[i]) * s[i];
    return out;
}

/// Diagonal of d relaxed_perturb / d s: (1 - m_i) x_i + m_i x'_i.
inline Vector relaxed_perturb_derivative(std::span<const double> x, const Baseline& baseline, const Mask& m) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = m[i] ? baseline.values[i] : x[i];
    return out;
}

/// Corner-consistent relaxation: out_i = x_i + s_i m_i (x'_i - x_i).
/// Equals the hard perturbation for every binary s.
inline Vector blended_perturb(std::span<const double> x, std::span<const double> s, const Baseline& baseline,
                              const Mask& m) {
    require_size(s, x.size(), "relaxed mask");
    require_size(baseline.values, x.size(), "baseline");
    if (m.size() != x.size()) throw ShapeError("mask length does not match input");
    Vector out(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i)
        if (m[i]) out[i] += s[i] * (baseline.values[i] - x[i]);
    return out;
}

/// Diagonal of d blended_perturb / d s: m_i (x'_i - x_i).
inline Vector blended_perturb_derivative(std::span<const double> x, const Baseline& baseline, const Mask& m) {
    Vector out(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (m[i]) out[i] = baseline.values[i] - x[i];
    return out;
}

inline void check_norm_order(int p) {
    if (p != 1 && p != 2) throw ConfigError("unsupported norm order p = " + std::to_string(p) + " (use 1 or 2)");
}

inline void check_relaxed_mask(std::span<const double> s) {
    for (double v : s)
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("relaxed mask entries must lie in [0, 1]");
}

/// ||(x - xt) o (1 - s)||_p.
inline double masked_distance(std::span<const double> x, std::span<const double> xt, std::span<const double> s,
                              int p = 2) {
    check_norm_order(p);
    require_size(xt, x.size(), "target");
    require_size(s, x.size(), "relaxed mask");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = (x[i] - xt[i]) * (1.0 - s[i]);
        acc += p == 1 ? std::abs(v) : v * v;
    }
    return p == 1 ? acc : std::sqrt(acc);
}

/// ||x_S - xt_S||_p over the coordinates of a hard subset.
inline double subset_distance(std::span<const double> x, std::span<const double> xt, const DimSubset& s, int p = 2) {
    check_norm_order(p);
    require_size(xt, x.size(), "target");
    double acc = 0.0;
    for (std::size_t i : s.indices()) {
        const double v = x[i] - xt[i];
        acc += p == 1 ? std::abs(v) : v * v;
    }
    return p == 1 ? acc : std::sqrt(acc);
}

}  // namespace fans
