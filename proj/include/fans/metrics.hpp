#pragma once
// Evaluation battery for attribution vectors: infidelity, IROF, fidelity+/-,
// max-sensitivity, sparseness and recall@N.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fans/error.hpp"
#include "fans/model.hpp"
#include "fans/parallel.hpp"
#include "fans/perturb.hpp"
#include "fans/random.hpp"
#include "fans/vector.hpp"

namespace fans {

using Attribution = Vector;

namespace detail {

inline void check_attribution(std::span<const double> a, std::size_t d, const char* metric) {
    if (a.size() != d)
        throw ShapeError(std::string(metric) + ": attribution has " + std::to_string(a.size()) + " entries, expected " +
                         std::to_string(d));
    if (!all_finite(a)) throw NumericError(std::string(metric) + ": attribution has non-finite entries");
}

// Indices sorted by score descending; ties keep the lower index first.
inline std::vector<std::size_t> rank_descending(std::span<const double> a) {
    std::vector<std::size_t> order(a.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i] > a[j]; });
    return order;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Infidelity

/// Monte-Carlo E_{m ~ U(0,1)^d}[((x - x o m)^T a - (f(x) - f(x o m)))^2].
inline double infidelity(std::span<const double> a, std::span<const double> x, const Predictor& model, Readout readout,
                         std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("infidelity: n must be at least 1");
    const std::size_t d = x.size();
    require_size(x, model.input_dim(), "infidelity input");
    detail::check_attribution(a, d, "infidelity");
    const double fx = predict_scalar(model, x, readout);
    std::vector<double> sq(n);
    parallel_for(n, [&](std::size_t j) {
        Rng rng = Rng::stream(seed, StreamTag::metric, {1, j});
        Vector xm(d);
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double m = rng.uniform();
            xm[k] = x[k] * m;
            proj += (x[k] - xm[k]) * a[k];
        }
        const double r = proj - (fx - predict_scalar(model, xm, readout));
        sq[j] = r * r;
    });
    return std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// IROF

/// Partition of [0, d) into nonempty disjoint segments.
class Segmentation {
public:
    explicit Segmentation(std::vector<std::vector<std::size_t>> segments, std::size_t d)
        : segments_(std::move(segments)), dim_(d) {
        std::vector<bool> seen(d, false);
        std::size_t covered = 0;
        for (const auto& seg : segments_) {
            if (seg.empty()) throw ConfigError("segmentation: empty segment");
            for (std::size_t i : seg) {
                if (i >= d) throw ConfigError("segmentation: index " + std::to_string(i) + " out of range");
                if (seen[i]) throw ConfigError("segmentation: index " + std::to_string(i) + " in two segments");
                seen[i] = true;
                ++covered;
            }
        }
        if (covered != d) throw ConfigError("segmentation does not cover every feature");
    }

    /// One segment per feature.
    static Segmentation per_feature(std::size_t d) {
        std::vector<std::vector<std::size_t>> segs(d);
        for (std::size_t i = 0; i < d; ++i) segs[i] = {i};
        return Segmentation(std::move(segs), d);
    }

    /// Square tiles of side `tile` over a row-major h x w image; edge tiles may be smaller.
    static Segmentation tiles(std::size_t h, std::size_t w, std::size_t tile) {
        if (tile == 0) throw ConfigError("segmentation: tile size must be positive");
        std::vector<std::vector<std::size_t>> segs;
        for (std::size_t r0 = 0; r0 < h; r0 += tile)
            for (std::size_t c0 = 0; c0 < w; c0 += tile) {
                std::vector<std::size_t> seg;
                for (std::size_t r = r0; r < std::min(h, r0 + tile); ++r)
                    for (std::size_t c = c0; c < std::min(w, c0 + tile); ++c) seg.push_back(r * w + c);
                segs.push_back(std::move(seg));
            }
        return Segmentation(std::move(segs), h * w);
    }

    std::size_t size() const { return segments_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::size_t>& operator[](std::size_t l) const { return segments_[l]; }

private:
    std::vector<std::vector<std::size_t>> segments_;
    std::size_t dim_;
};

/// L minus the trapezoid area under y_0 = 1, y_1, ..., y_L.
inline double area_over_curve(std::span<const double> y) {
    if (y.size() < 2) throw ConfigError("area_over_curve needs at least two points");
    double area = 0.0;
    for (std::size_t l = 1; l < y.size(); ++l) area += 0.5 * (y[l - 1] + y[l]);
    return static_cast<double>(y.size() - 1) - area;
}

/// Score of class k. A single-output model scores class 1 by its output y
/// and class 0 by the reflection 2 t - y about its decision threshold t
/// (1 - y for a sigmoid head).
inline double class_score(const Predictor& model, std::span<const double> x, std::size_t k) {
    const Vector p = model.predict(x);
    if (p.size() == 1) {
        if (k > 1) throw ConfigError("class " + std::to_string(k) + " out of range for a single-output model");
        return k == 1 ? p[0] : 2.0 * model.decision_threshold() - p[0];
    }
    if (k >= p.size()) throw ConfigError("class " + std::to_string(k) + " out of range");
    return p[k];
}

/// Normalised class scores f(x_l)_k / f(x)_k after removing the top l
/// segments (by mean attribution) to the baseline, l = 0..L.
inline std::vector<double> irof_curve(std::span<const double> a, std::span<const double> x, const Predictor& model,
                                      std::size_t cls, const Segmentation& seg, const Baseline& baseline) {
    const std::size_t d = x.size();
    detail::check_attribution(a, d, "irof");
    if (seg.dim() != d) throw ShapeError("irof: segmentation dimension does not match the input");
    require_size(baseline.values, d, "irof baseline");
    const std::size_t L = seg.size();
    if (L < 2) throw ConfigError("irof needs at least two segments");

    std::vector<double> means(L);
    for (std::size_t l = 0; l < L; ++l) {
        double s = 0.0;
        for (std::size_t i : seg[l]) s += a[i];
        means[l] = s / static_cast<double>(seg[l].size());
    }
    const auto order = detail::rank_descending(means);

    const double f0 = class_score(model, x, cls);
    if (f0 == 0.0) throw NumericError("irof: class score f(x) is 0, normalisation is undefined");
    std::vector<double> y{1.0};
    Vector z(x.begin(), x.end());
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t i : seg[order[l]]) z[i] = baseline.values[i];
        y.push_back(class_score(model, z, cls) / f0);
    }
    return y;
}

/// Mean area over the curve across inputs, each scored on its predicted class.
inline double irof(std::span<const Attribution> attributions, std::span<const Vector> inputs, const Predictor& model,
                   const Segmentation& seg, const Baseline& baseline) {
    if (attributions.size() != inputs.size()) throw ShapeError("irof: attribution and input lists differ in length");
    if (inputs.empty()) throw ConfigError("irof: no inputs");
    double total = 0.0;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const std::size_t cls = predicted_class(model, inputs[j]);
        total += area_over_curve(irof_curve(attributions[j], inputs[j], model, cls, seg, baseline));
    }
    return total / static_cast<double>(inputs.size());
}

// ---------------------------------------------------------------------------
// Fidelity

/// Binary indicator of the ceil(keep_fraction * d) highest-scoring features.
inline std::vector<double> top_k_mask(std::span<const double> a, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("keep fraction must lie in (0, 1]");
    const std::size_t d = a.size();
    const auto k = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(d) - 1e-9));
    const auto order = detail::rank_descending(a);
    std::vector<double> m(d, 0.0);
    for (std::size_t j = 0; j < std::min(k, d); ++j) m[order[j]] = 1.0;
    return m;
}

namespace detail {

// 1 - fraction of inputs whose predicted class survives x o keep(m).
inline double fidelity_with_masks(std::span<const std::vector<double>> masks, std::span<const Vector> inputs,
                                  const Predictor& model, bool remove) {
    if (masks.size() != inputs.size()) throw ShapeError("fidelity: mask and input lists differ in length");
    if (inputs.empty()) throw ConfigError("fidelity: no inputs");
    std::size_t same = 0;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const Vector& x = inputs[j];
        require_size(masks[j], x.size(), "fidelity mask");
        Vector z(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * (remove ? 1.0 - masks[j][i] : masks[j][i]);
        same += predicted_class(model, x) == predicted_class(model, z);
    }
    return 1.0 - static_cast<double>(same) / static_cast<double>(inputs.size());
}

inline std::vector<std::vector<double>> top_k_masks(std::span<const Attribution> attribs,
                                                    std::span<const Vector> inputs, double keep_fraction) {
    if (attribs.size() != inputs.size()) throw ShapeError("fidelity: attribution and input lists differ in length");
    std::vector<std::vector<double>> masks;
    for (std::size_t j = 0; j < attribs.size(); ++j) {
        check_attribution(attribs[j], inputs[j].size(), "fidelity");
        masks.push_back(top_k_mask(attribs[j], keep_fraction));
    }
    return masks;
}

}  // namespace detail

/// FID+ with explicit binary masks: fraction of predictions that change when
/// the masked features are zeroed.
inline double fidelity_plus_masks(std::span<const std::vector<double>> masks, std::span<const Vector> inputs,
                                  const Predictor& model) {
    return detail::fidelity_with_masks(masks, inputs, model, true);
}

/// FID- with explicit binary masks: fraction of predictions that change when
/// only the masked features are kept.
inline double fidelity_minus_masks(std::span<const std::vector<double>> masks, std::span<const Vector> inputs,
                                   const Predictor& model) {
    return detail::fidelity_with_masks(masks, inputs, model, false);
}

inline double fidelity_plus(std::span<const Attribution> attribs, std::span<const Vector> inputs,
                            const Predictor& model, double keep_fraction = 0.25) {
    const auto masks = detail::top_k_masks(attribs, inputs, keep_fraction);
    return fidelity_plus_masks(masks, inputs, model);
}

inline double fidelity_minus(std::span<const Attribution> attribs, std::span<const Vector> inputs,
                             const Predictor& model, double keep_fraction = 0.25) {
    const auto masks = detail::top_k_masks(attribs, inputs, keep_fraction);
    return fidelity_minus_masks(masks, inputs, model);
}

// ---------------------------------------------------------------------------
// Max-sensitivity

using Explainer = std::function<Attribution(std::span<const double>)>;

/// max over n points z = x + r u, u ~ U[-1, 1]^d, of ||h(z) - h(x)||_2.
/// The directions u depend only on the seed, so the result is monotone in r
/// for explainers that are monotone along rays.
inline double max_sensitivity(const Explainer& explainer, std::span<const double> x, double r, std::size_t n,
                              std::uint64_t seed) {
    if (n == 0) throw ConfigError("max_sensitivity: n must be at least 1");
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("max_sensitivity: radius must be nonnegative");
    const Attribution base = explainer(x);
    std::vector<double> diff(n, 0.0);
    parallel_for(n, [&](std::size_t j) {
        Rng rng = Rng::stream(seed, StreamTag::metric, {2, j});
        Vector z(x.begin(), x.end());
        for (double& v : z) v += r * rng.uniform(-1.0, 1.0);
        const Attribution az = explainer(z);
        if (az.size() != base.size()) throw ShapeError("max_sensitivity: explainer changed output length");
        double s = 0.0;
        for (std::size_t k = 0; k < az.size(); ++k) s += (az[k] - base[k]) * (az[k] - base[k]);
        diff[j] = std::sqrt(s);
    });
    return *std::max_element(diff.begin(), diff.end());
}

// ---------------------------------------------------------------------------
// Sparseness

enum class SparsenessSort { ascending, descending };

/// Gini index 1 - 2 sum_d (s_d / ||s||_1) (D - d + 0.5) / D over sorted |a|.
/// Ascending order gives values in [0, 1 - 1/D]; descending reproduces the
/// formula with the opposite ordering.
inline double sparseness(std::span<const double> a, SparsenessSort order = SparsenessSort::ascending) {
    if (a.empty()) throw ConfigError("sparseness: empty attribution");
    if (!all_finite(a)) throw NumericError("sparseness: attribution has non-finite entries");
    std::vector<double> s(a.size());
    std::transform(a.begin(), a.end(), s.begin(), [](double v) { return std::abs(v); });
    if (order == SparsenessSort::ascending)
        std::sort(s.begin(), s.end());
    else
        std::sort(s.begin(), s.end(), std::greater<>());
    const double l1 = std::accumulate(s.begin(), s.end(), 0.0);
    if (!(l1 > 0.0)) throw NumericError("sparseness: all-zero attribution has undefined sparseness");
    const double D = static_cast<double>(s.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double rank = static_cast<double>(i + 1);
        acc += (s[i] / l1) * ((D - rank + 0.5) / D);
    }
    return 1.0 - 2.0 * acc;
}

// ---------------------------------------------------------------------------
// Recall@N

/// |top-N(a) & truth| / |truth|; ties rank the lower index first.
inline double recall_at_n(std::span<const double> a, const DimSubset& truth, std::size_t N) {
    if (truth.size() == 0) throw ConfigError("recall_at_n: ground truth is empty");
    if (N == 0) throw ConfigError("recall_at_n: N must be at least 1");
    if (truth.dim() != a.size()) throw ShapeError("recall_at_n: ground truth dimension mismatch");
    const auto order = detail::rank_descending(a);
    std::size_t hits = 0;
    for (std::size_t j = 0; j < std::min(N, a.size()); ++j) hits += truth.contains(order[j]);
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Report

/// Metric values with the configuration that produced each, in insertion order.
class MetricReport {
public:
    void add(const std::string& name, double value, nlohmann::ordered_json config = nlohmann::ordered_json::object()) {
        nlohmann::ordered_json entry;
        entry["value"] = value;
        entry["config"] = std::move(config);
        entries_[name] = std::move(entry);
    }

    void add_error(const std::string& name, const std::string& message, nlohmann::ordered_json config = {}) {
        nlohmann::ordered_json entry;
        entry["value"] = nullptr;
        entry["error"] = message;
        entry["config"] = config.is_null() ? nlohmann::ordered_json::object() : std::move(config);
        entries_[name] = std::move(entry);
    }

    bool contains(const std::string& name) const { return entries_.contains(name); }
    double value(const std::string& name) const { return entries_.at(name).at("value").get<double>(); }
    const nlohmann::ordered_json& to_json() const { return entries_; }

private:
    nlohmann::ordered_json entries_ = nlohmann::ordered_json::object();
};

}  // namespace fans
