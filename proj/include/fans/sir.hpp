#pragma once
// Sampling-importance-resampling for the factual stages.
//
// Each observed sample x gets a weight that approximates the probability
// of the factual event given x:
//   sufficiency:  K_b(||x_sbar - xt_sbar||) * E_m[K_c(f(g(x, sbar)) - f(x))]
//   necessity:    K_b(||x_s - xt_s||)       * E_m[1 - K_c(f(g(x, s)) - f(x))]
// with Gaussian kernels K_b(u) = exp(-u^2 / 2b^2), K_c(u) = exp(-u^2 / 2c^2).
// Resampling proportionally to these weights approximates the conditional
// distributions of the factual stage; the weight means estimate the joint
// probabilities of the two conditioning events.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fans/error.hpp"
#include "fans/model.hpp"
#include "fans/perturb.hpp"
#include "fans/random.hpp"
#include "fans/vector.hpp"

namespace fans {

/// Observed inputs drawn from the data distribution.
class SampleSet {
public:
    SampleSet() = default;

    explicit SampleSet(std::vector<Vector> rows) : rows_(std::move(rows)) {
        for (const Vector& r : rows_)
            if (r.size() != rows_.front().size()) throw ShapeError("sample set rows have inconsistent lengths");
    }

    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    std::size_t dim() const { return rows_.empty() ? 0 : rows_.front().size(); }
    const Vector& operator[](std::size_t i) const { return rows_[i]; }
    const std::vector<Vector>& rows() const { return rows_; }

    SampleSet select(std::span<const std::size_t> indices) const {
        std::vector<Vector> out;
        out.reserve(indices.size());
        for (std::size_t i : indices) out.push_back(rows_.at(i));
        return SampleSet(std::move(out));
    }

private:
    std::vector<Vector> rows_;
};

/// Boundary b of the neighbourhood, prediction-change threshold c, norm order p.
struct EventParams {
    double b = 1.0;
    double c = 0.0;
    int p = 2;

    void validate() const {
        if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("boundary b must be positive");
        if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("threshold c must be nonnegative");
        check_norm_order(p);
    }
};

/// Everything fixed for one explanation: the model, the input being
/// explained, the baseline and the scalar readout.
struct AttributionContext {
    const Predictor& model;
    Vector target;
    Baseline baseline;
    Readout readout;

    AttributionContext(const Predictor& m, Vector xt, Baseline base, std::optional<Readout> r = std::nullopt)
        : model(m), target(std::move(xt)), baseline(std::move(base)), readout(r ? *r : readout_for(m, target)) {
        require_size(target, model.input_dim(), "target input");
        require_size(baseline.values, model.input_dim(), "baseline");
        check_readout(model, readout);
    }

    std::size_t dim() const { return target.size(); }
    double f(std::span<const double> x) const { return predict_scalar(model, x, readout); }
};

inline double distance_kernel(double distance, double b) { return std::exp(-(distance * distance) / (2.0 * b * b)); }

/// exp(-delta^2 / 2c^2); for c = 0 the exact-equality indicator.
inline double prediction_kernel(double delta, double c) {
    if (c == 0.0) return delta == 0.0 ? 1.0 : 0.0;
    return std::exp(-(delta * delta) / (2.0 * c * c));
}

namespace detail {

// Mean of kernel(f(g(x, subset)) - f(x)) over n_inner mask draws.
template <class Kernel>
double mean_over_masks(std::span<const double> x, double fx, const AttributionContext& ctx, const DimSubset& subset,
                       double phi, std::size_t n_inner, Rng& rng, Kernel&& kernel) {
    if (n_inner == 0) throw ConfigError("n_inner must be at least 1");
    double acc = 0.0;
    for (std::size_t j = 0; j < n_inner; ++j) {
        const Mask m = sample_mask(x.size(), phi, rng);
        acc += kernel(ctx.f(perturb(x, subset, ctx.baseline, m)) - fx);
    }
    return acc / static_cast<double>(n_inner);
}

}  // namespace detail

/// Soft weight for the sufficiency factual stage (perturbation on the complement).
inline double weight_sufficiency(std::span<const double> x, double fx, const AttributionContext& ctx,
                                 const DimSubset& s, const EventParams& ev, double phi, std::size_t n_inner, Rng& rng) {
    const DimSubset sbar = s.complement();
    const double kb = distance_kernel(subset_distance(x, ctx.target, sbar, ev.p), ev.b);
    return kb * detail::mean_over_masks(x, fx, ctx, sbar, phi, n_inner, rng,
                                        [&](double d) { return prediction_kernel(d, ev.c); });
}

inline double weight_sufficiency(std::span<const double> x, const AttributionContext& ctx, const DimSubset& s,
                                 const EventParams& ev, double phi, std::size_t n_inner, Rng& rng) {
    return weight_sufficiency(x, ctx.f(x), ctx, s, ev, phi, n_inner, rng);
}

/// Soft weight for the necessity factual stage (perturbation on s).
inline double weight_necessity(std::span<const double> x, double fx, const AttributionContext& ctx, const DimSubset& s,
                               const EventParams& ev, double phi, std::size_t n_inner, Rng& rng) {
    const double kb = distance_kernel(subset_distance(x, ctx.target, s, ev.p), ev.b);
    return kb * detail::mean_over_masks(x, fx, ctx, s, phi, n_inner, rng,
                                        [&](double d) { return 1.0 - prediction_kernel(d, ev.c); });
}

inline double weight_necessity(std::span<const double> x, const AttributionContext& ctx, const DimSubset& s,
                               const EventParams& ev, double phi, std::size_t n_inner, Rng& rng) {
    return weight_necessity(x, ctx.f(x), ctx, s, ev, phi, n_inner, rng);
}

/// Unnormalised hard weight: 0 outside the b-ball on the complement,
/// otherwise the Monte-Carlo frequency of |f(g(x, sbar)) - f(x)| <= c.
inline double weight_hard(std::span<const double> x, const AttributionContext& ctx, const DimSubset& s,
                          const EventParams& ev, double phi, std::size_t n_inner, Rng& rng) {
    const DimSubset sbar = s.complement();
    if (subset_distance(x, ctx.target, sbar, ev.p) > ev.b) return 0.0;
    return detail::mean_over_masks(x, ctx.f(x), ctx, sbar, phi, n_inner, rng,
                                   [&](double d) { return std::abs(d) <= ev.c ? 1.0 : 0.0; });
}

/// k indices drawn with replacement, P(i) proportional to weights[i].
inline std::vector<std::size_t> sir_resample(std::span<const double> weights, std::size_t k, Rng& rng) {
    if (k == 0) throw ConfigError("resample size must be at least 1");
    std::vector<double> cumulative(weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
            throw NumericError("resampling weight " + std::to_string(i) + " is negative or non-finite");
        total += weights[i];
        cumulative[i] = total;
    }
    if (!(total > 0.0)) throw EmptySupportError("no in-neighborhood samples; increase b or |E|");
    std::vector<std::size_t> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
        if (i >= weights.size()) i = weights.size() - 1;
        while (weights[i] == 0.0 && i > 0) --i;  // u landed on a plateau edge
        out[j] = i;
    }
    return out;
}

inline SampleSet sir_resample(const SampleSet& samples, std::span<const double> weights, std::size_t k, Rng& rng) {
    if (weights.size() != samples.size()) throw ShapeError("one weight per sample required");
    const auto idx = sir_resample(weights, k, rng);
    return samples.select(idx);
}

/// Estimated P(A, B) and P(not A, not B) as weight means over E.
struct JointProbs {
    double p_ab = 0.0;
    double p_nanb = 0.0;
    double raw_sum_ab = 0.0;    // undivided sums, for debugging
    double raw_sum_nanb = 0.0;
};

inline JointProbs estimate_joint_probs(std::span<const double> w_nc, std::span<const double> w_sf) {
    if (w_nc.empty() || w_sf.empty()) throw ConfigError("joint probabilities need a nonempty sample set");
    if (w_nc.size() != w_sf.size()) throw ShapeError("weight vectors differ in length");
    JointProbs jp;
    for (double w : w_nc) jp.raw_sum_ab += w;
    for (double w : w_sf) jp.raw_sum_nanb += w;
    const double n = static_cast<double>(w_nc.size());
    jp.p_ab = std::clamp(jp.raw_sum_ab / n, 0.0, 1.0);
    jp.p_nanb = std::clamp(jp.raw_sum_nanb / n, 0.0, 1.0);
    return jp;
}

}  // namespace fans
