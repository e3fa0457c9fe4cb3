#pragma once
// Dual-stage perturbation tests and PNS assembly for a hard feature subset.
//
// Factual stage: resample E by the sufficiency (resp. necessity) weights.
// Interventional stage: on each resampled input apply the opposite
// perturbation t times and count prediction changes (PS) or non-changes (PN).
// Assembly: pns = PN * P(A,B) + PS * P(not A, not B).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "fans/error.hpp"
#include "fans/parallel.hpp"
#include "fans/perturb.hpp"
#include "fans/random.hpp"
#include "fans/sir.hpp"

namespace fans {

/// Switches that remove one module of the estimator.
struct Ablation {
    bool disable_sufficiency = false;
    bool disable_necessity = false;
    bool disable_sir = false;

    void validate() const {
        if (disable_sufficiency && disable_necessity)
            throw ConfigError("cannot disable both the sufficiency and the necessity module");
    }
};

struct AttributionConfig {
    EventParams ev;
    double phi = 0.5;
    std::size_t n_inner = 8;        // mask draws per soft weight
    std::size_t t_sf = 50;          // perturbations per sufficiency sample
    std::size_t t_nc = 50;          // perturbations per necessity sample
    std::size_t resample_size = 0;  // 0 = |E|
    Ablation ablation;
    std::uint64_t seed = 0;
};

struct AttributionResult {
    double pn = 0.0;
    double ps = 0.0;
    double p_ab = 0.0;
    double p_nanb = 0.0;
    double pns = 0.0;
    double raw_sum_ab = 0.0;
    double raw_sum_nanb = 0.0;
    EventParams ev;
    DimSubset subset;
    // diagnostics
    std::vector<std::size_t> sf_indices;  // factual set for PS, as indices into E
    std::vector<std::size_t> nc_indices;  // factual set for PN
    std::size_t perturbations = 0;        // model evaluations in the interventional stage
    bool sf_empty = false;                // no sample carried sufficiency weight
    bool nc_empty = false;

    double necessity_term() const { return pn * p_ab; }
    double sufficiency_term() const { return ps * p_nanb; }
};

/// b = 1.06 * |E|^(1/(4+d)), evaluated as written.
inline double estimate_boundary_b(std::size_t n, std::size_t d) {
    if (n == 0 || d == 0) throw ConfigError("boundary heuristic needs |E| >= 1 and d >= 1");
    return 1.06 * std::pow(static_cast<double>(n), 1.0 / (4.0 + static_cast<double>(d)));
}

/// c = max over x in E and n_noise draws eps ~ N(0, sigma^2 I) of |f(x) - f(x + eps)|.
inline double estimate_threshold_c(const SampleSet& samples, const Predictor& model, Readout readout, double sigma,
                                   std::size_t n_noise, std::uint64_t seed) {
    if (samples.empty()) throw ConfigError("threshold heuristic needs a nonempty sample set");
    if (!(sigma > 0.0)) throw ConfigError("noise scale sigma must be positive");
    if (n_noise == 0) throw ConfigError("n_noise must be at least 1");
    check_readout(model, readout);
    std::vector<double> per_sample(samples.size(), 0.0);
    parallel_for(samples.size(), [&](std::size_t i) {
        Rng rng = Rng::stream(seed, StreamTag::threshold_noise, {i});
        const Vector& x = samples[i];
        const double fx = predict_scalar(model, x, readout);
        double worst = 0.0;
        Vector noisy(x.size());
        for (std::size_t j = 0; j < n_noise; ++j) {
            for (std::size_t k = 0; k < x.size(); ++k) noisy[k] = x[k] + sigma * rng.normal();
            worst = std::max(worst, std::abs(fx - predict_scalar(model, noisy, readout)));
        }
        per_sample[i] = worst;
    });
    double c = 0.0;
    for (double v : per_sample) c = std::max(c, v);
    return c;
}

struct HeuristicsConfig {
    double sigma = 0.001;
    std::size_t n_noise = 10;
    std::uint64_t seed = 0;
    std::optional<double> b_override;
    std::optional<double> c_override;
};

/// Boundary and threshold actually used, with their provenance.
struct Heuristics {
    double b = 1.0;
    double c = 0.0;
    bool b_overridden = false;
    bool c_overridden = false;
    double sigma = 0.001;
    std::size_t n_noise = 10;
};

inline Heuristics compute_heuristics(const SampleSet& samples, const AttributionContext& ctx,
                                     const HeuristicsConfig& cfg) {
    Heuristics h;
    h.sigma = cfg.sigma;
    h.n_noise = cfg.n_noise;
    if (cfg.b_override) {
        h.b = *cfg.b_override;
        h.b_overridden = true;
    } else {
        h.b = estimate_boundary_b(samples.size(), ctx.dim());
    }
    if (cfg.c_override) {
        h.c = *cfg.c_override;
        h.c_overridden = true;
    } else {
        h.c = estimate_threshold_c(samples, ctx.model, ctx.readout, cfg.sigma, cfg.n_noise, cfg.seed);
    }
    EventParams{h.b, h.c, 2}.validate();
    return h;
}

namespace detail {

// Mean over items and t perturbations of indicator(|f(g(x, subset)) - f(x)| > c)
// (count_changes) or <= c (otherwise).
inline double interventional_frequency(const SampleSet& factual, const AttributionContext& ctx,
                                       const DimSubset& subset, double c, std::size_t t, double phi,
                                       std::uint64_t seed, StreamTag tag, bool count_changes) {
    if (t == 0) throw ConfigError("number of perturbations t must be at least 1");
    std::vector<std::size_t> hits(factual.size(), 0);
    parallel_for(factual.size(), [&](std::size_t j) {
        Rng rng = Rng::stream(seed, tag, {j});
        const Vector& x = factual[j];
        const double fx = ctx.f(x);
        std::size_t count = 0;
        for (std::size_t r = 0; r < t; ++r) {
            const Mask m = sample_mask(x.size(), phi, rng);
            const bool changed = std::abs(ctx.f(perturb(x, subset, ctx.baseline, m)) - fx) > c;
            count += changed == count_changes;
        }
        hits[j] = count;
    });
    const double total = std::accumulate(hits.begin(), hits.end(), 0.0);
    return total / (static_cast<double>(factual.size()) * static_cast<double>(t));
}

}  // namespace detail

/// Fraction of perturbations on s that move the prediction by more than c.
inline double estimate_ps(const SampleSet& factual_sf, const AttributionContext& ctx, const DimSubset& s, double c,
                          std::size_t t_sf, double phi, std::uint64_t seed) {
    if (factual_sf.empty())
        throw EmptySupportError("sufficiency factual set is empty: the sufficiency condition had empty support");
    return detail::interventional_frequency(factual_sf, ctx, s, c, t_sf, phi, seed, StreamTag::perturb_sufficiency,
                                            true);
}

/// Fraction of perturbations on the complement of s that leave the
/// prediction within c.
inline double estimate_pn(const SampleSet& factual_nc, const AttributionContext& ctx, const DimSubset& s, double c,
                          std::size_t t_nc, double phi, std::uint64_t seed) {
    if (factual_nc.empty())
        throw EmptySupportError("necessity factual set is empty: the necessity condition had empty support");
    return detail::interventional_frequency(factual_nc, ctx, s.complement(), c, t_nc, phi, seed,
                                            StreamTag::perturb_necessity, false);
}

/// Full pipeline for one subset: soft weights -> SIR -> PS/PN -> joint
/// probabilities -> PNS. A side whose weights are all zero contributes 0
/// and is flagged; if both sides are empty an EmptySupportError is thrown.
inline AttributionResult attribution_for_subset(const AttributionContext& ctx, const DimSubset& s,
                                                const SampleSet& samples, const AttributionConfig& cfg) {
    cfg.ev.validate();
    cfg.ablation.validate();
    if (samples.empty()) throw ConfigError("attribution needs a nonempty sample set");
    require_size(std::span<const double>(samples[0]), ctx.dim(), "sample");
    if (s.dim() != ctx.dim()) throw ShapeError("subset dimension does not match the input");

    const std::size_t n = samples.size();
    std::vector<double> w_sf(n), w_nc(n);
    parallel_for(n, [&](std::size_t i) {
        const Vector& x = samples[i];
        const double fx = ctx.f(x);
        Rng rs = Rng::stream(cfg.seed, StreamTag::weight_sufficiency, {i});
        Rng rn = Rng::stream(cfg.seed, StreamTag::weight_necessity, {i});
        w_sf[i] = weight_sufficiency(x, fx, ctx, s, cfg.ev, cfg.phi, cfg.n_inner, rs);
        w_nc[i] = weight_necessity(x, fx, ctx, s, cfg.ev, cfg.phi, cfg.n_inner, rn);
    });

    AttributionResult out;
    out.ev = cfg.ev;
    out.subset = s;
    const JointProbs jp = estimate_joint_probs(w_nc, w_sf);
    out.p_ab = jp.p_ab;
    out.p_nanb = jp.p_nanb;
    out.raw_sum_ab = jp.raw_sum_ab;
    out.raw_sum_nanb = jp.raw_sum_nanb;

    const std::size_t k = cfg.resample_size == 0 ? n : cfg.resample_size;
    auto factual = [&](std::span<const double> w, StreamTag tag, bool& empty) {
        std::vector<std::size_t> idx;
        if (cfg.ablation.disable_sir) {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            return idx;
        }
        if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) {
            empty = true;
            return idx;
        }
        Rng rng = Rng::stream(cfg.seed, tag);
        return sir_resample(w, k, rng);
    };

    if (!cfg.ablation.disable_sufficiency) {
        out.sf_indices = factual(w_sf, StreamTag::resample_sufficiency, out.sf_empty);
        if (!out.sf_empty) {
            out.ps = estimate_ps(samples.select(out.sf_indices), ctx, s, cfg.ev.c, cfg.t_sf, cfg.phi, cfg.seed);
            out.perturbations += out.sf_indices.size() * cfg.t_sf;
        }
    }
    if (!cfg.ablation.disable_necessity) {
        out.nc_indices = factual(w_nc, StreamTag::resample_necessity, out.nc_empty);
        if (!out.nc_empty) {
            out.pn = estimate_pn(samples.select(out.nc_indices), ctx, s, cfg.ev.c, cfg.t_nc, cfg.phi, cfg.seed);
            out.perturbations += out.nc_indices.size() * cfg.t_nc;
        }
    }
    const bool sf_missing = out.sf_empty || cfg.ablation.disable_sufficiency;
    const bool nc_missing = out.nc_empty || cfg.ablation.disable_necessity;
    if (sf_missing && nc_missing)
        throw EmptySupportError("no in-neighborhood samples on either side; increase b or |E|");

    out.pns = out.pn * out.p_ab + out.ps * out.p_nanb;
    return out;
}

struct SweepRow {
    double b = 0.0;
    double c = 0.0;
    double pns = 0.0;
    double pn = 0.0;
    double ps = 0.0;
    bool heuristic = false;
    bool empty_support = false;
};

/// PNS over a (b, c) grid with a common seed. Rows matching the heuristic
/// point exactly are flagged.
inline std::vector<SweepRow> sweep_event_params(const AttributionContext& ctx, const DimSubset& s,
                                                const SampleSet& samples, const AttributionConfig& base,
                                                std::span<const double> b_grid, std::span<const double> c_grid,
                                                const Heuristics& heur) {
    if (b_grid.empty() || c_grid.empty()) throw ConfigError("sweep grid is empty");
    std::vector<SweepRow> rows;
    for (double b : b_grid) {
        for (double c : c_grid) {
            AttributionConfig cfg = base;
            cfg.ev.b = b;
            cfg.ev.c = c;
            SweepRow row{b, c};
            row.heuristic = b == heur.b && c == heur.c;
            try {
                const AttributionResult r = attribution_for_subset(ctx, s, samples, cfg);
                row.pns = r.pns;
                row.pn = r.pn;
                row.ps = r.ps;
            } catch (const EmptySupportError&) {
                row.empty_support = true;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace fans
