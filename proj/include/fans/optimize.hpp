#pragma once
// Gradient ascent on the relaxed PNS objective over a mask s in [0,1]^d.
//
// The hard estimator is smoothed in three places:
//   * distances use ||(x - xt) o (1 - s)|| (sufficiency) and ||(x - xt) o s||
//     (necessity) instead of hard restrictions to a subset;
//   * perturbations take s as a continuous selection (see Relaxation);
//   * the PS / PN indicators become 1 - exp(-|delta|) and exp(-|delta|).
// Resampled factual indices and all mask draws are fixed per evaluation
// (ObjectiveDraws), which makes the objective a deterministic, piecewise
// smooth function of s whose gradient can be checked by finite differences.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fans/error.hpp"
#include "fans/parallel.hpp"
#include "fans/perturb.hpp"
#include "fans/pns.hpp"
#include "fans/random.hpp"
#include "fans/sir.hpp"

namespace fans {

/// 1 - exp(-|delta|): smooth stand-in for "the prediction changed".
inline double smooth_change(double delta) { return 1.0 - std::exp(-std::abs(delta)); }

/// exp(-|delta|): smooth stand-in for "the prediction stayed".
inline double smooth_same(double delta) { return std::exp(-std::abs(delta)); }

inline double smooth_change_derivative(double delta) {
    const double sign = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
    return sign * std::exp(-std::abs(delta));
}

/// How a continuous mask selects the perturbed coordinates.
///   blended: x + s o m o (x' - x); identical to the hard perturbation at
///            binary s.
///   literal: s o ((1 - m) o x + m o x'); zeroes coordinates where s = 0.
enum class Relaxation { blended, literal };

inline std::string_view to_string(Relaxation r) { return r == Relaxation::literal ? "literal" : "blended"; }

inline Relaxation parse_relaxation(std::string_view s) {
    if (s == "blended") return Relaxation::blended;
    if (s == "literal") return Relaxation::literal;
    throw ConfigError("unknown relaxation '" + std::string(s) + "'");
}

struct OptimizeConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 30;
    std::size_t t = 50;             // perturbations per factual sample
    std::size_t resample_size = 1;  // 0 = |E|
    std::size_t n_inner = 8;
    double phi = 0.5;
    double init = 0.5;
    Ablation ablation;
    Relaxation relaxation = Relaxation::blended;
    double fd_step = 1e-3;  // used only when the model has no gradient channel
    std::uint64_t seed = 0;

    /// Image-like data: lr 0.001, 50 epochs. Tabular / graph-like: lr 0.1, 30 epochs.
    static OptimizeConfig for_kind(DataKind kind) {
        OptimizeConfig cfg;
        if (kind == DataKind::image) {
            cfg.learning_rate = 0.001;
            cfg.epochs = 50;
        }
        return cfg;
    }

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (t == 0) throw ConfigError("number of perturbations t must be at least 1");
        if (n_inner == 0) throw ConfigError("n_inner must be at least 1");
        if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("phi must lie in [0, 1]");
        if (!(init >= 0.0 && init <= 1.0)) throw ConfigError("initial mask value must lie in [0, 1]");
        if (!(fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
        ablation.validate();
    }
};

/// Frozen randomness for one objective evaluation.
struct ObjectiveDraws {
    std::uint64_t seed = 0;
    std::vector<std::size_t> sf_indices;
    std::vector<std::size_t> nc_indices;
    bool sf_empty = false;
    bool nc_empty = false;
};

struct ObjectiveValue {
    double value = 0.0;
    double pn = 0.0;
    double ps = 0.0;
    double p_ab = 0.0;
    double p_nanb = 0.0;
    double necessity_term = 0.0;    // pn * p_ab (0 when ablated or empty)
    double sufficiency_term = 0.0;  // ps * p_nanb
    Vector gradient;
    bool sf_empty = false;
    bool nc_empty = false;
};

class SmoothObjective {
public:
    SmoothObjective(const AttributionContext& ctx, const SampleSet& samples, EventParams ev, OptimizeConfig cfg)
        : ctx_(ctx), samples_(samples), ev_(ev), cfg_(cfg) {
        ev_.validate();
        cfg_.validate();
        if (samples_.empty()) throw ConfigError("optimizer needs a nonempty sample set");
        require_size(std::span<const double>(samples_[0]), ctx_.dim(), "sample");
        fx_.resize(samples_.size());
        parallel_for(samples_.size(), [&](std::size_t i) { fx_[i] = ctx_.f(samples_[i]); });
    }

    const OptimizeConfig& config() const { return cfg_; }
    const EventParams& event_params() const { return ev_; }
    std::size_t dim() const { return ctx_.dim(); }

    /// Resamples the factual sets from the soft weights at s.
    ObjectiveDraws draw(std::span<const double> s, std::uint64_t seed) const {
        require_size(s, dim(), "relaxed mask");
        ObjectiveDraws dr;
        dr.seed = seed;
        const std::size_t n = samples_.size();
        if (cfg_.ablation.disable_sir) {
            dr.sf_indices.resize(n);
            std::iota(dr.sf_indices.begin(), dr.sf_indices.end(), std::size_t{0});
            dr.nc_indices = dr.sf_indices;
            return dr;
        }
        std::vector<double> w_sf(n), w_nc(n);
        parallel_for(n, [&](std::size_t i) {
            w_sf[i] = sample_weight(i, s, seed, true, nullptr);
            w_nc[i] = sample_weight(i, s, seed, false, nullptr);
        });
        const std::size_t k = cfg_.resample_size == 0 ? n : cfg_.resample_size;
        auto pick = [&](const std::vector<double>& w, StreamTag tag, bool& empty) {
            if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) {
                empty = true;
                return std::vector<std::size_t>{};
            }
            Rng rng = Rng::stream(seed, tag);
            return sir_resample(w, k, rng);
        };
        dr.sf_indices = pick(w_sf, StreamTag::resample_sufficiency, dr.sf_empty);
        dr.nc_indices = pick(w_nc, StreamTag::resample_necessity, dr.nc_empty);
        return dr;
    }

    /// Objective value and (optionally) its gradient at s under fixed draws.
    ObjectiveValue evaluate(std::span<const double> s, const ObjectiveDraws& dr, bool with_gradient = true) const {
        require_size(s, dim(), "relaxed mask");
        if (with_gradient && !ctx_.model.has_gradient()) {
            ObjectiveValue out = evaluate_impl(s, dr, false);
            out.gradient = finite_difference_gradient(s, dr);
            return out;
        }
        return evaluate_impl(s, dr, with_gradient);
    }

    /// Central differences of the objective with the draws held fixed.
    Vector finite_difference_gradient(std::span<const double> s, const ObjectiveDraws& dr, double h = 0.0) const {
        if (h == 0.0) h = cfg_.fd_step;
        Vector g(dim());
        Vector probe(s.begin(), s.end());
        for (std::size_t k = 0; k < dim(); ++k) {
            probe[k] = s[k] + h;
            const double up = evaluate_impl(probe, dr, false).value;
            probe[k] = s[k] - h;
            const double down = evaluate_impl(probe, dr, false).value;
            probe[k] = s[k];
            g[k] = (up - down) / (2.0 * h);
        }
        return g;
    }

private:
    struct Change {
        double delta = 0.0;
        Vector grad;  // d delta / d s
    };

    // delta = f(relax(x, u, m)) - f(x) with u = s (on_mask) or 1 - s.
    Change change(std::size_t i, std::span<const double> s, const Mask& m, bool on_mask, bool with_grad) const {
        const Vector& x = samples_[i];
        const std::size_t d = x.size();
        Vector u(d);
        for (std::size_t k = 0; k < d; ++k) u[k] = on_mask ? s[k] : 1.0 - s[k];
        const bool literal = cfg_.relaxation == Relaxation::literal;
        const Vector z = literal ? relaxed_perturb(x, u, ctx_.baseline, m) : blended_perturb(x, u, ctx_.baseline, m);
        Change c;
        c.delta = ctx_.f(z) - fx_[i];
        if (with_grad) {
            const Vector dz = literal ? relaxed_perturb_derivative(x, ctx_.baseline, m)
                                      : blended_perturb_derivative(x, ctx_.baseline, m);
            bool moves = false;
            for (double v : dz) moves = moves || v != 0.0;
            c.grad.assign(d, 0.0);
            if (moves) {
                const Vector gf = input_gradient(ctx_.model, z, ctx_.readout);
                const double sign = on_mask ? 1.0 : -1.0;
                for (std::size_t k = 0; k < d; ++k) c.grad[k] = sign * gf[k] * dz[k];
            }
        }
        return c;
    }

    // Soft factual weight of sample i. Sufficiency: distance on 1 - s,
    // perturbation on 1 - s, kernel K_c. Necessity: distance on s,
    // perturbation on s, 1 - K_c.
    double sample_weight(std::size_t i, std::span<const double> s, std::uint64_t seed, bool sufficiency,
                         Vector* grad) const {
        const Vector& x = samples_[i];
        const std::size_t d = x.size();
        const double b = ev_.b, c = ev_.c;

        // distance kernel on u = 1 - s (sufficiency) or u = s (necessity)
        double dist2 = 0.0, dist1 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double u = sufficiency ? 1.0 - s[k] : s[k];
            const double e = (x[k] - ctx_.target[k]) * u;
            dist2 += e * e;
            dist1 += std::abs(e);
        }
        const double dist_sq = ev_.p == 1 ? dist1 * dist1 : dist2;
        const double kb = std::exp(-dist_sq / (2.0 * b * b));

        Rng rng = Rng::stream(seed, sufficiency ? StreamTag::weight_sufficiency : StreamTag::weight_necessity, {i});
        double acc = 0.0;
        Vector acc_grad;
        if (grad) acc_grad.assign(d, 0.0);
        for (std::size_t j = 0; j < cfg_.n_inner; ++j) {
            const Mask m = sample_mask(d, cfg_.phi, rng);
            const Change ch = change(i, s, m, !sufficiency, grad != nullptr);
            const double kc = prediction_kernel(ch.delta, c);
            acc += sufficiency ? kc : 1.0 - kc;
            if (grad && c > 0.0) {
                const double dkc = -ch.delta / (c * c) * kc;  // d K_c / d delta
                const double factor = sufficiency ? dkc : -dkc;
                for (std::size_t k = 0; k < d; ++k) acc_grad[k] += factor * ch.grad[k];
            }
        }
        const double inv = 1.0 / static_cast<double>(cfg_.n_inner);
        const double pred = acc * inv;
        if (grad) {
            grad->assign(d, 0.0);
            for (std::size_t k = 0; k < d; ++k) {
                const double u = sufficiency ? 1.0 - s[k] : s[k];
                const double du_ds = sufficiency ? -1.0 : 1.0;
                const double ax = std::abs(x[k] - ctx_.target[k]);
                double ddist_sq_du;
                if (ev_.p == 1) {
                    const double su = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
                    ddist_sq_du = 2.0 * dist1 * ax * su;
                } else {
                    ddist_sq_du = 2.0 * ax * ax * u;
                }
                const double dkb = -kb / (2.0 * b * b) * ddist_sq_du * du_ds;
                (*grad)[k] = dkb * pred + kb * acc_grad[k] * inv;
            }
        }
        return kb * pred;
    }

    // Mean over t draws of smooth_change (sufficiency, perturbation on s)
    // or smooth_same (necessity, perturbation on 1 - s) for factual item j.
    double interventional(std::size_t j, std::size_t i, std::span<const double> s, std::uint64_t seed,
                          bool sufficiency, Vector* grad) const {
        const std::size_t d = s.size();
        Rng rng = Rng::stream(seed, sufficiency ? StreamTag::perturb_sufficiency : StreamTag::perturb_necessity, {j});
        double acc = 0.0;
        if (grad) grad->assign(d, 0.0);
        for (std::size_t r = 0; r < cfg_.t; ++r) {
            const Mask m = sample_mask(d, cfg_.phi, rng);
            const Change ch = change(i, s, m, sufficiency, grad != nullptr);
            acc += sufficiency ? smooth_change(ch.delta) : smooth_same(ch.delta);
            if (grad) {
                const double dv = sufficiency ? smooth_change_derivative(ch.delta) : -smooth_change_derivative(ch.delta);
                for (std::size_t k = 0; k < d; ++k) (*grad)[k] += dv * ch.grad[k];
            }
        }
        const double inv = 1.0 / static_cast<double>(cfg_.t);
        if (grad)
            for (double& g : *grad) g *= inv;
        return acc * inv;
    }

    // Mean of fn(i) over [0, n) with gradients, reduced in index order.
    template <class Fn>
    double ordered_mean(std::size_t n, Fn&& fn, Vector* grad_mean) const {
        const std::size_t d = dim();
        constexpr std::size_t block = 256;
        double total = 0.0;
        if (grad_mean) grad_mean->assign(d, 0.0);
        std::vector<double> vals;
        std::vector<Vector> grads;
        for (std::size_t start = 0; start < n; start += block) {
            const std::size_t stop = std::min(n, start + block);
            vals.assign(stop - start, 0.0);
            grads.assign(grad_mean ? stop - start : 0, Vector{});
            parallel_for(stop - start, [&](std::size_t r) {
                vals[r] = fn(start + r, grad_mean ? &grads[r] : nullptr);
            });
            for (std::size_t r = 0; r < stop - start; ++r) {
                total += vals[r];
                if (grad_mean)
                    for (std::size_t k = 0; k < d; ++k) (*grad_mean)[k] += grads[r][k];
            }
        }
        const double inv = 1.0 / static_cast<double>(n);
        if (grad_mean)
            for (double& g : *grad_mean) g *= inv;
        return total * inv;
    }

    ObjectiveValue evaluate_impl(std::span<const double> s, const ObjectiveDraws& dr, bool with_gradient) const {
        const std::size_t n = samples_.size();
        const std::size_t d = dim();
        const Ablation& ab = cfg_.ablation;
        ObjectiveValue out;
        out.sf_empty = dr.sf_empty;
        out.nc_empty = dr.nc_empty;
        Vector g_ab, g_nanb, g_pn, g_ps;
        Vector* pg_ab = with_gradient ? &g_ab : nullptr;
        Vector* pg_nanb = with_gradient ? &g_nanb : nullptr;
        Vector* pg_pn = with_gradient ? &g_pn : nullptr;
        Vector* pg_ps = with_gradient ? &g_ps : nullptr;

        const std::uint64_t seed = dr.seed;
        out.p_nanb = ordered_mean(n, [&](std::size_t i, Vector* g) { return sample_weight(i, s, seed, true, g); },
                                  pg_nanb);
        out.p_ab = ordered_mean(n, [&](std::size_t i, Vector* g) { return sample_weight(i, s, seed, false, g); },
                                pg_ab);

        const bool use_sf = !ab.disable_sufficiency && !dr.sf_empty && !dr.sf_indices.empty();
        const bool use_nc = !ab.disable_necessity && !dr.nc_empty && !dr.nc_indices.empty();
        if (use_sf) {
            out.ps = ordered_mean(
                dr.sf_indices.size(),
                [&](std::size_t j, Vector* g) { return interventional(j, dr.sf_indices[j], s, seed, true, g); }, pg_ps);
        }
        if (use_nc) {
            out.pn = ordered_mean(
                dr.nc_indices.size(),
                [&](std::size_t j, Vector* g) { return interventional(j, dr.nc_indices[j], s, seed, false, g); },
                pg_pn);
        }
        out.necessity_term = use_nc ? out.pn * out.p_ab : 0.0;
        out.sufficiency_term = use_sf ? out.ps * out.p_nanb : 0.0;
        out.value = out.necessity_term + out.sufficiency_term;

        for (auto [name, v] : {std::pair{"pn", out.pn}, std::pair{"ps", out.ps}, std::pair{"p_ab", out.p_ab},
                               std::pair{"p_nanb", out.p_nanb}})
            if (!std::isfinite(v)) throw NumericError(std::string("objective term ") + name + " is not finite");

        if (with_gradient) {
            out.gradient.assign(d, 0.0);
            for (std::size_t k = 0; k < d; ++k) {
                if (use_nc) out.gradient[k] += g_pn[k] * out.p_ab + out.pn * g_ab[k];
                if (use_sf) out.gradient[k] += g_ps[k] * out.p_nanb + out.ps * g_nanb[k];
            }
            if (!all_finite(out.gradient)) throw NumericError("objective gradient is not finite");
        }
        return out;
    }

    const AttributionContext& ctx_;
    const SampleSet& samples_;
    EventParams ev_;
    OptimizeConfig cfg_;
    std::vector<double> fx_;
};

/// Draws at s with the given seed, then evaluates value and gradient.
inline ObjectiveValue smooth_objective(std::span<const double> s, const AttributionContext& ctx,
                                       const SampleSet& samples, const EventParams& ev, const OptimizeConfig& cfg,
                                       std::uint64_t seed) {
    check_relaxed_mask(s);
    SmoothObjective obj(ctx, samples, ev, cfg);
    return obj.evaluate(s, obj.draw(s, seed));
}

struct TrainTrace {
    std::vector<double> objective;  // stochastic objective at the start of each epoch
    std::vector<double> seconds;    // wall-clock per epoch
    Vector final_mask;
    // Objective at the initial and final mask under common draws with
    // resampling at full size |E|.
    double initial_reference = 0.0;
    double final_reference = 0.0;
    bool diverged = false;
    std::string failure;
};

struct OptimizeResult {
    Vector mask;
    TrainTrace trace;
    ObjectiveValue final_terms;  // reference evaluation at the final mask
};

/// Adam ascent (beta1 0.9, beta2 0.999, eps 1e-8) with clamping to [0,1]
/// after every step. Fresh draws each epoch. A non-finite objective stops
/// the run; the result then carries the trace so far and diverged = true.
inline OptimizeResult optimize_mask(const AttributionContext& ctx, const SampleSet& samples, const EventParams& ev,
                                    const OptimizeConfig& cfg) {
    SmoothObjective objective(ctx, samples, ev, cfg);
    const std::size_t d = ctx.dim();
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    OptimizeResult result;
    Vector s(d, cfg.init);
    Vector m1(d, 0.0), m2(d, 0.0);
    TrainTrace& trace = result.trace;

    OptimizeConfig ref_cfg = cfg;
    ref_cfg.resample_size = 0;
    SmoothObjective reference(ctx, samples, ev, ref_cfg);
    const std::uint64_t ref_seed = splitmix64(cfg.seed ^ static_cast<std::uint64_t>(StreamTag::evaluation));
    auto reference_at = [&](const Vector& mask) {
        return reference.evaluate(mask, reference.draw(mask, ref_seed), false);
    };

    try {
        trace.initial_reference = reference_at(s).value;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            const auto start = std::chrono::steady_clock::now();
            const std::uint64_t seed = splitmix64(cfg.seed ^ splitmix64(epoch + 1));
            const ObjectiveValue v = objective.evaluate(s, objective.draw(s, seed));
            trace.objective.push_back(v.value);
            const double t = static_cast<double>(epoch + 1);
            const double c1 = 1.0 - std::pow(beta1, t);
            const double c2 = 1.0 - std::pow(beta2, t);
            for (std::size_t k = 0; k < d; ++k) {
                const double g = v.gradient[k];
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * g;
                m2[k] = beta2 * m2[k] + (1.0 - beta2) * g * g;
                s[k] += cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
                s[k] = std::clamp(s[k], 0.0, 1.0);
            }
            trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
        result.final_terms = reference_at(s);
        trace.final_reference = result.final_terms.value;
    } catch (const NumericError& e) {
        trace.diverged = true;
        trace.failure = e.what();
    }
    trace.final_mask = s;
    result.mask = s;
    return result;
}

/// "epoch,objective" rows for convergence plots.
inline std::string trace_csv(const TrainTrace& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,objective\n";
    for (std::size_t e = 0; e < trace.objective.size(); ++e) out << e << ',' << trace.objective[e] << '\n';
    return out.str();
}

}  // namespace fans
