#pragma once
// Command-line front end. `run` is the whole program minus main(), so the
// test suite can drive it in-process.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fans/fans.hpp"

#ifndef FANS_VERSION
#define FANS_VERSION "0.0.0"
#endif

namespace fans::cli {

using nlohmann::ordered_json;

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3, exit_empty_support = 4 };

struct RunConfig {
    std::string command;
    std::string out = ".";
    std::uint64_t seed = 0;

    // inputs
    std::string model;
    std::string data;
    std::string labels;  // IDX label file when --data is an IDX image file
    std::string target = "0";
    std::optional<std::size_t> readout;
    std::size_t samples = 0;  // 0 = every row
    std::string baseline = "default";

    // attribution
    std::string subset;
    std::optional<double> b;
    std::optional<double> c;
    double phi = 0.5;
    std::optional<std::size_t> t;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::size_t n_inner = 8;
    std::optional<std::size_t> resample_size;
    std::vector<std::string> ablate;
    std::string relaxation = "blended";
    double sigma = 0.001;
    std::size_t n_noise = 10;
    std::string heatmap;  // HxW

    // fit
    std::string hidden;
    std::string activation = "tanh";
    std::size_t batch = 64;

    // evaluate
    std::string attribution;
    std::string metrics = "infidelity,irof,fid_plus,fid_minus,max_sensitivity,sparseness";
    std::string truth;
    std::size_t top_n = 0;  // 0 = |truth|
    std::size_t draws = 100;
    double radius = 0.1;
    double keep = 0.25;
    bool descending_sort = false;
    std::size_t tile = 1;
    std::string shape;
    std::string explainer = "saliency";

    // sweep
    std::string b_grid;
    std::string c_grid;
    bool include_heuristic = false;

    // heatmap
    std::string mask;
};

// ---------------------------------------------------------------------------
// Argument parsing helpers

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

inline double parse_number(const std::string& text, const std::string& flag) {
    const std::string s = trim(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(flag + ": cannot parse '" + text + "' as a number");
    return v;
}

inline std::size_t parse_count(const std::string& text, const std::string& flag) {
    const std::string s = trim(text);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(flag + ": cannot parse '" + text + "' as a nonnegative integer");
    return v;
}

inline Vector parse_vector(const std::string& text, const std::string& flag) {
    Vector v;
    for (const auto& cell : split(text, ',')) v.push_back(parse_number(cell, flag));
    return v;
}

/// 1-based feature numbers "1,3" -> subset {0, 2}.
inline DimSubset parse_features(const std::string& text, std::size_t d, const std::string& flag) {
    std::vector<std::size_t> idx;
    for (const auto& cell : split(text, ',')) {
        const std::size_t f = parse_count(cell, flag);
        if (f < 1 || f > d)
            throw ConfigError(flag + ": feature " + std::to_string(f) + " outside 1.." + std::to_string(d));
        idx.push_back(f - 1);
    }
    try {
        return DimSubset(std::move(idx), d);
    } catch (const Error& e) {
        throw ConfigError(flag + ": " + e.what());
    }
}

/// "0.5,1,2" or "lo:hi:n" (n evenly spaced points, inclusive).
inline std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
    if (trim(text).empty()) throw ConfigError(flag + ": empty grid");
    if (text.find(':') != std::string::npos) {
        const auto parts = split(text, ':');
        if (parts.size() != 3) throw ConfigError(flag + ": range grids take the form lo:hi:n");
        const double lo = parse_number(parts[0], flag), hi = parse_number(parts[1], flag);
        const std::size_t n = parse_count(parts[2], flag);
        if (n == 0) throw ConfigError(flag + ": empty grid");
        if (n == 1) return {lo};
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        return g;
    }
    return parse_vector(text, flag);
}

inline std::pair<std::size_t, std::size_t> parse_shape(const std::string& text, const std::string& flag) {
    const auto pos = text.find_first_of("xX");
    if (pos == std::string::npos) throw ConfigError(flag + ": shape must look like HxW");
    return {parse_count(text.substr(0, pos), flag), parse_count(text.substr(pos + 1), flag)};
}

inline std::filesystem::path output_file(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out);
    return std::filesystem::path(cfg.out) / name;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
    out << text;
}

inline void write_json(const std::filesystem::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Data, model and target resolution

/// A CSV path, an IDX image file (with --labels), or a generator:
/// gen:example1:N[:seed] or gen:planted:N:D:K[:margin[:seed]].
inline Dataset load_data(const std::string& spec, const std::string& labels) {
    if (spec.empty()) throw ConfigError("--data is required");
    try {
        if (spec.rfind("gen:", 0) == 0) {
            const auto parts = detail::split(spec, ':');
            const std::string& kind = parts.size() > 1 ? parts[1] : std::string();
            auto count = [&](std::size_t i, std::size_t def) {
                return i < parts.size() ? detail::parse_count(parts[i], "--data") : def;
            };
            if (kind == "example1") {
                if (parts.size() < 3 || parts.size() > 4)
                    throw ConfigError("generator spec is gen:example1:N[:seed]");
                return gen_example1(count(2, 0), count(3, 0));
            }
            if (kind == "planted") {
                if (parts.size() < 5 || parts.size() > 7)
                    throw ConfigError("generator spec is gen:planted:N:D:K[:margin[:seed]]");
                const double margin = parts.size() > 5 ? detail::parse_number(parts[5], "--data") : 0.1;
                return gen_planted_sparse(count(2, 0), count(3, 0), count(4, 0), margin, count(6, 0));
            }
            throw ConfigError("unknown generator '" + kind + "' (expected example1 or planted)");
        }
        if (!std::filesystem::exists(spec)) throw ConfigError("dataset '" + spec + "' does not exist");
        if (!labels.empty()) return load_idx(spec, labels);
        return load_csv(spec);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("--data: ") + e.what());
    }
}

inline Mlp load_model_flag(const std::string& path) {
    if (path.empty()) throw ConfigError("--model is required");
    if (!std::filesystem::exists(path)) throw ConfigError("--model: file '" + path + "' does not exist");
    return load_model(path);
}

/// Row index (0-based) into the data, or an inline comma-separated vector.
inline Vector resolve_target(const std::string& spec, const Dataset& ds) {
    if (spec.find(',') != std::string::npos) {
        Vector x = detail::parse_vector(spec, "--target");
        if (x.size() != ds.dim())
            throw ConfigError("--target: vector has " + std::to_string(x.size()) + " entries, data has " +
                              std::to_string(ds.dim()) + " features");
        return x;
    }
    const std::size_t row = detail::parse_count(spec, "--target");
    if (row >= ds.size())
        throw ConfigError("--target: row " + std::to_string(row) + " out of range (" + std::to_string(ds.size()) +
                          " rows)");
    return ds.inputs[row];
}

inline Baseline resolve_baseline(const std::string& spec, DataKind kind, std::size_t d, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, StreamTag::baseline);
    if (spec == "default") return default_baseline(kind, d, rng);
    if (spec == "zeros") return zero_baseline(d);
    if (spec == "uniform") return default_baseline(DataKind::image, d, rng);
    Vector v = detail::parse_vector(spec, "--baseline");
    if (v.size() != d) throw ConfigError("--baseline: expected " + std::to_string(d) + " values");
    return user_baseline(std::move(v));
}

inline Ablation parse_ablation(const std::vector<std::string>& items) {
    Ablation a;
    for (const std::string& raw : items)
        for (const std::string& item : detail::split(raw, ',')) {
            if (item == "sf")
                a.disable_sufficiency = true;
            else if (item == "nc")
                a.disable_necessity = true;
            else if (item == "sir")
                a.disable_sir = true;
            else
                throw ConfigError("--ablate: unknown module '" + item + "' (expected sf, nc or sir)");
        }
    a.validate();
    return a;
}

/// Reads "feature,score" rows (mask.csv); a header row is skipped.
inline Vector read_mask_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open mask file '" + path + "'");
    std::string line;
    Vector scores;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        const std::string& last = cells.back();
        if (row == 1 && !last.empty() && !std::isdigit(static_cast<unsigned char>(last[0])) && last[0] != '-' &&
            last[0] != '.')
            continue;
        try {
            scores.push_back(detail::parse_number(last, "mask"));
        } catch (const ConfigError&) {
            throw ParseError("mask '" + path + "' row " + std::to_string(row) + ": cannot parse '" + last + "'");
        }
    }
    if (scores.empty()) throw ParseError("mask '" + path + "' has no rows");
    return scores;
}

inline std::string mask_csv(std::span<const double> s) {
    std::string out = "feature,score\n";
    for (std::size_t i = 0; i < s.size(); ++i) out += std::to_string(i + 1) + "," + format_double(s[i]) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Shared pieces of the attribution commands

struct Problem {
    Mlp model;
    Dataset data;
    SampleSet samples;
    Vector target;
    Baseline baseline;
    Readout readout;
};

inline Problem load_problem(const RunConfig& cfg) {
    Mlp model = load_model_flag(cfg.model);
    Dataset ds = load_data(cfg.data, cfg.labels);
    if (ds.dim() != model.input_dim())
        throw ValidationError("--data has " + std::to_string(ds.dim()) + " features but the model expects " +
                              std::to_string(model.input_dim()));
    Vector target = resolve_target(cfg.target, ds);
    const std::size_t n = cfg.samples == 0 ? ds.size() : std::min(cfg.samples, ds.size());
    SampleSet samples(std::vector<Vector>(ds.inputs.begin(), ds.inputs.begin() + static_cast<std::ptrdiff_t>(n)));
    Baseline base = resolve_baseline(cfg.baseline, ds.kind, ds.dim(), cfg.seed);
    Readout r = cfg.readout ? Readout{*cfg.readout} : readout_for(model, target);
    check_readout(model, r);
    return Problem{std::move(model), std::move(ds), std::move(samples), std::move(target), std::move(base), r};
}

inline OptimizeConfig resolve_optimize(const RunConfig& cfg, DataKind kind, const Ablation& ablation) {
    OptimizeConfig oc = OptimizeConfig::for_kind(kind);
    if (cfg.epochs) oc.epochs = *cfg.epochs;
    if (cfg.lr) oc.learning_rate = *cfg.lr;
    if (cfg.t) oc.t = *cfg.t;
    if (cfg.resample_size) oc.resample_size = *cfg.resample_size;
    oc.phi = cfg.phi;
    oc.n_inner = cfg.n_inner;
    oc.ablation = ablation;
    oc.relaxation = parse_relaxation(cfg.relaxation);
    oc.seed = cfg.seed;
    oc.validate();
    return oc;
}

inline AttributionConfig resolve_attribution(const RunConfig& cfg, const Heuristics& h, const Ablation& ablation) {
    AttributionConfig ac;
    ac.ev = EventParams{h.b, h.c, 2};
    ac.phi = cfg.phi;
    ac.n_inner = cfg.n_inner;
    ac.t_sf = ac.t_nc = cfg.t.value_or(50);
    ac.resample_size = cfg.resample_size.value_or(0);
    ac.ablation = ablation;
    ac.seed = cfg.seed;
    if (!(ac.phi >= 0.0 && ac.phi <= 1.0)) throw ConfigError("--phi must lie in [0, 1]");
    if (ac.t_sf == 0) throw ConfigError("--t must be at least 1");
    if (ac.n_inner == 0) throw ConfigError("--n-inner must be at least 1");
    return ac;
}

inline Heuristics resolve_heuristics(const RunConfig& cfg, const Problem& p, const AttributionContext& ctx) {
    HeuristicsConfig hc;
    hc.sigma = cfg.sigma;
    hc.n_noise = cfg.n_noise;
    hc.seed = cfg.seed;
    if (cfg.b && !(*cfg.b > 0.0)) throw ConfigError("--b must be positive");
    if (cfg.c && !(*cfg.c >= 0.0)) throw ConfigError("--c must be nonnegative");
    hc.b_override = cfg.b;
    hc.c_override = cfg.c;
    return compute_heuristics(p.samples, ctx, hc);
}

template <class T>
ordered_json optional_json(const std::optional<T>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

inline ordered_json echo_config(const RunConfig& cfg) {
    ordered_json j;
    j["command"] = cfg.command;
    j["seed"] = cfg.seed;
    if (cfg.command == "heatmap") {
        j["mask"] = cfg.mask;
        j["shape"] = cfg.shape;
        return j;
    }
    j["data"] = cfg.data;
    if (!cfg.labels.empty()) j["labels"] = cfg.labels;
    if (cfg.command == "fit") {
        j["hidden"] = cfg.hidden;
        j["activation"] = cfg.activation;
        j["epochs"] = optional_json(cfg.epochs);
        j["lr"] = optional_json(cfg.lr);
        j["batch"] = cfg.batch;
        return j;
    }
    j["model"] = cfg.model;
    j["target"] = cfg.target;
    j["readout"] = optional_json(cfg.readout);
    j["samples"] = cfg.samples;
    j["baseline"] = cfg.baseline;
    if (cfg.command == "evaluate") {
        j["attribution"] = cfg.attribution;
        j["metrics"] = cfg.metrics;
        j["truth"] = cfg.truth;
        j["top_n"] = cfg.top_n;
        j["draws"] = cfg.draws;
        j["radius"] = cfg.radius;
        j["keep"] = cfg.keep;
        j["descending_sort"] = cfg.descending_sort;
        j["tile"] = cfg.tile;
        j["shape"] = cfg.shape;
        j["explainer"] = cfg.explainer;
    }
    j["subset"] = cfg.subset;
    j["b"] = optional_json(cfg.b);
    j["c"] = optional_json(cfg.c);
    j["phi"] = cfg.phi;
    j["t"] = optional_json(cfg.t);
    j["epochs"] = optional_json(cfg.epochs);
    j["lr"] = optional_json(cfg.lr);
    j["n_inner"] = cfg.n_inner;
    j["resample_size"] = optional_json(cfg.resample_size);
    j["ablate"] = cfg.ablate;
    j["relaxation"] = cfg.relaxation;
    j["sigma"] = cfg.sigma;
    j["n_noise"] = cfg.n_noise;
    if (cfg.command == "sweep") {
        j["b_grid"] = cfg.b_grid;
        j["c_grid"] = cfg.c_grid;
        j["include_heuristic"] = cfg.include_heuristic;
    }
    if (cfg.command == "attribute") j["heatmap"] = cfg.heatmap;
    return j;
}

inline ordered_json report_header(const RunConfig& cfg) {
    ordered_json j;
    j["tool"] = "fans";
    j["version"] = FANS_VERSION;
    j["config"] = echo_config(cfg);
    return j;
}

inline ordered_json heuristics_json(const Heuristics& h, std::size_t n, std::size_t d) {
    ordered_json j;
    j["b"] = h.b;
    j["c"] = h.c;
    j["b_source"] = h.b_overridden ? "override" : "heuristic";
    j["c_source"] = h.c_overridden ? "override" : "heuristic";
    j["sample_count"] = n;
    j["dim"] = d;
    j["sigma"] = h.sigma;
    j["n_noise"] = h.n_noise;
    return j;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_gen(const RunConfig& cfg, std::ostream& out) {
    const Dataset ds = load_data(cfg.data, cfg.labels);
    const auto path = detail::output_file(cfg, "data.csv");
    save_csv(ds, path.string());
    out << "wrote " << path.string() << " (" << ds.size() << " rows, " << ds.dim() << " features)\n";
    if (ds.ground_truth) {
        out << "ground truth features:";
        for (std::size_t i : ds.ground_truth->indices()) out << ' ' << i + 1;
        out << '\n';
    }
    return exit_ok;
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& out) {
    const Dataset ds = load_data(cfg.data, cfg.labels);
    const std::size_t k = ds.num_classes <= 2 ? 1 : ds.num_classes;
    Architecture arch;
    arch.sizes.push_back(ds.dim());
    if (!cfg.hidden.empty()) {
        const Activation act = parse_activation(cfg.activation);
        for (const auto& cell : detail::split(cfg.hidden, ',')) {
            const std::size_t width = detail::parse_count(cell, "--hidden");
            if (width == 0) throw ConfigError("--hidden: layer width must be positive");
            arch.sizes.push_back(width);
            arch.activations.push_back(act);
        }
    }
    arch.sizes.push_back(k);
    arch.head = k == 1 ? Head::sigmoid : Head::softmax;

    TrainConfig tc;
    if (cfg.epochs) tc.epochs = *cfg.epochs;
    if (cfg.lr) tc.learning_rate = *cfg.lr;
    tc.batch_size = cfg.batch;
    const Mlp model = fit_mlp(ds, arch, tc, cfg.seed);
    const auto path = detail::output_file(cfg, "model.json");
    save_model(model, path.string());
    out << "wrote " << path.string() << " (training accuracy " << format_double(accuracy(model, ds)) << ")\n";
    return exit_ok;
}

inline int cmd_attribute(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const Problem p = load_problem(cfg);
    const Ablation ablation = parse_ablation(cfg.ablate);
    const AttributionContext ctx(p.model, p.target, p.baseline, p.readout);
    const Heuristics h = resolve_heuristics(cfg, p, ctx);
    std::optional<std::pair<std::size_t, std::size_t>> shape;
    if (!cfg.heatmap.empty()) {
        shape = detail::parse_shape(cfg.heatmap, "--heatmap");
        if (shape->first * shape->second != ctx.dim())
            throw ConfigError("--heatmap: shape does not match " + std::to_string(ctx.dim()) + " features");
    }

    ordered_json report = report_header(cfg);
    report["heuristics"] = heuristics_json(h, p.samples.size(), ctx.dim());
    ordered_json pred;
    pred["readout"] = p.readout.index;
    pred["score"] = ctx.f(p.target);
    pred["class"] = predicted_class(p.model, p.target);
    report["prediction"] = pred;

    Vector mask;
    int code = exit_ok;
    ordered_json result;
    if (!cfg.subset.empty()) {
        const DimSubset s = detail::parse_features(cfg.subset, ctx.dim(), "--subset");
        const AttributionConfig ac = resolve_attribution(cfg, h, ablation);
        const AttributionResult r = attribution_for_subset(ctx, s, p.samples, ac);
        report["mode"] = "subset";
        result["pns"] = r.pns;
        result["pn"] = r.pn;
        result["ps"] = r.ps;
        result["p_ab"] = r.p_ab;
        result["p_nanb"] = r.p_nanb;
        result["necessity_term"] = ablation.disable_necessity ? 0.0 : r.necessity_term();
        result["sufficiency_term"] = ablation.disable_sufficiency ? 0.0 : r.sufficiency_term();
        result["raw_sum_ab"] = r.raw_sum_ab;
        result["raw_sum_nanb"] = r.raw_sum_nanb;
        result["sf_factual_size"] = r.sf_indices.size();
        result["nc_factual_size"] = r.nc_indices.size();
        result["sf_empty"] = r.sf_empty;
        result["nc_empty"] = r.nc_empty;
        result["perturbations"] = r.perturbations;
        mask = s.indicator();
    } else {
        const OptimizeConfig oc = resolve_optimize(cfg, p.data.kind, ablation);
        const OptimizeResult r = optimize_mask(ctx, p.samples, EventParams{h.b, h.c, 2}, oc);
        report["mode"] = "optimize";
        ordered_json optim;
        optim["epochs"] = oc.epochs;
        optim["lr"] = oc.learning_rate;
        optim["t"] = oc.t;
        optim["resample_size"] = oc.resample_size;
        report["optimizer"] = optim;
        const ObjectiveValue& v = r.final_terms;
        result["pns"] = v.value;
        result["pn"] = v.pn;
        result["ps"] = v.ps;
        result["p_ab"] = v.p_ab;
        result["p_nanb"] = v.p_nanb;
        result["necessity_term"] = v.necessity_term;
        result["sufficiency_term"] = v.sufficiency_term;
        result["sf_empty"] = v.sf_empty;
        result["nc_empty"] = v.nc_empty;
        ordered_json trace;
        trace["objective"] = r.trace.objective;
        trace["initial_reference"] = r.trace.initial_reference;
        trace["final_reference"] = r.trace.final_reference;
        trace["diverged"] = r.trace.diverged;
        if (r.trace.diverged) trace["failure"] = r.trace.failure;
        report["trace"] = trace;
        detail::write_text(detail::output_file(cfg, "trace.csv"), trace_csv(r.trace));
        mask = r.mask;
        if (r.trace.diverged) {
            err << "error: optimization diverged: " << r.trace.failure << "\n";
            code = exit_numeric;
        }
    }
    report["result"] = result;
    report["mask"] = mask;

    detail::write_json(detail::output_file(cfg, "report.json"), report);
    detail::write_text(detail::output_file(cfg, "mask.csv"), mask_csv(mask));
    if (shape) write_pgm(mask_to_image(mask, shape->first, shape->second), detail::output_file(cfg, "heatmap.pgm"));
    out << "pns " << format_double(result["pns"].get<double>()) << "  (b " << format_double(h.b) << ", c "
        << format_double(h.c) << ")\n";
    return code;
}

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
    const Problem p = load_problem(cfg);
    const Ablation ablation = parse_ablation(cfg.ablate);
    const AttributionContext ctx(p.model, p.target, p.baseline, p.readout);
    if (cfg.subset.empty()) throw ConfigError("--subset is required for sweep");
    const DimSubset s = detail::parse_features(cfg.subset, ctx.dim(), "--subset");
    if (cfg.b_grid.empty()) throw ConfigError("--b-grid is required for sweep");
    if (cfg.c_grid.empty()) throw ConfigError("--c-grid is required for sweep");
    std::vector<double> bs = detail::parse_grid(cfg.b_grid, "--b-grid");
    std::vector<double> cs = detail::parse_grid(cfg.c_grid, "--c-grid");
    const Heuristics h = resolve_heuristics(cfg, p, ctx);
    if (cfg.include_heuristic) {
        if (std::find(bs.begin(), bs.end(), h.b) == bs.end()) bs.push_back(h.b);
        if (std::find(cs.begin(), cs.end(), h.c) == cs.end()) cs.push_back(h.c);
    }
    const AttributionConfig ac = resolve_attribution(cfg, h, ablation);
    const auto rows = sweep_event_params(ctx, s, p.samples, ac, bs, cs, h);

    std::string csv = "b,c,pns,pn,ps,heuristic,empty_support\n";
    ordered_json jrows = ordered_json::array();
    for (const SweepRow& r : rows) {
        csv += format_double(r.b) + "," + format_double(r.c) + "," + format_double(r.pns) + "," + format_double(r.pn) +
               "," + format_double(r.ps) + "," + (r.heuristic ? "1" : "0") + "," + (r.empty_support ? "1" : "0") + "\n";
        ordered_json jr;
        jr["b"] = r.b;
        jr["c"] = r.c;
        jr["pns"] = r.pns;
        jr["heuristic"] = r.heuristic;
        jr["empty_support"] = r.empty_support;
        jrows.push_back(jr);
    }
    ordered_json report = report_header(cfg);
    report["heuristics"] = heuristics_json(h, p.samples.size(), ctx.dim());
    report["rows"] = jrows;
    detail::write_text(detail::output_file(cfg, "sweep.csv"), csv);
    detail::write_json(detail::output_file(cfg, "report.json"), report);
    out << "wrote " << rows.size() << " sweep rows\n";
    return exit_ok;
}

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const Problem p = load_problem(cfg);
    const std::size_t d = p.target.size();
    if (cfg.attribution.empty()) throw ConfigError("--attribution is required (a mask CSV or 'saliency')");
    const Vector a = cfg.attribution == "saliency" ? saliency(p.model, p.target, p.readout)
                                                    : read_mask_csv(cfg.attribution);
    if (a.size() != d)
        throw ValidationError("--attribution has " + std::to_string(a.size()) + " scores, expected " +
                              std::to_string(d));

    std::optional<DimSubset> truth;
    if (cfg.truth == "auto") {
        if (!p.data.ground_truth) throw ConfigError("--truth auto needs a generator dataset with ground truth");
        truth = p.data.ground_truth;
    } else if (!cfg.truth.empty()) {
        truth = detail::parse_features(cfg.truth, d, "--truth");
    }

    Segmentation seg = Segmentation::per_feature(d);
    if (!cfg.shape.empty()) {
        const auto [h, w] = detail::parse_shape(cfg.shape, "--shape");
        if (h * w != d) throw ConfigError("--shape does not match " + std::to_string(d) + " features");
        seg = Segmentation::tiles(h, w, cfg.tile);
    }

    Explainer explainer;
    if (cfg.explainer == "saliency") {
        explainer = [&](std::span<const double> z) { return saliency(p.model, z, p.readout); };
    } else if (cfg.explainer == "fans") {
        const AttributionContext ctx(p.model, p.target, p.baseline, p.readout);
        const Heuristics h = resolve_heuristics(cfg, p, ctx);
        const OptimizeConfig oc = resolve_optimize(cfg, p.data.kind, parse_ablation(cfg.ablate));
        explainer = [&p, h, oc](std::span<const double> z) {
            const AttributionContext cz(p.model, Vector(z.begin(), z.end()), p.baseline, p.readout);
            return optimize_mask(cz, p.samples, EventParams{h.b, h.c, 2}, oc).mask;
        };
    } else {
        throw ConfigError("--explainer must be 'saliency' or 'fans'");
    }

    MetricReport metrics;
    bool numeric_failure = false;
    const std::vector<Vector> inputs{p.target};
    const std::vector<Vector> attribs{a};
    for (std::string name : detail::split(cfg.metrics, ',')) {
        name = detail::trim(name);
        for (char& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (name.empty()) continue;
        std::size_t n_top = cfg.top_n;
        if (name.rfind("recall@", 0) == 0) {
            n_top = detail::parse_count(name.substr(7), "--metrics");
            name = "recall_at_n";
        }
        if (name == "inf") name = "infidelity";
        if (name == "fid+") name = "fid_plus";
        if (name == "fid-") name = "fid_minus";
        if (name == "sen") name = "max_sensitivity";
        if (name == "spa") name = "sparseness";
        if (name == "recall") name = "recall_at_n";
        ordered_json mc = ordered_json::object();
        try {
            if (name == "infidelity") {
                mc["draws"] = cfg.draws;
                mc["seed"] = cfg.seed;
                metrics.add(name, infidelity(a, p.target, p.model, p.readout, cfg.draws, cfg.seed), mc);
            } else if (name == "irof") {
                mc["segments"] = seg.size();
                mc["baseline"] = cfg.baseline;
                metrics.add(name, irof(attribs, inputs, p.model, seg, p.baseline), mc);
            } else if (name == "fid_plus" || name == "fid_minus") {
                mc["keep"] = cfg.keep;
                const double v = name == "fid_plus" ? fidelity_plus(attribs, inputs, p.model, cfg.keep)
                                                    : fidelity_minus(attribs, inputs, p.model, cfg.keep);
                metrics.add(name, v, mc);
            } else if (name == "max_sensitivity") {
                mc["radius"] = cfg.radius;
                mc["draws"] = cfg.draws;
                mc["seed"] = cfg.seed;
                mc["explainer"] = cfg.explainer;
                metrics.add(name, max_sensitivity(explainer, p.target, cfg.radius, cfg.draws, cfg.seed), mc);
            } else if (name == "sparseness") {
                mc["sort"] = cfg.descending_sort ? "descending" : "ascending";
                metrics.add(name,
                            sparseness(a, cfg.descending_sort ? SparsenessSort::descending
                                                                 : SparsenessSort::ascending),
                            mc);
            } else if (name == "recall_at_n") {
                if (!truth) throw ConfigError("recall needs --truth");
                if (n_top == 0) n_top = truth->size();
                mc["n"] = n_top;
                std::vector<std::size_t> features;
                for (std::size_t i : truth->indices()) features.push_back(i + 1);
                mc["truth"] = features;
                metrics.add(name, recall_at_n(a, *truth, n_top), mc);
            } else {
                throw ConfigError("--metrics: unknown metric '" + name + "'");
            }
        } catch (const NumericError& e) {
            metrics.add_error(name, e.what(), mc);
            err << "error: metric " << name << ": " << e.what() << "\n";
            numeric_failure = true;
        }
    }
    ordered_json report = report_header(cfg);
    report["metrics"] = metrics.to_json();
    detail::write_json(detail::output_file(cfg, "metrics.json"), report);
    for (const auto& [name, entry] : metrics.to_json().items())
        if (!entry["value"].is_null()) out << name << ' ' << format_double(entry["value"].get<double>()) << '\n';
    return numeric_failure ? exit_numeric : exit_ok;
}

inline int cmd_heatmap(const RunConfig& cfg, std::ostream& out) {
    if (cfg.mask.empty()) throw ConfigError("--mask is required");
    if (cfg.shape.empty()) throw ConfigError("--shape is required");
    const Vector s = read_mask_csv(cfg.mask);
    const auto [h, w] = detail::parse_shape(cfg.shape, "--shape");
    const GrayImage img = mask_to_image(s, h, w);
    const auto path = detail::output_file(cfg, "heatmap.pgm");
    write_pgm(img, path.string());
    out << "wrote " << path.string() << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// Entry point

inline void add_common(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
}

inline void add_inputs(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--model", cfg.model, "Model JSON file");
    sub->add_option("--data", cfg.data,
                    "Dataset: CSV path, IDX image file (with --labels), gen:example1:N[:seed] or "
                    "gen:planted:N:D:K[:margin[:seed]]");
    sub->add_option("--labels", cfg.labels, "IDX label file");
    sub->add_option("--target", cfg.target, "Row index (0-based) or comma-separated input vector")
        ->capture_default_str();
    sub->add_option("--class", cfg.readout, "Output index to explain (default: predicted class)");
    sub->add_option("--samples", cfg.samples, "Use the first N rows as the sample set (0 = all)")
        ->capture_default_str();
    sub->add_option("--baseline", cfg.baseline, "default, zeros, uniform or comma-separated values")
        ->capture_default_str();
}

inline void add_estimator(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--subset", cfg.subset, "Comma-separated 1-based feature numbers");
    sub->add_option("--b", cfg.b, "Neighbourhood boundary (overrides the heuristic)");
    sub->add_option("--c", cfg.c, "Prediction-change threshold (overrides the heuristic)");
    sub->add_option("--phi", cfg.phi, "Bernoulli mask probability")->capture_default_str();
    sub->add_option("--t", cfg.t, "Perturbations per factual sample");
    sub->add_option("--epochs", cfg.epochs, "Optimizer epochs");
    sub->add_option("--lr", cfg.lr, "Optimizer learning rate");
    sub->add_option("--n-inner", cfg.n_inner, "Mask draws per importance weight")->capture_default_str();
    sub->add_option("--resample-size", cfg.resample_size, "SIR resample size (0 = |E|)");
    sub->add_option("--ablate", cfg.ablate, "Disable modules: sf, nc, sir")->delimiter(',');
    sub->add_option("--relaxation", cfg.relaxation, "blended or literal")->capture_default_str();
    sub->add_option("--sigma", cfg.sigma, "Noise scale of the threshold heuristic")->capture_default_str();
    sub->add_option("--n-noise", cfg.n_noise, "Noise draws per sample for the threshold heuristic")
        ->capture_default_str();
}

/// Parses argv and runs the selected command. Never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"Feature attribution with necessity and sufficiency", "fans"};
    app.set_version_flag("--version", FANS_VERSION);
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Write a generated dataset as CSV");
    gen->add_option("--data", cfg.data, "Generator spec")->required();
    add_common(gen, cfg);

    auto* fit = app.add_subcommand("fit", "Train a model and write model.json");
    fit->add_option("--data", cfg.data, "Dataset");
    fit->add_option("--labels", cfg.labels, "IDX label file");
    fit->add_option("--hidden", cfg.hidden, "Comma-separated hidden layer widths (empty = logistic)");
    fit->add_option("--activation", cfg.activation, "Hidden activation")->capture_default_str();
    fit->add_option("--epochs", cfg.epochs, "Training epochs");
    fit->add_option("--lr", cfg.lr, "Learning rate");
    fit->add_option("--batch", cfg.batch, "Minibatch size (0 = full batch)")->capture_default_str();
    add_common(fit, cfg);

    auto* attribute = app.add_subcommand("attribute", "Explain one input; writes report.json and mask.csv");
    add_inputs(attribute, cfg);
    add_estimator(attribute, cfg);
    attribute->add_option("--heatmap", cfg.heatmap, "Also write heatmap.pgm with shape HxW");
    add_common(attribute, cfg);

    auto* evaluate = app.add_subcommand("evaluate", "Score an attribution; writes metrics.json");
    add_inputs(evaluate, cfg);
    add_estimator(evaluate, cfg);
    evaluate->add_option("--attribution", cfg.attribution, "Mask CSV or 'saliency'");
    evaluate->add_option("--metrics", cfg.metrics,
                         "infidelity, irof, fid_plus, fid_minus, max_sensitivity, sparseness, recall@N")
        ->capture_default_str();
    evaluate->add_option("--truth", cfg.truth, "Ground-truth features (1-based) or 'auto'");
    evaluate->add_option("--top-n", cfg.top_n, "N for recall (default |truth|)");
    evaluate->add_option("--draws", cfg.draws, "Monte-Carlo draws")->capture_default_str();
    evaluate->add_option("--radius", cfg.radius, "Max-sensitivity radius")->capture_default_str();
    evaluate->add_option("--keep", cfg.keep, "Fidelity keep fraction")->capture_default_str();
    evaluate->add_flag("--descending-sort", cfg.descending_sort, "Sparseness with descending sort");
    evaluate->add_option("--shape", cfg.shape, "Image shape HxW for tiled IROF segments");
    evaluate->add_option("--tile", cfg.tile, "IROF tile side")->capture_default_str();
    evaluate->add_option("--explainer", cfg.explainer, "Explainer for max-sensitivity: saliency or fans")
        ->capture_default_str();
    add_common(evaluate, cfg);

    auto* sweep = app.add_subcommand("sweep", "PNS of one subset over a (b, c) grid; writes sweep.csv");
    add_inputs(sweep, cfg);
    add_estimator(sweep, cfg);
    sweep->add_option("--b-grid", cfg.b_grid, "b values: list or lo:hi:n");
    sweep->add_option("--c-grid", cfg.c_grid, "c values: list or lo:hi:n");
    sweep->add_flag("--include-heuristic", cfg.include_heuristic, "Add the heuristic (b, c) to the grids");
    add_common(sweep, cfg);

    auto* heatmap = app.add_subcommand("heatmap", "Render a mask CSV as heatmap.pgm");
    heatmap->add_option("--mask", cfg.mask, "Mask CSV");
    heatmap->add_option("--shape", cfg.shape, "HxW");
    add_common(heatmap, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_config;
    }

    cfg.command = app.get_subcommands().front()->get_name();
    try {
        if (cfg.command == "gen") return cmd_gen(cfg, out);
        if (cfg.command == "fit") return cmd_fit(cfg, out);
        if (cfg.command == "attribute") return cmd_attribute(cfg, out, err);
        if (cfg.command == "evaluate") return cmd_evaluate(cfg, out, err);
        if (cfg.command == "sweep") return cmd_sweep(cfg, out);
        if (cfg.command == "heatmap") return cmd_heatmap(cfg, out);
    } catch (const EmptySupportError& e) {
        err << "error: " << e.what() << "\nhint: pass a larger --b or use more rows in --data\n";
        return exit_empty_support;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_config;
}

}  // namespace fans::cli
