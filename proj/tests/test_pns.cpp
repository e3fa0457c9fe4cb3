#include <catch_amalgamated.hpp>

#include <cstdlib>

#include "oracles.hpp"

using namespace fans;
using Catch::Matchers::WithinAbs;

namespace {

struct Example1 {
    Mlp model = oracle::example1_model();
    Dataset data;
    SampleSet E;
    AttributionContext ctx{model, {1.5, -0.5, 0.3}, zero_baseline(3)};

    explicit Example1(std::uint64_t seed, std::size_t n = 200) : data(gen_example1(n, seed)), E(data.inputs) {}
};

AttributionConfig config(double b, double c, std::uint64_t seed) {
    AttributionConfig cfg;
    cfg.ev = EventParams{b, c, 2};
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("boundary heuristic is evaluated as written", "[pns][heuristics]") {
    CHECK(estimate_boundary_b(1, 3) == 1.06);
    CHECK(estimate_boundary_b(1, 784) == 1.06);
    CHECK(estimate_boundary_b(128, 3) == 1.06 * std::pow(128.0, 1.0 / 7.0));
    CHECK(estimate_boundary_b(1000, 10) > estimate_boundary_b(10, 10));
    CHECK_THROWS_AS(estimate_boundary_b(0, 3), ConfigError);
}

TEST_CASE("threshold heuristic", "[pns][heuristics]") {
    const SampleSet E(gen_example1(50, 1).inputs);
    const Mlp constant = Mlp::logistic({0.0, 0.0, 0.0}, 0.3);
    CHECK(estimate_threshold_c(E, constant, Readout{0}, 0.001, 10, 1) == 0.0);

    // a linear model moves by w.eps, so c is at most a few sigma * ||w||
    const Mlp linear = Mlp::linear({1.0, -2.0, 0.5}, 0.0);
    const double c = estimate_threshold_c(E, linear, Readout{0}, 0.001, 10, 1);
    CHECK(c > 0.0);
    CHECK(c < 6.0 * 0.001 * std::sqrt(1.0 + 4.0 + 0.25));
    CHECK(estimate_threshold_c(E, linear, Readout{0}, 0.001, 10, 1) == c);
    CHECK_THROWS_AS(estimate_threshold_c(E, linear, Readout{0}, 0.0, 10, 1), ConfigError);

    HeuristicsConfig hc;
    hc.b_override = 1.0539;
    hc.c_override = 0.0534;
    AttributionContext ctx(linear, {0, 0, 0}, zero_baseline(3));
    const Heuristics h = compute_heuristics(E, ctx, hc);
    CHECK(h.b == 1.0539);
    CHECK(h.c == 0.0534);
    CHECK(h.b_overridden);
}

TEST_CASE("necessity of the full set is certain", "[pns]") {
    Example1 ex(3);
    const SampleSet factual(ex.data.inputs);
    CHECK(estimate_pn(factual, ex.ctx, DimSubset::full(3), 0.0, 100, 0.5, 1) == 1.0);
    CHECK(estimate_ps(factual, ex.ctx, DimSubset::empty(3), 0.0, 100, 0.5, 1) == 0.0);
    CHECK_THROWS_AS(estimate_ps(SampleSet{}, ex.ctx, DimSubset::full(3), 0.0, 10, 0.5, 1), EmptySupportError);
}

TEST_CASE("inert feature gets zero PNS, decisive feature positive", "[pns]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Example1 ex(seed);
        const auto inert = attribution_for_subset(ex.ctx, DimSubset({2}, 3), ex.E, config(2.0, 0.01, seed));
        CHECK(inert.ps == 0.0);
        CHECK(inert.p_ab == 0.0);
        CHECK(inert.pns == 0.0);
        const auto decisive = attribution_for_subset(ex.ctx, DimSubset({0}, 3), ex.E, config(2.0, 0.01, seed));
        CHECK(decisive.pns > 0.0);
    }
}

TEST_CASE("Monte-Carlo PNS approaches the enumerated value", "[pns][oracle]") {
    const Mlp model = oracle::random_mlp(3, 5, Activation::tanh, 21, 2.5);
    std::vector<Vector> rows;
    Rng rng(4);
    for (int i = 0; i < 24; ++i) rows.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const SampleSet E(rows);
    const Vector xt{0.3, -0.2, 0.5};
    const Baseline base = zero_baseline(3);
    AttributionContext ctx(model, xt, base, Readout{0});
    const std::vector<std::size_t> idx{0, 2};
    const auto exact = oracle::exact_pns([&](const Vector& x) { return model.predict(x)[0]; }, rows, xt,
                                         base.values, idx, 1.0, 0.03, 0.5);
    AttributionConfig cfg = config(1.0, 0.03, 5);
    cfg.n_inner = 256;
    cfg.resample_size = 2000;
    cfg.t_sf = cfg.t_nc = 400;
    const auto r = attribution_for_subset(ctx, DimSubset(idx, 3), E, cfg);
    CHECK_THAT(r.ps, WithinAbs(exact.ps, 0.03));
    CHECK_THAT(r.pn, WithinAbs(exact.pn, 0.03));
    CHECK_THAT(r.p_ab, WithinAbs(exact.p_ab, 0.03));
    CHECK_THAT(r.p_nanb, WithinAbs(exact.p_nanb, 0.03));
    CHECK_THAT(r.pns, WithinAbs(exact.pns, 0.04));
}

TEST_CASE("ablations remove exactly one module", "[pns][ablation]") {
    Example1 ex(2, 40);
    AttributionConfig cfg = config(2.0, 0.01, 2);
    const DimSubset s({0, 1}, 3);

    cfg.ablation.disable_sufficiency = true;
    auto r = attribution_for_subset(ex.ctx, s, ex.E, cfg);
    CHECK(r.ps == 0.0);
    CHECK(r.sf_indices.empty());
    CHECK(r.pns == r.pn * r.p_ab);

    cfg.ablation = {};
    cfg.ablation.disable_necessity = true;
    r = attribution_for_subset(ex.ctx, s, ex.E, cfg);
    CHECK(r.pn == 0.0);
    CHECK(r.pns == r.ps * r.p_nanb);

    cfg.ablation = {};
    cfg.ablation.disable_sir = true;
    r = attribution_for_subset(ex.ctx, s, ex.E, cfg);
    std::vector<std::size_t> all(40);
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(r.sf_indices == all);
    CHECK(r.nc_indices == all);

    cfg.ablation = {};
    cfg.ablation.disable_sufficiency = cfg.ablation.disable_necessity = true;
    CHECK_THROWS_AS(attribution_for_subset(ex.ctx, s, ex.E, cfg), ConfigError);
}

TEST_CASE("empty support on both sides is an error", "[pns]") {
    Example1 ex(1, 30);
    // inert subset at c = 0: the necessity weights vanish identically, and a tiny
    // boundary kills the sufficiency weights
    CHECK_THROWS_AS(attribution_for_subset(ex.ctx, DimSubset({2}, 3), ex.E, config(1e-6, 0.0, 1)), EmptySupportError);
    const auto r = attribution_for_subset(ex.ctx, DimSubset({2}, 3), ex.E, config(2.0, 0.0, 1));
    CHECK(r.nc_empty);
    CHECK_FALSE(r.sf_empty);
}

TEST_CASE("results do not depend on the worker count", "[pns][determinism]") {
    Example1 ex(4, 120);
    auto run = [&](const char* threads) {
        ::setenv("FANS_THREADS", threads, 1);
        const auto r = attribution_for_subset(ex.ctx, DimSubset({0}, 3), ex.E, config(1.5, 0.02, 8));
        const double c = estimate_threshold_c(ex.E, ex.model, Readout{0}, 0.001, 10, 8);
        ::unsetenv("FANS_THREADS");
        return std::tuple{r.pns, r.pn, r.ps, r.p_ab, r.sf_indices, c};
    };
    CHECK(run("1") == run("4"));
}

TEST_CASE("sweep flags the heuristic row and keeps the inert feature at zero", "[pns][sweep]") {
    Example1 ex(6, 80);
    Heuristics h;
    h.b = 1.25;
    h.c = 0.02;
    const std::vector<double> bs{0.5, 1.25, 3.0}, cs{0.0, 0.02, 0.1};
    const auto rows = sweep_event_params(ex.ctx, DimSubset({2}, 3), ex.E, config(1.0, 0.0, 6), bs, cs, h);
    REQUIRE(rows.size() == 9);
    std::size_t flagged = 0;
    for (const auto& row : rows) {
        flagged += row.heuristic;
        CHECK(row.pns == 0.0);
    }
    CHECK(flagged == 1);
    const auto single = sweep_event_params(ex.ctx, DimSubset({0}, 3), ex.E, config(1.0, 0.0, 6),
                                           std::vector<double>{1.25}, std::vector<double>{0.02}, h);
    CHECK(single[0].pns == attribution_for_subset(ex.ctx, DimSubset({0}, 3), ex.E, config(1.25, 0.02, 6)).pns);
    CHECK_THROWS_AS(sweep_event_params(ex.ctx, DimSubset({0}, 3), ex.E, config(1.0, 0.0, 6), std::vector<double>{},
                                       cs, h),
                    ConfigError);
}
