#include <catch_amalgamated.hpp>

#include <set>

#include "oracles.hpp"

using namespace fans;
using Catch::Matchers::WithinAbs;

TEST_CASE("hard perturbation touches only masked coordinates of the subset", "[perturb]") {
    const Vector x{1, 2, 3, 4};
    const Baseline base = user_baseline({-1, -2, -3, -4});
    const DimSubset s({1, 3}, 4);
    const Mask all{1, 1, 1, 1};
    CHECK(perturb(x, s, base, all) == Vector{1, -2, 3, -4});
    CHECK(perturb(x, s, base, Mask{0, 0, 0, 0}) == x);
    CHECK(perturb(x, s, base, Mask{1, 0, 1, 1}) == Vector{1, 2, 3, -4});
    CHECK(perturb(x, DimSubset::empty(4), base, all) == x);
    CHECK_THROWS_AS(perturb(x, s, base, Mask{1, 1}), ShapeError);
}

TEST_CASE("perturbation property: off-subset coordinates never change", "[perturb][property]") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const std::size_t d = 1 + rng.index(8);
        Vector x(d), xb(d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = rng.uniform(-3, 3);
            xb[i] = rng.uniform(-3, 3);
        }
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d; ++i)
            if (rng.bernoulli(0.5)) idx.push_back(i);
        const DimSubset s(idx, d);
        const Mask m = sample_mask(d, rng.uniform(), rng);
        const Vector z = perturb(x, s, user_baseline(xb), m);
        for (std::size_t i = 0; i < d; ++i) {
            if (!s.contains(i))
                CHECK(z[i] == x[i]);
            else
                CHECK(z[i] == (m[i] ? xb[i] : x[i]));
        }
    }
}

TEST_CASE("dimension subsets validate and complement", "[perturb]") {
    CHECK_THROWS_AS(DimSubset({1, 1}, 3), ConfigError);
    CHECK_THROWS_AS(DimSubset({3}, 3), ConfigError);
    const DimSubset s({2, 0}, 4);
    CHECK(s.indices() == std::vector<std::size_t>{0, 2});
    CHECK(s.complement().indices() == std::vector<std::size_t>{1, 3});
    CHECK(s.complement().complement() == s);
    CHECK(DimSubset::full(3).complement().empty());
    CHECK(DimSubset::from_mask(Vector{0.2, 0.5, 0.9}).indices() == std::vector<std::size_t>{1, 2});
    CHECK(s.indicator() == Vector{1, 0, 1, 0});
}

TEST_CASE("mask draws follow the Bernoulli parameter", "[perturb]") {
    Rng rng(4);
    std::size_t ones = 0;
    const std::size_t n = 20000;
    for (std::size_t j = 0; j < n / 10; ++j)
        for (auto v : sample_mask(10, 0.3, rng)) ones += v;
    CHECK_THAT(static_cast<double>(ones) / n, WithinAbs(0.3, 0.015));
    Rng r2(1);
    for (auto v : sample_mask(50, 0.0, r2)) CHECK(v == 0);
    for (auto v : sample_mask(50, 1.0, r2)) CHECK(v == 1);
    CHECK_THROWS_AS(sample_mask(3, 1.5, r2), ConfigError);
}

TEST_CASE("blended relaxation equals the hard perturbation at binary masks", "[perturb][property]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const std::size_t d = 2 + rng.index(6);
        Vector x(d), xb(d), s(d);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = rng.uniform(-2, 2);
            xb[i] = rng.uniform(-2, 2);
            s[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            if (s[i] == 1.0) idx.push_back(i);
        }
        const Mask m = sample_mask(d, 0.5, rng);
        const Baseline base = user_baseline(xb);
        CHECK(blended_perturb(x, s, base, m) == perturb(x, DimSubset(idx, d), base, m));
    }
}

TEST_CASE("relaxation derivatives match finite differences", "[perturb]") {
    Rng rng(8);
    const std::size_t d = 5;
    Vector x(d), xb(d), s(d);
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = rng.uniform(-2, 2);
        xb[i] = rng.uniform(-2, 2);
        s[i] = rng.uniform(0.1, 0.9);
    }
    const Baseline base = user_baseline(xb);
    const Mask m{1, 0, 1, 1, 0};
    for (std::size_t k = 0; k < d; ++k) {
        auto coord = [&](auto fn) {
            return oracle::central_difference([&](const Vector& u) { return fn(x, u, base, m)[k]; }, s, 1e-6)[k];
        };
        CHECK_THAT(coord([](auto&&... a) { return blended_perturb(a...); }),
                   WithinAbs(blended_perturb_derivative(x, base, m)[k], 1e-8));
        CHECK_THAT(coord([](auto&&... a) { return relaxed_perturb(a...); }),
                   WithinAbs(relaxed_perturb_derivative(x, base, m)[k], 1e-8));
    }
}

TEST_CASE("distances on relaxed and hard subsets agree at binary masks", "[perturb]") {
    const Vector x{1, 2, 3}, xt{0, 0, 1};
    const DimSubset s({0}, 3);
    const Vector mask = s.indicator();
    CHECK_THAT(masked_distance(x, xt, mask), WithinAbs(subset_distance(x, xt, s.complement()), 1e-15));
    CHECK_THAT(subset_distance(x, xt, s.complement()), WithinAbs(std::sqrt(8.0), 1e-15));
    CHECK(subset_distance(x, xt, s.complement(), 1) == 4.0);
    CHECK_THROWS_AS(masked_distance(x, xt, mask, 3), ConfigError);
}

TEST_CASE("baselines by data kind", "[perturb]") {
    Rng rng(1);
    CHECK(default_baseline(DataKind::tabular, 3, rng).values == Vector{0, 0, 0});
    const Baseline img = default_baseline(DataKind::image, 100, rng);
    CHECK(img.kind == BaselineKind::uniform);
    for (double v : img.values) CHECK((v >= 0.0 && v < 1.0));
    CHECK_THROWS_AS(user_baseline({1.0, std::nan("")}), ConfigError);
}

TEST_CASE("random streams are reproducible and distinct", "[random]") {
    Rng a = Rng::stream(7, StreamTag::mask, {1, 2});
    Rng b = Rng::stream(7, StreamTag::mask, {1, 2});
    Rng c = Rng::stream(7, StreamTag::mask, {2, 1});
    Rng e = Rng::stream(7, StreamTag::epoch, {1, 2});
    std::set<std::uint64_t> firsts;
    for (int i = 0; i < 5; ++i) CHECK(a() == b());
    firsts.insert(c());
    firsts.insert(e());
    firsts.insert(Rng::stream(8, StreamTag::mask, {1, 2})());
    CHECK(firsts.size() == 3);
    Rng u(3);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double v = u.uniform();
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK_THAT(sum / 10000, WithinAbs(0.5, 0.02));
}
