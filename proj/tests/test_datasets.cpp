#include <catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace fans;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("toy generator follows its labelling rule", "[datasets]") {
    const Dataset ds = gen_example1(500, 2);
    REQUIRE(ds.size() == 500);
    REQUIRE(ds.dim() == 3);
    CHECK(ds.ground_truth->indices() == std::vector<std::size_t>{0, 1});
    std::size_t positives = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vector& x = ds.inputs[i];
        for (double v : x) CHECK((v >= -2.0 && v <= 2.0));
        CHECK(ds.labels[i] == (x[0] - x[1] > 1.0 ? 1 : 0));
        positives += ds.labels[i];
    }
    // P(x1 - x2 > 1) for independent U[-2, 2] is 9/32
    CHECK(std::abs(positives / 500.0 - 9.0 / 32.0) < 0.06);
    CHECK(gen_example1(50, 2).inputs == gen_example1(50, 2).inputs);
    CHECK(gen_example1(50, 2).inputs != gen_example1(50, 3).inputs);
    CHECK_THROWS_AS(gen_example1(0, 1), ConfigError);
}

TEST_CASE("planted sparse generator plants k coordinates with a margin", "[datasets]") {
    const Dataset ds = gen_planted_sparse(300, 20, 3, 0.2, 5);
    REQUIRE(ds.ground_truth);
    CHECK(ds.ground_truth->size() == 3);
    std::size_t pos = 0;
    for (int y : ds.labels) pos += y;
    CHECK(pos > 60);
    CHECK(pos < 240);
    CHECK_THROWS_AS(gen_planted_sparse(10, 5, 5, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(gen_planted_sparse(10, 5, 0, 0.1, 1), ConfigError);
    CHECK_THROWS_WITH(gen_planted_sparse(10, 5, 1, 10.0, 1), ContainsSubstring("infeasible"));
}

TEST_CASE("a logistic fit on planted data ranks the support first", "[datasets][property]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds = gen_planted_sparse(400, 10, 2, 0.1, seed);
        const auto& sup = ds.ground_truth->indices();
        // a logistic fit puts its largest weights on the support
        TrainConfig tc;
        tc.epochs = 150;
        const Mlp m = fit_mlp(ds, logistic_architecture(10, 2), tc, seed);
        Vector w = m.layers()[0].weights;
        for (double& v : w) v = std::abs(v);
        std::vector<std::size_t> order(10);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return w[a] > w[b]; });
        std::vector<std::size_t> top(order.begin(), order.begin() + 2);
        std::sort(top.begin(), top.end());
        CHECK(top == sup);
    }
}

TEST_CASE("CSV round-trips exactly", "[datasets][csv]") {
    const auto dir = oracle::scratch_dir("csv");
    const Dataset ds = gen_planted_sparse(40, 6, 2, 0.1, 1);
    const std::string path = (dir / "d.csv").string();
    save_csv(ds, path);
    CHECK(oracle::slurp(path).rfind("x1,x2,x3,x4,x5,x6,label\n", 0) == 0);
    const Dataset back = load_csv(path);
    CHECK(back.inputs == ds.inputs);
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == 2);
}

TEST_CASE("CSV errors are typed and located", "[datasets][csv]") {
    const auto dir = oracle::scratch_dir("csv_err");
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream(dir / name) << text;
        return (dir / name).string();
    };
    CHECK_THROWS_AS(load_csv(write("ragged.csv", "a,b,label\n1,2,0\n1,0\n")), RowLengthError);
    CHECK_THROWS_WITH(load_csv(write("ragged2.csv", "a,b,label\n1,2,0\n1,0\n")), ContainsSubstring("row 2"));
    CHECK_THROWS_AS(load_csv(write("neg.csv", "a,label\n1,-1\n")), LabelRangeError);
    CHECK_THROWS_AS(load_csv(write("range.csv", "a,label\n1,3\n"), 2), LabelRangeError);
    CHECK_THROWS_AS(load_csv(write("nan.csv", "a,label\nfoo,1\n")), ParseError);
    CHECK_THROWS_AS(load_csv(write("empty.csv", "a,label\n")), ParseError);
    CHECK_THROWS_AS(load_csv((dir / "nope.csv").string()), ConfigError);
    const Dataset q = load_csv(write("quoted.csv", "\"a,1\",label\r\n\"2.5\",1\r\n"));
    CHECK(q.inputs[0] == Vector{2.5});
}

namespace {

void put_be32(std::string& s, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xFF));
}

}  // namespace

TEST_CASE("IDX files load with scaling and magic checks", "[datasets][idx]") {
    const auto dir = oracle::scratch_dir("idx");
    std::string img, lab;
    put_be32(img, 0x803);
    put_be32(img, 2);
    put_be32(img, 2);
    put_be32(img, 2);
    for (unsigned char p : {0, 51, 102, 255, 255, 0, 0, 0}) img.push_back(static_cast<char>(p));
    put_be32(lab, 0x801);
    put_be32(lab, 2);
    lab.push_back(3);
    lab.push_back(7);
    std::ofstream(dir / "img", std::ios::binary) << img;
    std::ofstream(dir / "lab", std::ios::binary) << lab;
    const Dataset ds = load_idx((dir / "img").string(), (dir / "lab").string());
    CHECK(ds.kind == DataKind::image);
    CHECK(ds.dim() == 4);
    CHECK(ds.inputs[0] == Vector{0.0, 0.2, 0.4, 1.0});
    CHECK(ds.labels == std::vector<int>{3, 7});
    CHECK(ds.num_classes == 8);

    CHECK_THROWS_AS(load_idx((dir / "lab").string(), (dir / "lab").string()), MagicMismatchError);
    std::ofstream(dir / "short", std::ios::binary) << img.substr(0, 20);
    CHECK_THROWS_AS(load_idx((dir / "short").string(), (dir / "lab").string()), ParseError);
}

TEST_CASE("dataset validation", "[datasets]") {
    Dataset ds;
    ds.inputs = {{1.0, 2.0}, {3.0}};
    ds.labels = {0, 1};
    CHECK_THROWS_AS(ds.validate(), RowLengthError);
    ds.inputs = {{1.0}, {3.0}};
    ds.labels = {0, 2};
    CHECK_THROWS_AS(ds.validate(), LabelRangeError);
    ds.labels = {0};
    CHECK_THROWS_AS(ds.validate(), ValidationError);
}
