#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>

#include "cli.hpp"
#include "oracles.hpp"

using namespace fans;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run fans_run(std::vector<std::string> args) {
    args.insert(args.begin(), "fans");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

json read_json(const std::filesystem::path& p) { return json::parse(oracle::slurp(p)); }

std::string steep_model(const std::filesystem::path& dir) {
    const std::string path = (dir / "steep.json").string();
    save_model(oracle::example1_model(), path);
    return path;
}

}  // namespace

TEST_CASE("fit trains a reloadable model and is deterministic", "[cli][fit]") {
    const auto dir = oracle::scratch_dir("cli_fit");
    const auto a = dir / "a", b = dir / "b";
    for (const auto& out : {a, b}) {
        const Run r = fans_run({"fit", "--data", "gen:example1:600:3", "--hidden", "8", "--epochs", "60", "--seed",
                                "9", "--out", out.string()});
        REQUIRE(r.code == 0);
    }
    const Mlp m = load_model((a / "model.json").string());
    CHECK(accuracy(m, gen_example1(600, 3)) > 0.95);
    CHECK(oracle::slurp(a / "model.json") == oracle::slurp(b / "model.json"));
}

TEST_CASE("configuration errors exit with code 2 and name the flag", "[cli][errors]") {
    const auto dir = oracle::scratch_dir("cli_err");
    const std::string model = steep_model(dir);
    Run r = fans_run({"attribute", "--model", model, "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("--data"));

    r = fans_run({"attribute", "--model", model, "--data", "gen:example1:50:1", "--subset", "1", "--ablate", "xyz",
                  "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("--ablate"));

    r = fans_run({"attribute", "--model", model, "--data", "gen:example1:50:1", "--subset", "4", "--out",
                  dir.string()});
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("--subset"));

    r = fans_run({"attribute", "--bogus"});
    CHECK(r.code == 2);
    CHECK(fans_run({}).code == 2);
}

TEST_CASE("an empty neighbourhood exits with code 4", "[cli][errors]") {
    const auto dir = oracle::scratch_dir("cli_empty");
    const Run r = fans_run({"attribute", "--model", steep_model(dir), "--data", "gen:example1:50:1", "--target",
                            "1.5,-0.5,0.3", "--subset", "1", "--b", "1e-9", "--c", "0", "--out", dir.string()});
    CHECK(r.code == 4);
    CHECK_THAT(r.err, ContainsSubstring("--b"));
}

TEST_CASE("the irrelevant feature gets zero PNS through the CLI", "[cli][attribute]") {
    const auto dir = oracle::scratch_dir("cli_ex1");
    const std::string model = steep_model(dir);
    auto pns_of = [&](const std::string& subset) {
        const auto out = dir / ("s" + subset);
        const Run r = fans_run({"attribute", "--model", model, "--data", "gen:example1:200:1", "--target",
                                "1.5,-0.5,0.3", "--baseline", "zeros", "--subset", subset, "--out", out.string()});
        REQUIRE(r.code == 0);
        return read_json(out / "report.json")["result"]["pns"].get<double>();
    };
    CHECK(pns_of("3") == 0.0);
    CHECK(pns_of("1") > 0.0);
}

TEST_CASE("boundary and threshold overrides are echoed bit-exactly", "[cli][attribute]") {
    const auto dir = oracle::scratch_dir("cli_override");
    const Run r = fans_run({"attribute", "--model", steep_model(dir), "--data", "gen:example1:200:1", "--subset",
                            "1", "--b", "1.0539", "--c", "0.0534", "--out", dir.string()});
    REQUIRE(r.code == 0);
    const json j = read_json(dir / "report.json");
    CHECK(j["heuristics"]["b"].get<double>() == 1.0539);
    CHECK(j["heuristics"]["c"].get<double>() == 0.0534);
    CHECK(j["heuristics"]["b_source"] == "override");
    CHECK(j["config"]["b"].get<double>() == 1.0539);
    CHECK(j["config"]["c"].get<double>() == 0.0534);

    const auto dir2 = dir / "heur";
    REQUIRE(fans_run({"attribute", "--model", steep_model(dir), "--data", "gen:example1:200:1", "--subset", "1",
                      "--out", dir2.string()})
                .code == 0);
    const json h = read_json(dir2 / "report.json")["heuristics"];
    CHECK(h["b_source"] == "heuristic");
    CHECK_THAT(h["b"].get<double>(), WithinAbs(1.06 * std::pow(200.0, 1.0 / 7.0), 1e-12));
}

TEST_CASE("report files are byte-identical across runs", "[cli][determinism]") {
    const auto dir = oracle::scratch_dir("cli_det");
    const std::string model = steep_model(dir);
    for (const std::string mode : {"subset", "optimize"}) {
        std::vector<std::string> reports;
        for (int k = 0; k < 2; ++k) {
            const auto out = dir / (mode + std::to_string(k));
            std::vector<std::string> args{"attribute", "--model", model, "--data", "gen:example1:120:1",
                                          "--target",  "2",     "--seed", "5", "--out", out.string()};
            if (mode == "subset") {
                args.insert(args.end(), {"--subset", "1,2"});
            } else {
                args.insert(args.end(), {"--epochs", "5"});
            }
            REQUIRE(fans_run(args).code == 0);
            reports.push_back(oracle::slurp(out / "report.json"));
            if (mode == "optimize") CHECK(oracle::slurp(out / "trace.csv").rfind("epoch,objective\n", 0) == 0);
        }
        CHECK(reports[0] == reports[1]);
    }
}

TEST_CASE("sweep agrees with attribute and flags the heuristic row", "[cli][sweep]") {
    const auto dir = oracle::scratch_dir("cli_sweep");
    const std::string model = steep_model(dir);
    const std::vector<std::string> common{"--model", model, "--data", "gen:example1:200:1", "--target",
                                          "1.5,-0.5,0.3", "--baseline", "zeros", "--seed", "3"};
    auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
        head.insert(head.end(), common.begin(), common.end());
        head.insert(head.end(), tail.begin(), tail.end());
        return head;
    };
    REQUIRE(fans_run(with({"attribute"}, {"--subset", "1", "--b", "0.8", "--c", "0.05", "--out",
                                          (dir / "a").string()}))
                .code == 0);
    REQUIRE(fans_run(with({"sweep"}, {"--subset", "1", "--b-grid", "0.8", "--c-grid", "0.05", "--out",
                                      (dir / "s").string()}))
                .code == 0);
    const double attr = read_json(dir / "a" / "report.json")["result"]["pns"].get<double>();
    const json rows = read_json(dir / "s" / "report.json")["rows"];
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["pns"].get<double>() == attr);
    CHECK_FALSE(rows[0]["heuristic"].get<bool>());

    REQUIRE(fans_run(with({"sweep"}, {"--subset", "3", "--b-grid", "0.5:2:4", "--c-grid", "0,0.01,0.1",
                                      "--include-heuristic", "--out", (dir / "h").string()}))
                .code == 0);
    const json hrows = read_json(dir / "h" / "report.json")["rows"];
    CHECK(hrows.size() == 20);
    int flagged = 0;
    for (const auto& r : hrows) {
        flagged += r["heuristic"].get<bool>();
        if (!r["empty_support"].get<bool>()) CHECK(r["pns"].get<double>() == 0.0);
    }
    CHECK(flagged == 1);
    CHECK(oracle::slurp(dir / "h" / "sweep.csv").rfind("b,c,pns,pn,ps,heuristic,empty_support\n", 0) == 0);
}

TEST_CASE("evaluate computes metrics from mask files", "[cli][evaluate]") {
    const auto dir = oracle::scratch_dir("cli_eval");
    const std::string model = steep_model(dir);
    auto write_mask = [&](const std::string& name, const Vector& s) {
        std::ofstream(dir / name) << cli::mask_csv(s);
        return (dir / name).string();
    };
    const std::vector<std::string> common{"--model", model, "--data", "gen:example1:50:1", "--target",
                                          "1.5,-0.5,0.3"};
    auto eval = [&](const std::string& mask, const std::string& metrics, const std::string& out,
                    std::vector<std::string> extra = {}) {
        std::vector<std::string> args{"evaluate", "--attribution", mask, "--metrics", metrics, "--out",
                                      (dir / out).string()};
        args.insert(args.end(), common.begin(), common.end());
        args.insert(args.end(), extra.begin(), extra.end());
        return fans_run(args);
    };

    REQUIRE(eval(write_mask("u.csv", {0.5, 0.5, 0.5}), "spa,recall", "u", {"--truth", "1,2"}).code == 0);
    json m = read_json(dir / "u" / "metrics.json")["metrics"];
    CHECK_THAT(m["sparseness"]["value"].get<double>(), WithinAbs(0.0, 1e-12));

    REQUIRE(eval(write_mask("p.csv", {0.9, 0.8, 0.1}), "recall@2,fid+,fid-,irof,sen", "p", {"--truth", "1,2"})
                .code == 0);
    m = read_json(dir / "p" / "metrics.json")["metrics"];
    CHECK(m["recall_at_n"]["value"].get<double>() == 1.0);
    CHECK(m["recall_at_n"]["config"]["n"] == 2);
    CHECK(m.contains("fid_plus"));
    CHECK(m.contains("max_sensitivity"));

    const Run zero = eval(write_mask("z.csv", {0.0, 0.0, 0.0}), "sparseness,recall", "z", {"--truth", "1"});
    CHECK(zero.code == 3);
    m = read_json(dir / "z" / "metrics.json")["metrics"];
    CHECK(m["sparseness"]["value"].is_null());
    CHECK(m["sparseness"].contains("error"));
    CHECK(m["recall_at_n"]["value"].get<double>() == 1.0);

    CHECK(eval(write_mask("bad.csv", {1.0, 2.0}), "spa", "bad").code == 2);
    CHECK(eval(write_mask("q.csv", {1.0, 2.0, 3.0}), "nonsense", "q").code == 2);
}

TEST_CASE("evaluate infidelity vanishes for a constant model with zero attribution", "[cli][evaluate]") {
    const auto dir = oracle::scratch_dir("cli_const");
    const std::string model = (dir / "const.json").string();
    save_model(Mlp::logistic({0.0, 0.0, 0.0}, 0.3), model);
    std::ofstream(dir / "zero.csv") << cli::mask_csv(Vector{0.0, 0.0, 0.0});
    const Run r = fans_run({"evaluate", "--model", model, "--data", "gen:example1:20:1", "--attribution",
                            (dir / "zero.csv").string(), "--metrics", "infidelity", "--out", dir.string()});
    REQUIRE(r.code == 0);
    CHECK(read_json(dir / "metrics.json")["metrics"]["infidelity"]["value"].get<double>() == 0.0);
}

TEST_CASE("heatmaps from the CLI", "[cli][heatmap]") {
    const auto dir = oracle::scratch_dir("cli_heat");
    std::ofstream(dir / "m.csv") << cli::mask_csv(Vector{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
    REQUIRE(fans_run({"heatmap", "--mask", (dir / "m.csv").string(), "--shape", "2x2", "--out", dir.string()}).code ==
            0);
    const GrayImage img = read_pgm((dir / "heatmap.pgm").string());
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 85, 170, 255});
    CHECK(fans_run({"heatmap", "--mask", (dir / "m.csv").string(), "--shape", "3x2", "--out", dir.string()}).code ==
          2);
}

TEST_CASE("gen writes data and reports the planted features", "[cli][gen]") {
    const auto dir = oracle::scratch_dir("cli_gen");
    const Run r = fans_run({"gen", "--data", "gen:planted:100:8:2:0.1:4", "--out", dir.string()});
    REQUIRE(r.code == 0);
    const Dataset ds = gen_planted_sparse(100, 8, 2, 0.1, 4);
    std::string expect = "ground truth features:";
    for (std::size_t i : ds.ground_truth->indices()) expect += " " + std::to_string(i + 1);
    CHECK_THAT(r.out, ContainsSubstring(expect));
    CHECK(load_csv((dir / "data.csv").string()).inputs == ds.inputs);
}

TEST_CASE("the installed binary maps errors to exit codes", "[cli][binary]") {
    const auto dir = oracle::scratch_dir("cli_bin");
    auto status = [](const std::string& cmd) {
        const int s = std::system(cmd.c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    const std::string bin = FANS_CLI_PATH;
    CHECK(status(bin + " --version > /dev/null") == 0);
    CHECK(status(bin + " gen --data gen:example1:10 --out " + dir.string() + " > /dev/null") == 0);
    CHECK(std::filesystem::exists(dir / "data.csv"));
    CHECK(status(bin + " fit --out " + dir.string() + " 2> /dev/null") == 2);
}
