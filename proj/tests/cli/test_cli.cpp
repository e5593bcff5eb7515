#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "cli_support.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support/tempdir.hpp"

using json = nlohmann::json;
using namespace kbcx_cli;
using kbcx::testing::TempDir;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run_cli(const std::string& args, const std::filesystem::path& cwd) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" KBCX_CLI_PATH "' " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string l;
    while (std::getline(ss, l))
        if (!l.empty()) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("sha256 of a known message") {
    TempDir d;
    CHECK(sha256_file(d.write("abc", "abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK_THROWS_AS(sha256_file(d / "missing"), UsageError);
}

TEST_CASE("seed lists") {
    CHECK(parse_seeds("5") == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    CHECK(parse_seeds("3,7,9") == std::vector<std::uint64_t>{3, 7, 9});
    CHECK_THROWS_AS(parse_seeds("0"), UsageError);
    CHECK_THROWS_AS(parse_seeds("a,b"), UsageError);
}

TEST_CASE("aggregate: two-point and single-run cases") {
    const auto two = aggregate_metrics({{{"MRR", 0.40}}, {{"MRR", 0.42}}});
    CHECK(std::abs(two.at("MRR").mean - 0.41) < 1e-12);
    CHECK(std::abs(two.at("MRR").stdev - 0.01414213562) < 1e-10);
    const auto one = aggregate_metrics({{{"MRR", 0.3}}});
    CHECK(one.at("MRR").stdev == 0.0);
    CHECK(aggregate_json(one)["single_run"] == true);
    CHECK(aggregate_tsv(one).find("single run") != std::string::npos);
    CHECK_THROWS_AS(aggregate_metrics({{{"MRR", 0.4}}, {{"MR", 3.0}}}), UsageError);
    CHECK_THROWS_AS(aggregate_metrics({{{"MRR", 0.4}}, {{"MRR", 0.4}, {"MR", 3.0}}}), UsageError);
}

TEST_CASE("aggregate: random metric files against a direct formula") {
    TempDir d;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::map<std::string, double>> rows;
    for (int i = 0; i < 5; ++i) {
        std::map<std::string, double> m{{"MR", 1 + 100 * u(rng)}, {"MRR", u(rng)}, {"H@10", u(rng)}};
        json j{{"seed", i + 1}, {"metrics", m}};
        d.write("m" + std::to_string(i) + ".json", j.dump());
        rows.push_back(read_metrics_file(d / ("m" + std::to_string(i) + ".json")));
    }
    const auto agg = aggregate_metrics(rows);
    for (const char* k : {"MR", "MRR", "H@10"}) {
        double mean = 0;
        for (const auto& r : rows) mean += r.at(k);
        mean /= 5;
        double ss = 0;
        for (const auto& r : rows) ss += (r.at(k) - mean) * (r.at(k) - mean);
        CHECK(std::abs(agg.at(k).mean - mean) < 1e-12);
        CHECK(std::abs(agg.at(k).stdev - std::sqrt(ss / 4)) < 1e-12);
    }
    const auto r = run_cli("aggregate --json m0.json m1.json m2.json m3.json m4.json", d.path());
    CHECK(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(std::abs(j["metrics"]["MRR"]["mean"].get<double>() - agg.at("MRR").mean) < 1e-12);
    d.write("bad.json", R"({"metrics": {"MRR": 0.1, "other": 2}})");
    CHECK(run_cli("aggregate m0.json bad.json", d.path()).code == 2);
}

TEST_CASE("merge gives overlay precedence") {
    const auto m = merge(json{{"a", 1}, {"model", {{"dim", 4}, {"kind", "tucker"}}}},
                         json{{"model", {{"dim", 8}}}, {"b", 2}});
    CHECK(m["model"]["dim"] == 8);
    CHECK(m["model"]["kind"] == "tucker");
    CHECK(m["a"] == 1);
    CHECK(m["b"] == 2);
}

TEST_CASE("cli: exit codes") {
    TempDir d;
    CHECK(run_cli("", d.path()).code == 2);
    CHECK(run_cli("finetune --no-such-flag", d.path()).code == 2);
    CHECK(run_cli("finetune --train missing.tsv", d.path()).code == 2);
    CHECK(run_cli("diagnose --ckpt a --doge b --suite sideways", d.path()).code == 2);
    d.write("t.tsv", "a\tb\n");
    CHECK(run_cli("finetune --train t.tsv --seeds 1 --epochs 1", d.path()).code == 1);
    d.write("u.tsv", "a\tr\tb\n");
    CHECK(run_cli("finetune --train u.tsv --model nonsense", d.path()).code == 2);
    CHECK(run_cli("--help", d.path()).code == 0);
}

TEST_CASE("cli: manifests are reproducible and printed paths exist") {
    TempDir d;
    REQUIRE(run_cli("gen-diagnostics --seed 2 --out world", d.path()).code == 0);
    d.write("cfg.json", R"({"model": {"kind": "5star", "encoder": "none", "dim": 4}, "epochs": 50, "batch_size": 32})");
    const std::string args =
        "finetune --kb world --config cfg.json --epochs 3 --validate-every 1 --lr 0.02 --seeds 2 --out run --quiet";
    const auto first = run_cli(args, d.path());
    REQUIRE(first.code == 0);
    for (const auto& p : lines(first.out)) CHECK(std::filesystem::exists(d.path() / p));
    auto m1 = json::parse(std::ifstream(d / "run/manifest.json"));
    const auto second = run_cli(args, d.path());
    REQUIRE(second.code == 0);
    auto m2 = json::parse(std::ifstream(d / "run/manifest.json"));
    CHECK(m1.contains("timestamps"));
    m1.erase("timestamps");
    m2.erase("timestamps");
    CHECK(m1.dump() == m2.dump());

    CHECK(m1["config"]["epochs"] == 3);
    CHECK(m1["config"]["batch_size"] == 32);
    CHECK(m1["config"]["model"]["kind"] == "5star");
    CHECK(m1["seeds"] == json::array({1, 2}));
    CHECK(m1["inputs"]["train"]["sha256"].get<std::string>().size() == 64);
    std::vector<std::map<std::string, double>> rows;
    for (const auto& s : m1["per_seed"]) rows.push_back(s["metrics"].get<std::map<std::string, double>>());
    const auto agg = aggregate_metrics(rows);
    for (const auto& [k, v] : agg) {
        CHECK(m1["aggregate"]["metrics"][k]["mean"].get<double>() == v.mean);
        CHECK(m1["aggregate"]["metrics"][k]["stdev"].get<double>() == v.stdev);
    }
    std::ifstream curve(d / "run/seed1.curve.tsv");
    std::string header;
    std::getline(curve, header);
    CHECK(header == "epoch\tvalid_MRR");
    CHECK(lines(std::string(std::istreambuf_iterator<char>(curve), {})).size() == 3);

    const auto zs = run_cli("zeroshot --kb world --ckpt run/seed1.ckpt --out zs", d.path());
    CHECK(zs.code == 2);
    const auto ev = run_cli("eval --kb world --ckpt run/seed1.ckpt --ckpt run/seed2.ckpt --split valid --out ev",
                            d.path());
    CHECK(ev.code == 0);
    for (const auto& p : lines(ev.out)) CHECK(std::filesystem::exists(d.path() / p));
}

TEST_CASE("cli: finetune from a pretrained checkpoint keeps its architecture") {
    TempDir d;
    REQUIRE(run_cli("gen-diagnostics --seed 3 --out world", d.path()).code == 0);
    REQUIRE(run_cli("pretrain --kb world --model tucker --encoder gru --dim 6 --word-dim 4 --epochs 1 --seeds 1 "
                    "--out pre --quiet",
                    d.path())
                .code == 0);
    CHECK(run_cli("finetune --kb world --init pre/seed1.ckpt --epochs 1 --seeds 1 --out ft --quiet", d.path()).code ==
          0);
    const auto m = json::parse(std::ifstream(d / "ft/manifest.json"));
    CHECK(m["config"]["model"]["dim"] == 6);
    CHECK(run_cli("finetune --kb world --init pre/seed1.ckpt --dim 8 --epochs 1 --seeds 1 --out bad --quiet", d.path())
              .code == 1);
}
