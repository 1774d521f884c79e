#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/graph/fci.hpp"
#include "coat/graph/io.hpp"
#include "coat/rng.hpp"
#include "commands.hpp"
#include "helpers.hpp"
#include "toml.hpp"

using namespace coat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = tools::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const std::string kApple = (fs::path(COAT_DATA_DIR) / "apple" / "apple.toml").string();

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
    CHECK(cli({"--help"}).code == tools::kExitOk);
    CHECK(cli({}).code == tools::kExitConfig);
    CHECK(cli({"frobnicate"}).code == tools::kExitConfig);
    CHECK(cli({"run", "--config", "/nonexistent.toml"}).code == tools::kExitConfig);
    CHECK(cli({"gen", "apple", "-n", "5", "--out", "/tmp/never"}).code == tools::kExitConfig);
}

TEST_CASE("gen apple is deterministic") {
    testing::TempDir dir;
    const auto a = dir / "a", b = dir / "b";
    REQUIRE(cli({"gen", "apple", "-n", "200", "--seed", "1", "--out", a.string()}).code == 0);
    REQUIRE(cli({"gen", "apple", "-n", "200", "--seed", "1", "--out", b.string()}).code == 0);
    CHECK(load_dataset(a / "dataset.jsonl").size() == 200);
    CHECK(slurp(a / "dataset.jsonl") == slurp(b / "dataset.jsonl"));
    CHECK(slurp(a / "truth.json") == slurp(b / "truth.json"));
    bench::load_ground_truth(a / "truth.json").validate();
}

TEST_CASE("gen neuropathic writes both artifacts") {
    testing::TempDir dir;
    const auto r = cli({"gen", "neuropathic", "--n-text", "100", "--n-tab", "1000", "--seed", "2", "--out", dir.path.string()});
    REQUIRE(r.code == 0);
    CHECK(load_dataset(dir / "notes.jsonl").size() == 100);
    CHECK(load_factor_table_csv(dir / "tabular.csv").rows() == 1000);
    CHECK(fs::exists(dir / "truth.json"));
}

TEST_CASE("discover finds the collider arrowheads") {
    testing::TempDir dir;
    Rng rng(3);
    std::ostringstream csv;
    csv << "sample_id,a,b,y\n";
    for (int i = 0; i < 2000; ++i) {
        const int a = static_cast<int>(rng.integer(-1, 1)), b = static_cast<int>(rng.integer(-1, 1));
        csv << "s" << i << "," << a << "," << b << "," << a + b + static_cast<int>(rng.integer(0, 1)) << "\n";
    }
    write_file(dir / "t.csv", csv.str());
    const auto r = cli({"discover", "--csv", (dir / "t.csv").string(), "--target", "y", "--out", (dir / "g").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("a o-> y") != std::string::npos);
    CHECK(r.out.find("b o-> y") != std::string::npos);
    CHECK(fs::exists(dir / "g" / "graph.json"));
    CHECK(fs::exists(dir / "g" / "graph.dot"));

    write_file(dir / "one.csv", "sample_id,y\ns0,1\ns1,2\ns2,3\n");
    const auto lone = cli({"discover", "--csv", (dir / "one.csv").string(), "--target", "y", "--out", (dir / "lone").string()});
    CHECK(lone.code == 0);
    CHECK(lone.out.find("1 nodes, 0 edges") != std::string::npos);

    write_file(dir / "bad.csv", "sample_id,a,y\ns0,1\n");
    CHECK(cli({"discover", "--csv", (dir / "bad.csv").string(), "--target", "y"}).code == tools::kExitConfig);
    CHECK(cli({"discover", "--csv", (dir / "one.csv").string(), "--target", "z"}).code == tools::kExitConfig);
}

TEST_CASE("a scripted run is reproducible byte for byte") {
    testing::TempDir dir;
    const auto a = dir / "a", b = dir / "b";
    const auto r = cli({"run", "--config", kApple, "--out", a.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("final MB estimate:") != std::string::npos);
    REQUIRE(cli({"run", "--config", kApple, "--provider", "scripted", "--seed", "7", "--out", b.string()}).code == 0);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) {
            ++files;
            CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
        }
    CHECK(files > 10);
    CHECK(cli({"run", "--config", kApple, "--out", a.string()}).code == tools::kExitConfig);
    CHECK(cli({"run", "--config", kApple, "--out", a.string(), "--overwrite"}).code == 0);
}

TEST_CASE("unknown config keys are rejected") {
    testing::TempDir dir;
    const std::string scenario = (fs::path(COAT_DATA_DIR) / "apple" / "scenario.json").string();
    for (const std::string bad : {"max_round = 2\n[data]\ngenerator = \"apple\"\n",
                                  "[data]\ngenerator = \"apple\"\n[loop]\nmax_round = 2\n",
                                  "[data]\ngenerator = \"apple\"\n[annotator]\ncommands = \"x\"\n",
                                  "data = 3\n"}) {
        write_file(dir / "c.toml", bad + "[proposer]\nscenario = \"" + scenario + "\"\n");
        const auto r = cli({"run", "--config", (dir / "c.toml").string(), "--out", (dir / "run").string()});
        CHECK_MESSAGE(r.code == tools::kExitConfig, bad);
        CHECK_FALSE(fs::exists(dir / "run"));
    }
}

TEST_CASE("a missing API key stops before any round") {
    testing::TempDir dir;
    ::unsetenv("COAT_LLM_API_KEY");
    ::setenv("COAT_LLM_BASE_URL", "http://127.0.0.1:9", 1);
    ::setenv("COAT_LLM_MODEL", "m", 1);
    const auto r = cli({"run", "--config", kApple, "--provider", "http", "--out", (dir / "run").string()});
    CHECK(r.code == tools::kExitConfig);
    CHECK_FALSE(fs::exists(dir / "run" / "rounds"));
    ::unsetenv("COAT_LLM_BASE_URL");
    ::unsetenv("COAT_LLM_MODEL");
}

TEST_CASE("an unreachable backend exits with the backend code") {
    testing::TempDir dir;
    ::setenv("COAT_LLM_API_KEY", "k", 1);
    ::setenv("COAT_LLM_BASE_URL", "http://127.0.0.1:9", 1);
    ::setenv("COAT_LLM_MODEL", "m", 1);
    write_file(dir / "c.toml", "[data]\ngenerator = \"apple\"\nn = 20\n[proposer]\nprovider = \"http\"\nmax_attempts = 1\n");
    const auto r = cli({"run", "--config", (dir / "c.toml").string(), "--out", (dir / "run").string()});
    CHECK(r.code == tools::kExitBackend);
    ::unsetenv("COAT_LLM_API_KEY");
    ::unsetenv("COAT_LLM_BASE_URL");
    ::unsetenv("COAT_LLM_MODEL");
}

TEST_CASE("eval aggregates runs into a table row") {
    testing::TempDir dir;
    const auto truth = dir / "gen" / "truth.json";
    REQUIRE(cli({"gen", "apple", "-n", "200", "--seed", "7", "--out", (dir / "gen").string()}).code == 0);
    // round 1 yields the three parents, round 2 adds the child
    const std::vector<std::string> budgets{"2", "2", "1"};
    std::vector<std::string> args{"eval", "--truth", truth.string(), "--out", (dir / "report.json").string()};
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        const auto run = dir / ("run" + std::to_string(i));
        REQUIRE(cli({"run", "--config", kApple, "--max-rounds", budgets[i], "--out", run.string()}).code == 0);
        args.push_back("--run");
        args.push_back(run.string());
    }
    const std::string mapping =
        R"({"size":"size","smell":"smell","sweetness":"sweetness","market_potential":"market_potential","juiciness":"juiciness"})";
    args.push_back("--mapping");
    args.push_back(mapping);
    const auto r = cli(args);
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("| 3.67 | 0.00 | 0.00 | 0.73 | 1.00 | 0.84 |") != std::string::npos);
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report["runs"].size() == 3);
    CHECK(report["aggregate"]["factor_score"]["mb"].get<double>() == doctest::Approx(11.0 / 3));

    const auto full = dir / "full";
    REQUIRE(cli({"run", "--config", kApple, "--out", full.string()}).code == 0);
    const auto perfect = cli({"eval", "--truth", truth.string(), "--run", full.string(), "--mapping", mapping, "--out",
                              (dir / "p.json").string()});
    REQUIRE(perfect.code == 0);
    const auto pj = nlohmann::json::parse(slurp(dir / "p.json"))["runs"][0];
    CHECK(pj["factor_score"]["f1"].get<double>() == doctest::Approx(1.0));

    CHECK(cli({"eval", "--truth", truth.string(), "--run", full.string(), "--mapping", R"({"size":"size"})"}).code ==
          tools::kExitConfig);
    // the oracle PAG as the final graph scores as a perfect run
    const auto t = bench::load_ground_truth(truth);
    const auto oracle = graph::fci(graph::dsep_ci(t.dag, t.dag.nodes()), t.dag.nodes());
    write_file(full / "final" / "graph.json", graph::pag_to_json(oracle).dump(2));
    const std::string everything = mapping.substr(0, mapping.size() - 1) + R"(,"freshness":"freshness"})";
    REQUIRE(cli({"eval", "--truth", truth.string(), "--run", full.string(), "--mapping", everything, "--out",
                 (dir / "p2.json").string()})
                .code == 0);
    const auto g = nlohmann::json::parse(slurp(dir / "p2.json"))["runs"][0]["graph_score"];
    CHECK(g["shd"] == 0);
    CHECK(g["sid"] == 0);
    CHECK(g["edge_f1"].get<double>() == doctest::Approx(1.0));

    write_file(dir / "map.json", mapping);
    CHECK(cli({"eval", "--truth", truth.string(), "--run", full.string(), "--mapping", (dir / "map.json").string()}).code ==
          0);
    CHECK(cli({"eval", "--truth", truth.string(), "--run", full.string(), "--mapping", (dir / "nope.json").string()})
              .code == tools::kExitConfig);
}

TEST_CASE("eval theory prints the bound and the simulated rate") {
    const auto r = cli({"eval", "theory", "--p", "0.6", "--c", "0.2", "--eps", "0.05", "--delta", "0.1"});
    REQUIRE(r.code == 0);
    bench::TheoryParams q;
    q.p = 0.6;
    q.c_psi = 0.2;
    q.epsilon = 0.05;
    q.delta = 0.1;
    CHECK(r.out.find("bound_round: " + std::to_string(bench::bound_round(q))) != std::string::npos);
    CHECK(r.out.find("success rate:") != std::string::npos);
    CHECK(cli({"eval", "theory", "--p", "1.5"}).code == tools::kExitConfig);
}

TEST_CASE("the TOML subset parser") {
    const auto j = tools::parse_toml(R"(# comment
seed = 7
name = "a \"quoted\" value" # trailing
big = 1_000
ratio = 0.5
on = true
list = [1, 2, 3]

[loop]
alpha = 5e-2
"quoted key" = 'literal\n'

[proposer.http]
model = "m"
)");
    CHECK(j["seed"] == 7);
    CHECK(j["name"] == "a \"quoted\" value");
    CHECK(j["big"] == 1000);
    CHECK(j["ratio"] == 0.5);
    CHECK(j["on"] == true);
    CHECK(j["list"] == nlohmann::json::array({1, 2, 3}));
    CHECK(j["loop"]["alpha"].get<double>() == doctest::Approx(0.05));
    CHECK(j["loop"]["quoted key"] == "literal\\n");
    CHECK(j["proposer"]["http"]["model"] == "m");
    CHECK_THROWS_AS(tools::parse_toml("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(tools::parse_toml("[[runs]]\n"), ConfigError);
    CHECK_THROWS_AS(tools::parse_toml("a = \n"), ConfigError);
    CHECK_THROWS_AS(tools::parse_toml("a = \"open\n"), ConfigError);
}

}
