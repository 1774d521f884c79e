#include <doctest.h>

#include <fstream>
#include <sstream>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/graph/fci.hpp"
#include "coat/loop.hpp"
#include "helpers.hpp"

using namespace coat;
using namespace coat::loop;
using graph::Mark;

namespace {

std::shared_ptr<llm::Client> apple_client() {
    auto p = std::make_shared<llm::ScriptedProvider>(
        llm::ScriptedProvider::from_file(std::filesystem::path(COAT_DATA_DIR) / "apple" / "scenario.json"));
    return std::make_shared<llm::Client>(p);
}

std::shared_ptr<llm::Client> refusing_client() {
    std::vector<llm::ScenarioEntry> e{{std::nullopt, std::nullopt, "I cannot propose new factors."}};
    return std::make_shared<llm::Client>(std::make_shared<llm::ScriptedProvider>(std::move(e)));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

TEST_SUITE("loop") {

TEST_CASE("the blanket read off the apple oracle PAG is the true blanket") {
    const auto d = bench::gen_apple(50, 1);
    const auto nodes = d.truth.dag.nodes();
    const auto pag = graph::fci(graph::dsep_ci(d.truth.dag, nodes), nodes);
    CHECK(sorted(extract_mb(pag, "score")) == sorted(d.truth.mb()));
    CHECK(extract_mb(pag, "score").size() == 5);
}

TEST_CASE("spouses need an arrowhead at the shared child") {
    graph::Pag g({"y", "c", "w"});
    g.set_edge(0, 1, Mark::Circle, Mark::Arrow);
    g.set_edge(2, 1, Mark::Circle, Mark::Arrow);
    CHECK(sorted(extract_mb(g, "y")) == std::vector<std::string>{"c", "w"});
    g.set_edge(2, 1, Mark::Circle, Mark::Circle);
    CHECK(sorted(extract_mb(g, "y")) == std::vector<std::string>{"c", "w"});
    g.set_edge(0, 1, Mark::Circle, Mark::Circle);
    CHECK(extract_mb(g, "y") == std::vector<std::string>{"c"});
    g.set_edge(2, 1, Mark::Circle, Mark::Tail);
    g.set_edge(0, 1, Mark::Circle, Mark::Arrow);
    CHECK(extract_mb(g, "y") == std::vector<std::string>{"c"});
    CHECK(extract_mb(graph::Pag({"y"}), "y").empty());
}

TEST_CASE("config validation and JSON round-trip") {
    LoopConfig c;
    c.seed = 11;
    c.fixed_cluster_count = 4;
    c.cd_algorithm = CdAlgorithm::DirectLingam;
    CHECK(LoopConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(c.cluster_count(7) == 4);
    CHECK(LoopConfig{}.cluster_count(3) == 4);
    CHECK(LoopConfig::from_json(LoopConfig{}.to_json()).to_json()["cluster_count_rule"] == "factors_plus_one");
    for (auto bad : {nlohmann::json{{"alpha", 1.5}}, nlohmann::json{{"max_rounds", 0}}, nlohmann::json{{"group_size", 0}},
                     nlohmann::json{{"cd_algorithm", "ges"}}, nlohmann::json{{"cluster_count_rule", "many"}}})
        CHECK_THROWS_AS(LoopConfig::from_json(bad).validate(), ConfigError);
    CHECK(cd_algorithm_from_string("lingam") == CdAlgorithm::DirectLingam);
}

TEST_CASE("the round-1 subset is seeded, sorted and bounded") {
    const auto a = initial_subset(100, 30, 4);
    CHECK(a == initial_subset(100, 30, 4));
    CHECK(a.size() == 30);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    CHECK(initial_subset(10, 30, 4).size() == 10);
}

TEST_CASE("feedback ties go to the larger cluster") {
    const auto t = testing::table_of({"a"}, {{-1, -1, -1, -1, 1, 1}}, {1, 2, 1, 2, 1, 2});
    std::vector<RawSample> s;
    for (std::size_t i = 0; i < t.rows(); ++i) s.push_back({t.sample_ids()[i], "t", t.target()[i]});
    const Dataset d(s, "y", {1, 2});
    const std::vector<std::string> mb{"a"};
    const auto fb = build_feedback(d, t, mb, LoopConfig{}, 3);
    CHECK(fb.subset == std::vector<std::string>{"s0", "s1", "s2", "s3"});
    CHECK(fb.text.find("- a:") != std::string::npos);

    const auto random = build_feedback(d, t, {}, LoopConfig{}, 3);
    CHECK(random.cluster == -1);
    CHECK(random.subset.size() == 6);
}

TEST_CASE("feedback picks the least explained cluster") {
    // a = 1 leaves y undetermined, a = -1 fixes it
    const auto t = testing::table_of({"a"}, {{-1, -1, -1, -1, 1, 1, 1}}, {1, 1, 1, 1, 1, 2, 3});
    std::vector<RawSample> s;
    for (std::size_t i = 0; i < t.rows(); ++i) s.push_back({t.sample_ids()[i], "t", t.target()[i]});
    const Dataset d(s, "y", {1, 2, 3});
    const std::vector<std::string> mb{"a"};
    const auto fb = build_feedback(d, t, mb, LoopConfig{}, 0);
    CHECK(fb.subset == std::vector<std::string>{"s4", "s5", "s6"});
    CHECK(fb.entropy == doctest::Approx(std::log(3.0)));
}

TEST_CASE("records survive a JSON round-trip") {
    RoundRecord r;
    r.round = 2;
    r.proposed = {testing::ternary("a"), testing::ternary("b")};
    r.accepted = {testing::ternary("a")};
    r.rejected = {{"b", "independent of y"}};
    r.graph = graph::Pag({"a", "y"});
    r.graph.set_edge(0, 1, Mark::Circle, Mark::Arrow);
    r.mb_estimate = {"a"};
    r.cmi = 0.25;
    r.cmi_before = 0.5;
    r.feedback_subset = {"s1"};
    r.n_proposed = 2;
    r.n_valid = 2;
    CHECK(RoundRecord::from_json(r.to_json()).to_json() == r.to_json());
}

TEST_CASE("a round-1 refusal stops with the target alone") {
    const auto d = bench::gen_apple(40, 2);
    annotator::OracleBackend oracle(d.truth.latent_values);
    auto client = refusing_client();
    const auto res = run_coat(d.dataset, *client, oracle, LoopConfig{});
    CHECK(res.records.size() == 1);
    CHECK(res.final_graph == graph::Pag({"score"}));
    CHECK(res.mb_estimate.empty());
    CHECK(res.stop_reason.find("no new factors") != std::string::npos);
}

TEST_CASE("max_rounds bounds the loop") {
    const auto d = bench::gen_apple(120, 7);
    annotator::OracleBackend oracle(d.truth.latent_values);
    auto client = apple_client();
    LoopConfig c;
    c.max_rounds = 1;
    const auto res = run_coat(d.dataset, *client, oracle, c);
    CHECK(res.records.size() == 1);
    CHECK(res.stop_reason == "reached max_rounds");
    CHECK(res.factors.size() == 3);
}

TEST_CASE("the scripted apple run finds the blanket and rejects freshness") {
    const auto d = bench::gen_apple(200, 7);
    annotator::OracleBackend oracle(d.truth.latent_values);
    auto client = apple_client();
    LoopConfig c;
    c.seed = 7;
    testing::TempDir dir;
    const auto res = run_coat(d.dataset, *client, oracle, c, RunOptions{dir / "run"});
    CHECK(sorted(res.mb_estimate) == sorted(d.truth.mb()));
    REQUIRE(res.records.size() >= 3);
    CHECK(res.records[0].accepted.size() == 3);
    const auto& r2 = res.records[1];
    CHECK(std::any_of(r2.rejected.begin(), r2.rejected.end(), [](const auto& p) { return p.first == "freshness"; }));
    CHECK(res.pool.find("freshness")->status != proposer::PoolStatus::Active);
    // cmi never increases while factors are being accepted
    for (const auto& r : res.records)
        if (!r.accepted.empty()) CHECK(r.cmi <= r.cmi_before + 1e-12);

    for (const auto* f : {"config.json", "rounds/1/prompt.txt", "rounds/1/reply.txt", "rounds/1/factors.json",
                          "rounds/1/table.csv", "rounds/1/graph.json", "rounds/1/graph.dot", "rounds/1/record.json",
                          "final/graph.json", "final/graph.dot", "final/pool.json", "final/report.md"})
        CHECK_MESSAGE(std::filesystem::exists(dir / "run" / f), f);
    CHECK(slurp(dir / "run" / "final" / "report.md").find("market_potential") != std::string::npos);

    // a second run writes identical bytes
    auto client2 = apple_client();
    run_coat(d.dataset, *client2, oracle, c, RunOptions{dir / "again"});
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "run"))
        if (e.is_regular_file())
            CHECK(slurp(e.path()) == slurp(dir / "again" / std::filesystem::relative(e.path(), dir / "run")));
}

TEST_CASE("discovery handles both algorithms and an empty factor list") {
    const auto d = bench::gen_apple(200, 3);
    const auto t = bench::truth_table(d.dataset, d.truth);
    const std::vector<std::string> names{"size", "smell", "sweetness"};
    LoopConfig c;
    auto g = discover(t, names, c);
    CHECK(g.nodes().back() == "score");
    c.cd_algorithm = CdAlgorithm::DirectLingam;
    g = discover(t, names, c);
    for (const auto& e : g.edges()) {
        const bool oriented = (e.mark_at_a == Mark::Tail && e.mark_at_b == Mark::Arrow) ||
                              (e.mark_at_a == Mark::Arrow && e.mark_at_b == Mark::Tail);
        CHECK(oriented);
    }
    CHECK(discover(t, {}, c) == graph::Pag({"score"}));
}

}
