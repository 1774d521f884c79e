#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/graph/dsep.hpp"
#include "coat/graph/fci.hpp"
#include "coat/rng.hpp"
#include "coat/stats.hpp"
#include "helpers.hpp"

using namespace coat;
using namespace coat::bench;

namespace {

const std::filesystem::path kGraph = std::filesystem::path(COAT_DATA_DIR) / "neuropathic_graph.json";

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// standard normal quantile by bisection on the cdf
double z_of(double p) {
    double lo = -10, hi = 10;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// smallest t with (log eps / log(1-c) - t p) / sqrt(t p (1-p)) < z_delta
int bound_round_scan(double p, double c, double eps, double delta) {
    const double z = z_of(delta);
    for (int t = 1; t < 100000; ++t) {
        const double tp = t * p;
        if ((std::log(eps) / std::log(1 - c) - tp) / std::sqrt(tp * (1 - p)) < z) return t;
    }
    return -1;
}

std::map<std::string, std::string> identity_match(const GroundTruth& t) {
    std::map<std::string, std::string> m;
    for (const auto& u : t.universe()) m[u] = u;
    m["crunch"] = kOther;
    return m;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("apple data has the documented shape") {
    const auto d = gen_apple(200, 42);
    CHECK(d.dataset.size() == 200);
    for (std::size_t i = 0; i < d.dataset.size(); ++i) {
        CHECK(d.dataset.sample(i).target >= 1);
        CHECK(d.dataset.sample(i).target <= 5);
    }
    d.truth.validate();
    CHECK(d.truth.parents.size() == 3);
    CHECK(d.truth.children.size() == 1);
    CHECK(d.truth.spouses.size() == 1);
    CHECK(d.truth.disturbing == std::vector<std::string>{"freshness"});
    CHECK_THROWS(gen_apple(9, 1));
}

TEST_CASE("apple roles agree with d-separation") {
    const auto t = gen_apple(20, 1).truth;
    const auto mb = t.mb();
    for (const auto& m : mb)
        if (m != "juiciness") CHECK_FALSE(graph::d_separated(t.dag, m, t.target, {}));
    CHECK(graph::d_separated(t.dag, "freshness", t.target, mb));
    const std::vector<std::string> sweet{"sweetness"};
    CHECK(graph::d_separated(t.dag, "juiciness", t.target, sweet));
    const std::vector<std::string> with_child{"sweetness", "market_potential"};
    CHECK_FALSE(graph::d_separated(t.dag, "juiciness", t.target, with_child));
}

TEST_CASE("FCI cannot orient the sweetness-juiciness edge") {
    const auto t = gen_apple(20, 1).truth;
    const auto nodes = t.dag.nodes();
    const auto g = graph::fci(graph::dsep_ci(t.dag, nodes), nodes);
    const int s = g.require("sweetness"), j = g.require("juiciness");
    REQUIRE(g.adjacent(s, j));
    CHECK(g.mark(j, s) == graph::Mark::Circle);
    CHECK(g.mark(s, j) == graph::Mark::Circle);
}

TEST_CASE("apple at n=2000 shows each role under Fisher-Z") {
    const auto d = gen_apple(2000, 3);
    const auto table = truth_table(d.dataset, d.truth);
    const std::vector<std::string> names{"size", "smell", "sweetness", "juiciness", "market_potential", "freshness"};
    const auto x = table.numeric_with_target(names);
    const int y = static_cast<int>(names.size());
    for (int p = 0; p < 3; ++p) CHECK_FALSE(stats::fisher_z_test(x, p, y, {}, 0.05).independent);
    const std::vector<int> sweet{2}, sweet_child{2, 4};
    CHECK(stats::fisher_z_test(x, 3, y, sweet, 0.05).independent);
    CHECK_FALSE(stats::fisher_z_test(x, 3, y, sweet_child, 0.05).independent);
}

TEST_CASE("generators are deterministic per seed") {
    const auto a = gen_apple(50, 9), b = gen_apple(50, 9), c = gen_apple(50, 10);
    CHECK(serialize_dataset(a.dataset) == serialize_dataset(b.dataset));
    CHECK(a.truth.to_json() == b.truth.to_json());
    CHECK(serialize_dataset(a.dataset) != serialize_dataset(c.dataset));
    const auto n1 = gen_neuropathic(20, 100, 4, kGraph), n2 = gen_neuropathic(20, 100, 4, kGraph);
    CHECK(serialize_dataset(n1.dataset) == serialize_dataset(n2.dataset));
    CHECK(serialize_factor_table_csv(n1.tabular) == serialize_factor_table_csv(n2.tabular));
}

TEST_CASE("ground truth files round-trip") {
    const auto t = gen_apple(30, 2).truth;
    testing::TempDir dir;
    save_ground_truth(t, dir / "truth.json");
    CHECK(load_ground_truth(dir / "truth.json").to_json() == t.to_json());
    auto bad = t;
    bad.disturbing.push_back("juiciness");
    CHECK_THROWS_AS(bad.validate(), InvariantError);
}

TEST_CASE("neuropathic notes mention symptoms only") {
    const auto d = gen_neuropathic(100, 1000, 11, kGraph);
    CHECK(d.dataset.size() == 100);
    CHECK(d.tabular.rows() == 1000);
    const auto labels = neuropathic_labels(kGraph);
    const auto levels = neuropathic_levels(kGraph);
    for (std::size_t i = 0; i < d.dataset.size(); ++i) {
        const auto text = lower(d.dataset.sample(i).text);
        for (const auto& [name, level] : levels) {
            if (level == "symptom") continue;
            CHECK(text.find(lower(name)) == std::string::npos);
            CHECK(text.find(lower(labels.at(name))) == std::string::npos);
        }
    }
    d.truth.validate();
}

TEST_CASE("neuropathic root marginals match their priors") {
    const auto d = gen_neuropathic(10, 1000, 12, kGraph);
    const auto graph = nlohmann::json::parse(std::ifstream(kGraph));
    const auto target_col = d.tabular.target();
    for (const auto& v : graph["variables"]) {
        if (!v.contains("prior")) continue;
        const double p = v["prior"];
        const std::string name = v["name"];
        const auto& col = name == graph["target"] ? target_col : d.tabular.column(name);
        double mean = 0;
        for (int x : col) mean += x;
        mean /= static_cast<double>(col.size());
        CHECK_MESSAGE(std::abs(mean - p) <= 3 * std::sqrt(p * (1 - p) / 1000.0), name);
    }
    CHECK_THROWS(gen_neuropathic(10, 100, 1, "/nonexistent/graph.json"));
}

TEST_CASE("factor scores reproduce the averaged table row") {
    const auto s = factor_score_from_counts(3.67, 0, 0, 5);
    CHECK(s.recall == doctest::Approx(0.73).epsilon(0.01));
    CHECK(s.precision == doctest::Approx(1.0));
    // runs found 4, 4 and 3 blanket members
    std::vector<FactorScore> runs{factor_score_from_counts(4, 0, 0, 5), factor_score_from_counts(4, 0, 0, 5),
                                  factor_score_from_counts(3, 0, 0, 5)};
    const auto avg = average_scores(runs);
    CHECK(std::round(avg.mb_count * 100) / 100 == doctest::Approx(3.67));
    CHECK(std::round(avg.recall * 100) / 100 == doctest::Approx(0.73));
    CHECK(std::round(avg.precision * 100) / 100 == doctest::Approx(1.00));
    CHECK(std::round(avg.f1 * 100) / 100 == doctest::Approx(0.84));

    const auto mixed = factor_score_from_counts(3, 1, 1, 5);
    CHECK(mixed.precision == doctest::Approx(0.6));
    CHECK(mixed.recall == doctest::Approx(0.6));
    CHECK(mixed.f1 == doctest::Approx(0.6));
}

TEST_CASE("factor score identities hold on random counts") {
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
        const double mb = rng.integer(0, 5), nmb = rng.integer(0, 4), ot = rng.integer(0, 4);
        const auto s = factor_score_from_counts(mb, nmb, ot, 5);
        CHECK(s.recall == doctest::Approx(mb / 5));
        const double prec = mb + nmb + ot > 0 ? mb / (mb + nmb + ot) : 0.0;
        CHECK(s.precision == doctest::Approx(prec));
        CHECK(s.f1 == doctest::Approx(prec + s.recall > 0 ? 2 * prec * s.recall / (prec + s.recall) : 0.0));
    }
}

TEST_CASE("score_factors classifies mapped names") {
    const auto t = gen_apple(20, 1).truth;
    const auto m = identity_match(t);
    const auto mb = t.mb();
    CHECK(score_factors(mb, t, m).f1 == doctest::Approx(1.0));
    const std::vector<std::string> some{"size", "smell", "sweetness", "freshness", "crunch"};
    const auto s = score_factors(some, t, m);
    CHECK(s.mb_count == 3);
    CHECK(s.nmb_count == 1);
    CHECK(s.ot_count == 1);
    const std::vector<std::string> unmapped{"colour"};
    CHECK_THROWS_AS(score_factors(unmapped, t, m), InvariantError);
}

TEST_CASE("ancestor scores") {
    const auto t = gen_apple(20, 1).truth;
    const auto m = identity_match(t);
    const auto s = score_ancestors(t.parents, t, m);
    CHECK(s.pa == 3);
    CHECK(s.an == 3);
    CHECK(s.ot == 0);
    CHECK(s.f1_text() != "\u2014");
    CHECK(score_ancestors({}, t, m).f1_text() == "\u2014");

    GroundTruth chain;
    chain.dag = graph::Dag({"a", "b", "y"}, {{"a", "b"}, {"b", "y"}});
    chain.target = "y";
    chain.parents = {"b"};
    chain.factors = {testing::ternary("a"), testing::ternary("b")};
    const std::vector<std::string> just_a{"a"};
    const auto c = score_ancestors(just_a, chain, {{"a", "a"}});
    CHECK(c.pa == 0);
    CHECK(c.an == 1);
    CHECK(c.accuracy == doctest::Approx(0.5));
    CHECK(*c.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("ability scores") {
    auto rec = [](int proposed, int valid, double before, double after, bool accepted) {
        loop::RoundRecord r;
        r.n_proposed = proposed;
        r.n_valid = valid;
        r.cmi_before = before;
        r.cmi = after;
        if (accepted) r.accepted = {testing::ternary("f")};
        return r;
    };
    std::vector<loop::RoundRecord> halves{rec(3, 3, 1.0, 0.5, true), rec(2, 2, 0.5, 0.25, true)};
    auto a = ability_scores(halves);
    CHECK(a.perception == doctest::Approx(1.0));
    CHECK(a.capacity == doctest::Approx(0.5));

    std::vector<loop::RoundRecord> none{rec(3, 0, 1.0, 1.0, false), rec(0, 0, 1.0, 1.0, false)};
    a = ability_scores(none);
    CHECK(a.perception == 0);
    CHECK(a.capacity_undefined);
    CHECK(a.capacity == 0);

    std::vector<loop::RoundRecord> upticks{rec(2, 2, 0.6, 0.45, true), rec(2, 1, 0.45, 0.28, true),
                                          rec(1, 1, 0.28, 0.29, true)};
    a = ability_scores(upticks);
    CHECK(a.capacity == doctest::Approx((0.25 + (1 - 0.28 / 0.45) + 0.0) / 3));
    CHECK(a.cmi == std::vector<double>{0.45, 0.28, 0.29});
    CHECK_THROWS(ability_scores({}));
}

TEST_CASE("the round bound matches a direct scan of the inequality") {
    for (double p : {0.3, 0.4, 0.6, 0.9})
        for (double c : {0.1, 0.2, 0.4})
            for (double eps : {0.01, 0.05, 0.2}) {
                TheoryParams q;
                q.p = p;
                q.c_psi = c;
                q.epsilon = eps;
                q.delta = 0.1;
                CHECK(bound_round(q) == bound_round_scan(p, c, eps, 0.1));
            }
    TheoryParams q;
    q.p = 1.0;
    q.c_psi = 0.5;
    q.epsilon = 0.1;
    CHECK(bound_round(q) == 4);
}

TEST_CASE("geometric decay with certain success") {
    TheoryParams q;
    q.p = 1.0;
    q.c_psi = 0.5;
    q.epsilon = 0.1;
    q.t = 3;
    CHECK(simulate_theory(q, 200, 1).success_rate == 0.0);
    q.t = 4;
    CHECK(simulate_theory(q, 200, 1).success_rate == 1.0);
    q.t = 1;
    q.p = 0.3;
    q.epsilon = 0.99;
    CHECK(simulate_theory(q, 10000, 1).success_rate == doctest::Approx(0.3).epsilon(0.1));
    CHECK_THROWS(simulate_theory(q, 50, 1));
    q.p = 0;
    CHECK_THROWS(simulate_theory(q, 100, 1));
}

TEST_CASE("success at the bound round meets the guarantee") {
    TheoryParams q;
    q.p = 0.6;
    q.c_psi = 0.2;
    q.epsilon = 0.05;
    q.delta = 0.1;
    q.t = bound_round(q);
    CHECK(simulate_theory(q, 10000, 5).success_rate >= 1 - q.delta - 0.03);
}

TEST_CASE("success is monotone in rounds and contraction") {
    for (double c : {0.1, 0.2, 0.4}) {
        double prev = -1;
        for (int t = 1; t <= 40; t += 3) {
            TheoryParams q;
            q.p = 0.5;
            q.c_psi = c;
            q.t = t;
            const double s = simulate_theory(q, 2000, 3).success_rate;
            CHECK(s >= prev);
            prev = s;
        }
    }
    for (int t : {5, 15, 30}) {
        double prev = -1;
        for (double c : {0.1, 0.2, 0.4, 0.6}) {
            TheoryParams q;
            q.p = 0.5;
            q.c_psi = c;
            q.t = t;
            const double s = simulate_theory(q, 2000, 3).success_rate;
            CHECK(s >= prev);
            prev = s;
        }
    }
}

}
