#include <algorithm>
#include <cmath>
#include <set>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/graph/score.hpp"
#include "coat/rng.hpp"
#include "coat/stats.hpp"

namespace coat::bench {

FactorScore factor_score_from_counts(double mb, double nmb, double ot, std::size_t mb_size) {
    if (mb < 0 || nmb < 0 || ot < 0) throw InvariantError("factor counts must be non-negative");
    if (mb_size == 0) throw InvariantError("ground-truth Markov blanket is empty");
    FactorScore s{mb, nmb, ot, 0, 0, 0};
    s.recall = mb / static_cast<double>(mb_size);
    const double total = mb + nmb + ot;
    s.precision = total > 0 ? mb / total : 0.0;
    s.f1 = graph::harmonic_f1(s.recall, s.precision);
    return s;
}

namespace {
const std::string& mapped(const std::map<std::string, std::string>& match, const std::string& name) {
    const auto key = normalize_factor_name(name);
    for (const auto& [k, v] : match)
        if (normalize_factor_name(k) == key) return v;
    throw InvariantError("proposed factor \"" + name + "\" is not in the name mapping");
}
}  // namespace

FactorScore score_factors(std::span<const std::string> proposed, const GroundTruth& truth,
                          const std::map<std::string, std::string>& match) {
    const auto mb = truth.mb();
    const auto universe = truth.universe();
    double n_mb = 0, n_nmb = 0, n_ot = 0;
    for (const auto& p : proposed) {
        const auto& m = mapped(match, p);
        if (m == kOther) {
            ++n_ot;
        } else if (std::find(mb.begin(), mb.end(), m) != mb.end()) {
            ++n_mb;
        } else if (std::find(universe.begin(), universe.end(), m) != universe.end()) {
            ++n_nmb;
        } else {
            throw InvariantError("factor \"" + p + "\" maps to unknown variable \"" + m + "\"");
        }
    }
    return factor_score_from_counts(n_mb, n_nmb, n_ot, mb.size());
}

FactorScore average_scores(std::span<const FactorScore> runs) {
    if (runs.empty()) throw InvariantError("no runs to average");
    FactorScore s;
    for (const auto& r : runs) {
        s.mb_count += r.mb_count;
        s.nmb_count += r.nmb_count;
        s.ot_count += r.ot_count;
        s.recall += r.recall;
        s.precision += r.precision;
        s.f1 += r.f1;
    }
    const auto n = static_cast<double>(runs.size());
    s.mb_count /= n;
    s.nmb_count /= n;
    s.ot_count /= n;
    s.recall /= n;
    s.precision /= n;
    s.f1 /= n;
    return s;
}

std::string AncestorScore::f1_text() const {
    if (!f1) return "\u2014";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *f1);
    return buf;
}

AncestorScore score_ancestors(std::span<const std::string> proposed, const GroundTruth& truth,
                              const std::map<std::string, std::string>& match) {
    const auto& dag = truth.dag;
    const int y = dag.require(truth.target);
    const auto anc = dag.ancestors(y);
    const auto universe = truth.universe();
    std::size_t n_anc = 0;
    for (const auto& u : universe) n_anc += anc[static_cast<std::size_t>(dag.require(u))];

    AncestorScore s;
    std::set<std::string> hit;
    for (const auto& p : proposed) {
        const auto& m = mapped(match, p);
        const auto idx = m == kOther ? std::nullopt : dag.index_of(m);
        if (idx && anc[static_cast<std::size_t>(*idx)]) {
            ++s.an;
            hit.insert(m);
            if (dag.has_edge(*idx, y)) ++s.pa;
        } else {
            ++s.ot;
        }
    }
    // ancestors are the positive class over the candidate universe
    const double tp = s.an;
    const double fp = s.ot;
    const double fn = static_cast<double>(n_anc) - static_cast<double>(hit.size());
    const double tn = std::max(0.0, static_cast<double>(universe.size() - n_anc) - fp);
    const double total = tp + fp + fn + tn;
    s.accuracy = total > 0 ? (tp + tn) / total : 0.0;
    if (!proposed.empty()) {
        const double precision = tp / (tp + fp);
        const double recall = n_anc ? static_cast<double>(hit.size()) / static_cast<double>(n_anc) : 0.0;
        s.f1 = graph::harmonic_f1(recall, precision);
    }
    return s;
}

AbilityScore ability_scores(std::span<const loop::RoundRecord> records) {
    if (records.empty()) throw InvariantError("ability_scores needs at least one round");
    AbilityScore a;
    double perception = 0, capacity = 0;
    int capacity_rounds = 0;
    for (const auto& r : records) {
        perception += r.n_proposed > 0 ? static_cast<double>(r.n_valid) / r.n_proposed : 0.0;
        a.cmi.push_back(r.cmi);
        if (r.accepted.empty()) continue;
        const double drop = r.cmi_before > 0 ? 1.0 - r.cmi / r.cmi_before : 0.0;
        capacity += std::clamp(drop, 0.0, 1.0);
        ++capacity_rounds;
    }
    a.perception = perception / static_cast<double>(records.size());
    if (capacity_rounds == 0) {
        a.capacity_undefined = true;
    } else {
        a.capacity = capacity / capacity_rounds;
    }
    return a;
}

void TheoryParams::validate() const {
    if (!(p > 0 && p <= 1)) throw InvariantError("p must lie in (0, 1]");
    if (!(c_psi > 0 && c_psi < 1)) throw InvariantError("c_psi must lie in (0, 1)");
    if (!(epsilon > 0 && epsilon < 1)) throw InvariantError("epsilon must lie in (0, 1)");
    if (!(delta > 0 && delta < 0.5)) throw InvariantError("delta must lie in (0, 1/2)");
    if (t < 0) throw InvariantError("t must be >= 0");
}

int bound_round(const TheoryParams& q) {
    q.validate();
    const double log_eps = std::log(q.epsilon);
    const double log_keep = std::log(1.0 - q.c_psi);
    if (q.p >= 1.0) {
        // no variance: t * log(1 - c) < log(eps)
        return static_cast<int>(std::floor(log_eps / log_keep)) + 1;
    }
    const double z = stats::normal_quantile(q.delta);
    const double a = std::abs(z) * std::sqrt(1 - q.p) / (2 * std::sqrt(q.p));
    const double inner = 1 + 4 * log_eps / (z * z * (1 - q.p) * log_keep);
    const double root = a * (1 + std::sqrt(inner));
    int t = std::max(1, static_cast<int>(std::floor(root * root)));
    while (std::sqrt(static_cast<double>(t)) <= root) ++t;
    while (t > 1 && std::sqrt(static_cast<double>(t - 1)) > root) --t;
    return t;
}

double rate_bound_log(const TheoryParams& q, int t) {
    const double z = stats::normal_quantile(q.delta);
    const double tp = t * q.p;
    return (tp + z * std::sqrt(tp * (1 - q.p))) * std::log(1 - q.c_psi);
}

TheoryResult simulate_theory(const TheoryParams& params, int trials, std::uint64_t seed) {
    params.validate();
    if (trials < 100) throw InvariantError("simulate_theory needs at least 100 trials");
    TheoryResult r;
    r.bound_round = bound_round(params);
    const double log_keep = std::log(1 - params.c_psi);
    const double log_eps = std::log(params.epsilon);
    std::vector<double> log_ratio(static_cast<std::size_t>(trials));
    int success = 0;
    for (int k = 0; k < trials; ++k) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(k)));
        int hits = 0;
        for (int round = 0; round < params.t; ++round) hits += rng.bernoulli(params.p);
        log_ratio[static_cast<std::size_t>(k)] = hits * log_keep;
        success += hits * log_keep < log_eps;
    }
    r.success_rate = static_cast<double>(success) / trials;
    std::sort(log_ratio.begin(), log_ratio.end());
    // order statistic at ceil((1 - delta) * trials)
    const auto idx = static_cast<std::size_t>(
        std::clamp<long>(static_cast<long>(std::ceil((1 - params.delta) * trials)) - 1, 0, trials - 1));
    r.log_ratio_quantile = log_ratio[idx];
    r.rate_bound = rate_bound_log(params, params.t);
    return r;
}

}  // namespace coat::bench
