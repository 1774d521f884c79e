#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coat/core.hpp"
#include "coat/graph/dag.hpp"
#include "coat/loop.hpp"

namespace coat::bench {

/// Generator-side truth: structure, roles, mechanisms and the latent factor levels per sample.
struct GroundTruth {
    graph::Dag dag;
    std::string target;
    std::vector<std::string> parents;
    std::vector<std::string> children;
    std::vector<std::string> spouses;
    std::vector<std::string> disturbing;
    /// Specs of every non-target variable, usable as ground-truth factors.
    std::vector<FactorSpec> factors;
    nlohmann::json mechanisms = nlohmann::json::object();
    /// factor name -> sample id -> level.
    std::map<std::string, std::map<std::string, int>> latent_values;

    std::vector<std::string> mb() const;
    /// Candidate variables other than the target.
    std::vector<std::string> universe() const;
    const FactorSpec& factor(std::string_view name) const;
    /// Roles must match the DAG's Markov blanket; disturbing factors must lie outside it.
    void validate() const;

    nlohmann::json to_json() const;
    static GroundTruth from_json(const nlohmann::json& j);
};

void save_ground_truth(const GroundTruth& t, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

/// Oracle annotations of `names` (all truth factors when empty), aligned to `dataset`.
FactorTable truth_table(const Dataset& dataset, const GroundTruth& truth, std::span<const std::string> names = {});

struct AppleData {
    Dataset dataset;
    GroundTruth truth;
};

/// AppleGastronome: size, smell, sweetness -> score -> market_potential <- juiciness <- sweetness,
/// plus freshness driven by smell.
AppleData gen_apple(int n, std::uint64_t seed);

struct NeuroData {
    Dataset dataset;
    FactorTable tabular;
    GroundTruth truth;
};

/// Three-level binary DAG from `graph_file`; notes mention symptom-level variables only.
NeuroData gen_neuropathic(int n_text, int n_tabular, std::uint64_t seed, const std::filesystem::path& graph_file);

/// Display labels of every variable in a neuropathic graph file (for audits).
std::map<std::string, std::string> neuropathic_labels(const std::filesystem::path& graph_file);
/// Level of each variable ("symptom", "radiculopathy", "pathophysiology").
std::map<std::string, std::string> neuropathic_levels(const std::filesystem::path& graph_file);

inline constexpr const char* kOther = "other";

struct FactorScore {
    double mb_count = 0;
    double nmb_count = 0;
    double ot_count = 0;
    double recall = 0;
    double precision = 0;
    double f1 = 0;
};

/// Scores from counts with the defining identities.
FactorScore factor_score_from_counts(double mb, double nmb, double ot, std::size_t mb_size);

/// `match` maps each proposed factor to a truth variable or "other".
FactorScore score_factors(std::span<const std::string> proposed, const GroundTruth& truth,
                          const std::map<std::string, std::string>& match);

/// Mean of per-run scores (counts and ratios averaged separately).
FactorScore average_scores(std::span<const FactorScore> runs);

struct AncestorScore {
    int pa = 0;
    int an = 0;
    int ot = 0;
    double accuracy = 0;
    /// nullopt when nothing was proposed; rendered as a dash.
    std::optional<double> f1;

    std::string f1_text() const;
};

AncestorScore score_ancestors(std::span<const std::string> proposed, const GroundTruth& truth,
                              const std::map<std::string, std::string>& match);

struct AbilityScore {
    double perception = 0;
    double capacity = 0;
    /// Set when no round accepted a factor, so capacity carries no information.
    bool capacity_undefined = false;
    std::vector<double> cmi;
};

AbilityScore ability_scores(std::span<const loop::RoundRecord> records);

struct TheoryParams {
    double p = 0.5;
    double c_psi = 0.2;
    double epsilon = 0.05;
    double delta = 0.1;
    int t = 1;

    void validate() const;
};

/// Smallest integer t strictly satisfying the round bound for (p, c_psi, epsilon, delta).
int bound_round(const TheoryParams& params);

/// Right-hand side of the convergence-rate bound on log(I_t / I_0) after t rounds.
double rate_bound_log(const TheoryParams& params, int t);

struct TheoryResult {
    double success_rate = 0;
    int bound_round = 0;
    /// Empirical (1 - delta)-quantile of the final log-ratio.
    double log_ratio_quantile = 0;
    double rate_bound = 0;
};

/// Simulates params.t rounds per trial (success with prob p multiplies the ratio by 1 - c_psi).
TheoryResult simulate_theory(const TheoryParams& params, int trials, std::uint64_t seed);

}  // namespace coat::bench
