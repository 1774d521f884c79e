#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "coat/annotator.hpp"
#include "coat/core.hpp"
#include "coat/graph/pag.hpp"
#include "coat/llm.hpp"
#include "coat/proposer.hpp"

namespace coat::loop {

enum class CdAlgorithm { Fci, DirectLingam };
std::string to_string(CdAlgorithm a);
CdAlgorithm cd_algorithm_from_string(std::string_view s);

struct LoopConfig {
    int max_rounds = 5;
    double alpha = 0.05;
    int group_size = 3;
    /// 0 selects "factors_plus_one"; a positive value fixes the cluster count.
    int fixed_cluster_count = 0;
    std::uint64_t seed = 0;
    CdAlgorithm cd_algorithm = CdAlgorithm::Fci;
    /// Samples shown in round 1 (seeded random subset).
    int initial_subset_size = 30;
    double cmi_floor = 1e-6;
    int max_cond_size = 4;
    /// Cluster on every accepted factor instead of the MB estimate.
    bool cluster_all_factors = false;
    double redundancy_threshold = 0.95;
    int annotation_jobs = 1;

    void validate() const;
    int cluster_count(std::size_t n_factors) const;
    nlohmann::json to_json() const;
    static LoopConfig from_json(const nlohmann::json& j);
};

struct RoundRecord {
    int round = 0;
    std::vector<FactorSpec> proposed;
    /// Newly accepted this round, including replayed factors.
    std::vector<FactorSpec> accepted;
    std::vector<std::string> replayed;
    /// (factor name, reason) for filtered candidates.
    std::vector<std::pair<std::string, std::string>> rejected;
    std::vector<std::string> parse_rejections;
    graph::Pag graph;
    std::vector<std::string> mb_estimate;
    double cmi = 0.0;
    /// cmi_proxy given the previous round's MB estimate.
    double cmi_before = 0.0;
    std::vector<std::string> feedback_subset;
    int n_proposed = 0;
    int n_valid = 0;

    nlohmann::json to_json() const;
    static RoundRecord from_json(const nlohmann::json& j);
};

struct LoopResult {
    graph::Pag final_graph;
    std::vector<RoundRecord> records;
    std::vector<FactorSpec> factors;  // accepted, in acceptance order
    std::vector<std::string> mb_estimate;
    proposer::FactorPool pool;
    std::string stop_reason;
};

/// Nodes adjacent to `target`, plus spouses: w nonadjacent to the target that shares a neighbour c
/// with it where both marks at c could be arrowheads and at least one is a definite arrowhead.
std::vector<std::string> extract_mb(const graph::Pag& g, std::string_view target);

struct Feedback {
    std::vector<std::string> subset;  // sample ids
    std::string text;
    int cluster = -1;
    double entropy = 0.0;
};

/// Clusters rows on the MB columns and picks the cluster whose target is least explained.
Feedback build_feedback(const Dataset& dataset, const FactorTable& table, std::span<const std::string> mb_estimate,
                        const LoopConfig& config, std::uint64_t seed);

/// Round-1 subset: seeded random sample of indices, sorted.
std::vector<std::size_t> initial_subset(std::size_t n, int size, std::uint64_t seed);

/// Runs the configured discovery algorithm over `names` plus the target.
graph::Pag discover(const FactorTable& table, std::span<const std::string> names, const LoopConfig& config);

struct RunOptions {
    /// When set, every round is written below this directory as it completes.
    std::optional<std::filesystem::path> run_dir;
};

LoopResult run_coat(const Dataset& dataset, llm::Client& proposer_client, annotator::Backend& annotator,
                    const LoopConfig& config, const RunOptions& options = {});

/// Human-readable summary used for final/report.md.
std::string render_report(const LoopResult& result, const Dataset& dataset, const LoopConfig& config);

}  // namespace coat::loop
