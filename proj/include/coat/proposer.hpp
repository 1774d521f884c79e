#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coat/core.hpp"
#include "coat/stats.hpp"

namespace coat::proposer {

struct ProposalPrompt {
    std::string samples_section;
    std::string instructions_section;
    std::string format_section;
    std::optional<std::string> feedback_section;
    /// Ids of the samples quoted in samples_section, in prompt order.
    std::vector<std::string> shown_ids;

    /// Full prompt text: instructions, optional feedback, samples, then format.
    std::string render() const;
};

/// Groups the subset by target value (ascending) and quotes up to `group_size` seeded picks per group.
ProposalPrompt build_prompt(const Dataset& dataset, std::span<const std::size_t> subset, int group_size,
                            std::span<const FactorSpec> known_factors, const std::optional<std::string>& feedback,
                            std::uint64_t seed);

/// The fenced block a reply must contain for each factor.
std::string format_factor_block(const FactorSpec& spec);

struct ParseResult {
    std::vector<FactorSpec> factors;
    /// One message per dropped block.
    std::vector<std::string> rejections;

    /// True when the reply held no usable factor: the loop's convergence signal.
    bool no_factors() const noexcept { return factors.empty(); }
};

/// Extracts ```factor fenced blocks. Tolerates surrounding prose; drops blocks with missing or
/// unusable fields and duplicate names.
ParseResult parse_proposals(std::string_view reply, const ValueSpace& value_space, int round);

enum class PoolStatus { Active, FilteredRedundant, FilteredIndependent, Replayable };
std::string to_string(PoolStatus s);
PoolStatus pool_status_from_string(std::string_view s);

struct StatusChange {
    PoolStatus status;
    int round = 0;
    std::string reason;
};

struct PoolEntry {
    FactorSpec spec;
    PoolStatus status = PoolStatus::Active;
    std::vector<StatusChange> history;
};

/// Every factor ever proposed with its status history. Mutations are serialized by the owner.
class FactorPool {
public:
    /// Adds a new entry; throws InvariantError when the name already exists.
    void add(const FactorSpec& spec, PoolStatus status, int round, const std::string& reason);
    void set_status(std::string_view name, PoolStatus status, int round, const std::string& reason);

    const std::vector<PoolEntry>& entries() const noexcept { return entries_; }
    const PoolEntry* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::vector<FactorSpec> with_status(PoolStatus s) const;

    nlohmann::json to_json() const;
    static FactorPool from_json(const nlohmann::json& j);

private:
    std::vector<PoolEntry> entries_;
};

enum class RejectReason { Redundant, Independent };

struct Rejection {
    FactorSpec spec;
    RejectReason reason;
    std::string detail;
};

struct FilterResult {
    std::vector<FactorSpec> accepted;
    std::vector<Rejection> rejected;
    /// Candidates that passed the dependence test (redundant or not).
    int n_valid = 0;
};

/// Fisher-Z test of the named column against the target given `given`.
/// A deterministic relation is reported as dependence.
stats::CiResult dependence_test(const FactorTable& table, std::string_view name, std::span<const std::string> given,
                                double alpha);

/// Redundancy check against `existing` and earlier acceptances, then the dependence test given `mb_so_far`.
FilterResult filter_factors(std::span<const FactorSpec> candidates, const FactorTable& table,
                            std::span<const std::string> mb_so_far, std::span<const std::string> existing, double alpha,
                            double redundancy_threshold = 0.95);

/// Re-tests replayable entries; those that now depend on the target are marked active and returned.
std::vector<FactorSpec> replay_pool(FactorPool& pool, const FactorTable& table, std::span<const std::string> mb_so_far,
                                    double alpha, int round);

}  // namespace coat::proposer
