#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace coat::graph {

/// Directed acyclic graph over named nodes. Edges are (parent, child) index pairs.
class Dag {
public:
    Dag() = default;
    explicit Dag(std::vector<std::string> nodes);
    Dag(std::vector<std::string> nodes, const std::vector<std::pair<std::string, std::string>>& edges);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    const std::string& name(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
    std::optional<int> index_of(std::string_view name) const;
    /// Like index_of but throws on unknown names.
    int require(std::string_view name) const;

    /// Adds parent -> child. Throws on self-loops or if the edge would close a cycle.
    void add_edge(int parent, int child);
    void add_edge(std::string_view parent, std::string_view child) { add_edge(require(parent), require(child)); }
    bool has_edge(int parent, int child) const;
    bool adjacent(int a, int b) const { return has_edge(a, b) || has_edge(b, a); }

    const std::vector<int>& parents(int v) const { return parents_.at(static_cast<std::size_t>(v)); }
    const std::vector<int>& children(int v) const { return children_.at(static_cast<std::size_t>(v)); }
    std::vector<std::pair<int, int>> edges() const;
    std::size_t edge_count() const;

    std::vector<int> topological_order() const;
    /// Ancestors of v, excluding v.
    std::vector<bool> ancestors(int v) const;
    /// Descendants of v, excluding v.
    std::vector<bool> descendants(int v) const;
    bool is_ancestor(int a, int b) const;

    /// Parents, children and co-parents of v.
    std::vector<int> markov_blanket(int v) const;

    bool operator==(const Dag&) const = default;

private:
    std::vector<std::string> nodes_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
};

/// Random DAG: node count drawn from [min_nodes, max_nodes], random causal order,
/// each forward pair joined with probability `edge_prob`. Nodes are named "v0".."v{n-1}".
Dag random_dag(std::uint64_t seed, int min_nodes, int max_nodes, double edge_prob);

}  // namespace coat::graph
