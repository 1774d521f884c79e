#pragma once

#include <optional>

#include "coat/graph/dag.hpp"
#include "coat/graph/pag.hpp"

namespace coat::graph {

struct GraphScore {
    int shd = 0;
    /// Best case over DAGs consistent with the found marks; nullopt when not computed.
    std::optional<int> sid;
    /// Worst case over the same DAGs.
    std::optional<int> sid_upper;
    double edge_recall = 0.0;
    double edge_precision = 0.0;
    double edge_f1 = 0.0;
};

struct ScoreOptions {
    /// Count an adjacency as recovered only when both end marks also match.
    bool orientation_sensitive = false;
    /// SID is skipped above this node count.
    int sid_max_nodes = 12;
    /// SID is skipped when more than 2^this orientations would need enumerating.
    int sid_max_free_edges = 16;
};

/// PAG that FCI reports for `truth` with a perfect CI oracle and no latents.
Pag project_to_pag(const Dag& truth);

/// Matches nodes by name; throws InvariantError when the node sets differ.
GraphScore score_graph(const Pag& found, const Dag& truth, const ScoreOptions& options = {});

/// Endpoint-level Hamming distance between two PAGs over the same node names.
int structural_hamming(const Pag& a, const Pag& b);

/// Structural intervention distance of `estimate` with respect to `truth` (same node order).
int structural_intervention_distance(const Dag& truth, const Dag& estimate);

/// Node-by-node harmonic mean, 0 when both inputs are 0.
double harmonic_f1(double recall, double precision);

}  // namespace coat::graph
