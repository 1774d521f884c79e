#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coat/graph/dag.hpp"

namespace coat::graph {

struct LingamOptions {
    /// Edges whose standardized regression coefficient is at or below this are dropped.
    double prune_threshold = 0.1;
};

struct LingamOutput {
    Dag dag;
    std::vector<int> order;
    /// adjacency(i, j) is the coefficient of j in the regression of i (j -> i).
    Eigen::MatrixXd adjacency;
};

/// DirectLiNGAM. Columns are standardized internally; throws InvariantError on
/// rank-deficient data.
LingamOutput direct_lingam_detailed(const Eigen::MatrixXd& data, std::vector<std::string> nodes,
                                    const LingamOptions& options = {});
Dag direct_lingam(const Eigen::MatrixXd& data, std::vector<std::string> nodes, const LingamOptions& options = {});

}  // namespace coat::graph
