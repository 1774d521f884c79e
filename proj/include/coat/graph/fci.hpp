#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coat/errors.hpp"
#include "coat/graph/dag.hpp"
#include "coat/graph/pag.hpp"
#include "coat/stats.hpp"

namespace coat::graph {

/// Conditional-independence callable over node indices. Must be symmetric in (x, y)
/// and deterministic for fixed inputs.
using CiTest = std::function<stats::CiResult(int x, int y, std::span<const int> s)>;

struct FciOptions {
    double alpha = 0.05;
    /// Largest conditioning set tried in the adjacency and possible-d-sep searches.
    int max_cond_size = 4;
    /// Longest path followed when building possible-d-sep sets; -1 is unbounded.
    int depth_limit = -1;
    bool possible_dsep = true;
    /// Also apply R8-R10 (tail rules). R5-R7 are never applied.
    bool complete_rules = false;
};

/// Separating sets keyed by (min index, max index).
using SepsetMap = std::map<std::pair<int, int>, std::vector<int>>;

struct FciOutput {
    Pag pag;
    SepsetMap sepsets;
    std::size_t ci_calls = 0;
};

/// Raised when the CI callable throws; names the tested triple.
class FciError : public Error {
public:
    FciError(const std::string& what, std::string x, std::string y, std::vector<std::string> s)
        : Error(what), x_(std::move(x)), y_(std::move(y)), s_(std::move(s)) {}
    const std::string& x() const noexcept { return x_; }
    const std::string& y() const noexcept { return y_; }
    const std::vector<std::string>& conditioning() const noexcept { return s_; }

private:
    std::string x_, y_;
    std::vector<std::string> s_;
};

/// FCI: stable level-wise adjacency search, possible-d-sep pruning, collider orientation
/// from separating sets, then R1-R4 (and optionally R8-R10) to a fixpoint. All iteration
/// follows lexicographic node-name order, so output depends only on the CI answers.
FciOutput fci_detailed(const CiTest& ci, std::vector<std::string> nodes, const FciOptions& options = {});
Pag fci(const CiTest& ci, std::vector<std::string> nodes, const FciOptions& options = {});

/// Applies the orientation phase (colliders + rules) to a skeleton with known separating sets.
/// Existing marks are reset to circles first.
void orient_pag(Pag& g, const SepsetMap& sepsets, bool complete_rules);

/// Fisher-Z CI over the columns of `data`. Deterministic relations count as dependence;
/// `deterministic_hits`, if given, counts how often that happened.
CiTest fisher_z_ci(Eigen::MatrixXd data, double alpha, std::shared_ptr<std::size_t> deterministic_hits = nullptr);

/// d-separation oracle. `observed` names the FCI nodes, in order; each must be a node of `g`.
CiTest dsep_ci(const Dag& g, std::span<const std::string> observed);

}  // namespace coat::graph
