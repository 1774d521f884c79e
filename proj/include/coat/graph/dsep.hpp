#pragma once

#include <span>
#include <string>

#include "coat/graph/dag.hpp"
#include "coat/stats.hpp"

namespace coat::graph {

/// True when x and y are d-separated by s in g (reachability / Bayes-ball).
bool d_separated(const Dag& g, int x, int y, std::span<const int> s);
bool d_separated(const Dag& g, std::string_view x, std::string_view y, std::span<const std::string> s);

/// CI result shaped from a d-separation query: p = 1 when separated, 0 otherwise.
stats::CiResult dsep_result(const Dag& g, int x, int y, std::span<const int> s, double alpha = 0.05);

}  // namespace coat::graph
