#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "coat/graph/dag.hpp"
#include "coat/graph/pag.hpp"

namespace coat::graph {

/// {"nodes": [...], "edges": [{"a", "b", "mark_at_a", "mark_at_b"}]}
nlohmann::json pag_to_json(const Pag& g);
Pag pag_from_json(const nlohmann::json& j);

/// {"nodes": [...], "edges": [[parent, child], ...]}
nlohmann::json dag_to_json(const Dag& g);
Dag dag_from_json(const nlohmann::json& j);

/// Graphviz rendering; arrowheads use none / normal / odot for tail / arrow / circle.
std::string pag_to_dot(const Pag& g, const std::string& highlight = {});

}  // namespace coat::graph
