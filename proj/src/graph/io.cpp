#include "coat/graph/io.hpp"

#include <sstream>

#include "coat/errors.hpp"

namespace coat::graph {

nlohmann::json pag_to_json(const Pag& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges())
        edges.push_back({{"a", g.name(e.a)}, {"b", g.name(e.b)}, {"mark_at_a", to_string(e.mark_at_a)},
                         {"mark_at_b", to_string(e.mark_at_b)}});
    return {{"nodes", g.nodes()}, {"edges", edges}};
}

Pag pag_from_json(const nlohmann::json& j) {
    try {
        Pag g(j.at("nodes").get<std::vector<std::string>>());
        for (const auto& e : j.at("edges")) {
            const int a = g.require(e.at("a").get<std::string>());
            const int b = g.require(e.at("b").get<std::string>());
            const Mark ma = mark_from_string(e.at("mark_at_a").get<std::string>());
            const Mark mb = mark_from_string(e.at("mark_at_b").get<std::string>());
            if (ma == Mark::None || mb == Mark::None) throw ParseError("edge marks must not be none");
            g.set_edge(a, b, ma, mb);
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed graph JSON: ") + e.what());
    }
}

nlohmann::json dag_to_json(const Dag& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [p, c] : g.edges()) edges.push_back({g.name(p), g.name(c)});
    return {{"nodes", g.nodes()}, {"edges", edges}};
}

Dag dag_from_json(const nlohmann::json& j) {
    try {
        Dag g(j.at("nodes").get<std::vector<std::string>>());
        for (const auto& e : j.at("edges")) g.add_edge(e.at(0).get<std::string>(), e.at(1).get<std::string>());
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed DAG JSON: ") + e.what());
    }
}

namespace {
const char* arrow_style(Mark m) {
    switch (m) {
        case Mark::Arrow: return "normal";
        case Mark::Circle: return "odot";
        default: return "none";
    }
}
}  // namespace

std::string pag_to_dot(const Pag& g, const std::string& highlight) {
    std::ostringstream out;
    out << "digraph pag {\n";
    for (const auto& n : g.nodes()) {
        out << "  \"" << n << '"';
        if (n == highlight) out << " [style=filled, fillcolor=lightgrey]";
        out << ";\n";
    }
    for (const auto& e : g.edges())
        out << "  \"" << g.name(e.a) << "\" -> \"" << g.name(e.b) << "\" [dir=both, arrowtail=" << arrow_style(e.mark_at_a)
            << ", arrowhead=" << arrow_style(e.mark_at_b) << "];\n";
    out << "}\n";
    return out.str();
}

}  // namespace coat::graph
