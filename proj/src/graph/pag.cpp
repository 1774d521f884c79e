#include "coat/graph/pag.hpp"

#include <set>

#include "coat/errors.hpp"

namespace coat::graph {

char mark_glyph(Mark m) {
    switch (m) {
        case Mark::Tail: return '-';
        case Mark::Arrow: return '>';
        case Mark::Circle: return 'o';
        case Mark::None: return ' ';
    }
    return ' ';
}

std::string to_string(Mark m) {
    switch (m) {
        case Mark::Tail: return "tail";
        case Mark::Arrow: return "arrow";
        case Mark::Circle: return "circle";
        case Mark::None: return "none";
    }
    return "none";
}

Mark mark_from_string(std::string_view s) {
    if (s == "tail") return Mark::Tail;
    if (s == "arrow") return Mark::Arrow;
    if (s == "circle") return Mark::Circle;
    if (s == "none") return Mark::None;
    throw ParseError("unknown endpoint mark \"" + std::string(s) + "\"");
}

Pag::Pag(std::vector<std::string> nodes) : nodes_(std::move(nodes)), marks_(nodes_.size() * nodes_.size(), Mark::None) {
    std::set<std::string_view> seen;
    for (const auto& n : nodes_)
        if (!seen.insert(n).second) throw InvariantError("duplicate PAG node \"" + n + "\"");
}

std::optional<int> Pag::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i] == name) return static_cast<int>(i);
    return std::nullopt;
}

int Pag::require(std::string_view name) const {
    const auto i = index_of(name);
    if (!i) throw InvariantError("unknown node \"" + std::string(name) + "\"");
    return *i;
}

void Pag::set_edge(int a, int b, Mark at_a, Mark at_b) {
    if (a == b) throw InvariantError("self-adjacency on \"" + name(a) + "\"");
    if ((at_a == Mark::None) != (at_b == Mark::None)) throw InvariantError("edge marks must be set on both ends");
    marks_[idx(b, a)] = at_a;
    marks_[idx(a, b)] = at_b;
}

void Pag::set_mark(int a, int b, Mark at_b) {
    if (!adjacent(a, b)) throw InvariantError("set_mark on a missing edge " + name(a) + " - " + name(b));
    if (at_b == Mark::None) throw InvariantError("use remove_edge to delete an edge");
    marks_[idx(a, b)] = at_b;
}

void Pag::remove_edge(int a, int b) {
    marks_[idx(a, b)] = Mark::None;
    marks_[idx(b, a)] = Mark::None;
}

std::vector<int> Pag::adjacents(int v) const {
    std::vector<int> out;
    for (std::size_t u = 0; u < nodes_.size(); ++u)
        if (adjacent(v, static_cast<int>(u))) out.push_back(static_cast<int>(u));
    return out;
}

std::vector<PagEdge> Pag::edges() const {
    std::vector<PagEdge> out;
    const auto n = static_cast<int>(nodes_.size());
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (adjacent(a, b)) out.push_back({a, b, mark(b, a), mark(a, b)});
    return out;
}

std::size_t Pag::edge_count() const { return edges().size(); }

Pag Pag::complete(std::vector<std::string> nodes) {
    Pag g(std::move(nodes));
    const auto n = static_cast<int>(g.size());
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) g.set_edge(a, b, Mark::Circle, Mark::Circle);
    return g;
}

}  // namespace coat::graph
