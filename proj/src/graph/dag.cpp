#include "coat/graph/dag.hpp"

#include <algorithm>
#include <set>

#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat::graph {

Dag::Dag(std::vector<std::string> nodes) : nodes_(std::move(nodes)), parents_(nodes_.size()), children_(nodes_.size()) {
    std::set<std::string_view> seen;
    for (const auto& n : nodes_) {
        if (n.empty()) throw InvariantError("DAG node name is empty");
        if (!seen.insert(n).second) throw InvariantError("duplicate DAG node \"" + n + "\"");
    }
}

Dag::Dag(std::vector<std::string> nodes, const std::vector<std::pair<std::string, std::string>>& edges)
    : Dag(std::move(nodes)) {
    for (const auto& [p, c] : edges) add_edge(p, c);
}

std::optional<int> Dag::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i] == name) return static_cast<int>(i);
    return std::nullopt;
}

int Dag::require(std::string_view name) const {
    const auto i = index_of(name);
    if (!i) throw InvariantError("unknown node \"" + std::string(name) + "\"");
    return *i;
}

bool Dag::has_edge(int parent, int child) const {
    const auto& ch = children_.at(static_cast<std::size_t>(parent));
    return std::find(ch.begin(), ch.end(), child) != ch.end();
}

void Dag::add_edge(int parent, int child) {
    const auto n = static_cast<int>(nodes_.size());
    if (parent < 0 || parent >= n || child < 0 || child >= n) throw InvariantError("edge endpoint out of range");
    if (parent == child) throw InvariantError("self-loop on \"" + nodes_[static_cast<std::size_t>(parent)] + "\"");
    if (has_edge(parent, child)) return;
    if (parent == child || is_ancestor(child, parent))
        throw InvariantError("edge " + nodes_[static_cast<std::size_t>(parent)] + " -> " +
                             nodes_[static_cast<std::size_t>(child)] + " would create a cycle");
    children_[static_cast<std::size_t>(parent)].push_back(child);
    parents_[static_cast<std::size_t>(child)].push_back(parent);
    std::sort(children_[static_cast<std::size_t>(parent)].begin(), children_[static_cast<std::size_t>(parent)].end());
    std::sort(parents_[static_cast<std::size_t>(child)].begin(), parents_[static_cast<std::size_t>(child)].end());
}

std::vector<std::pair<int, int>> Dag::edges() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t p = 0; p < children_.size(); ++p)
        for (int c : children_[p]) out.emplace_back(static_cast<int>(p), c);
    return out;
}

std::size_t Dag::edge_count() const {
    std::size_t e = 0;
    for (const auto& ch : children_) e += ch.size();
    return e;
}

std::vector<int> Dag::topological_order() const {
    const auto n = nodes_.size();
    std::vector<int> indeg(n);
    for (std::size_t v = 0; v < n; ++v) indeg[v] = static_cast<int>(parents_[v].size());
    std::vector<int> order;
    std::vector<int> ready;
    for (std::size_t v = 0; v < n; ++v)
        if (indeg[v] == 0) ready.push_back(static_cast<int>(v));
    while (!ready.empty()) {
        std::sort(ready.begin(), ready.end(), std::greater<>());
        const int v = ready.back();
        ready.pop_back();
        order.push_back(v);
        for (int c : children_[static_cast<std::size_t>(v)])
            if (--indeg[static_cast<std::size_t>(c)] == 0) ready.push_back(c);
    }
    return order;
}

std::vector<bool> Dag::ancestors(int v) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<int> stack(parents_.at(static_cast<std::size_t>(v)));
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        if (seen[static_cast<std::size_t>(u)]) continue;
        seen[static_cast<std::size_t>(u)] = true;
        for (int p : parents_[static_cast<std::size_t>(u)]) stack.push_back(p);
    }
    return seen;
}

std::vector<bool> Dag::descendants(int v) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<int> stack(children_.at(static_cast<std::size_t>(v)));
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        if (seen[static_cast<std::size_t>(u)]) continue;
        seen[static_cast<std::size_t>(u)] = true;
        for (int c : children_[static_cast<std::size_t>(u)]) stack.push_back(c);
    }
    return seen;
}

bool Dag::is_ancestor(int a, int b) const { return a != b && ancestors(b)[static_cast<std::size_t>(a)]; }

std::vector<int> Dag::markov_blanket(int v) const {
    std::set<int> mb(parents(v).begin(), parents(v).end());
    for (int c : children(v)) {
        mb.insert(c);
        for (int p : parents(c))
            if (p != v) mb.insert(p);
    }
    return {mb.begin(), mb.end()};
}

Dag random_dag(std::uint64_t seed, int min_nodes, int max_nodes, double edge_prob) {
    Rng rng(seed);
    const int n = static_cast<int>(rng.integer(min_nodes, max_nodes));
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("v" + std::to_string(i));
    Dag g(names);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.bernoulli(edge_prob)) g.add_edge(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    return g;
}

}  // namespace coat::graph
