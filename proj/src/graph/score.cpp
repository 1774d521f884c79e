#include "coat/graph/score.hpp"

#include <algorithm>
#include <set>

#include "coat/errors.hpp"
#include "coat/graph/dsep.hpp"
#include "coat/graph/fci.hpp"

namespace coat::graph {

namespace {

std::vector<int> name_map(const std::vector<std::string>& from, const std::vector<std::string>& to) {
    if (from.size() != to.size()) throw InvariantError("graph node sets differ in size");
    std::vector<int> map;
    for (const auto& n : from) {
        const auto it = std::find(to.begin(), to.end(), n);
        if (it == to.end()) throw InvariantError("node \"" + n + "\" missing from the other graph");
        map.push_back(static_cast<int>(it - to.begin()));
    }
    return map;
}

bool adjustment_valid(const Dag& g, int i, int j, const std::vector<int>& z) {
    const auto n = static_cast<int>(g.size());
    const auto de_i = g.descendants(i);
    if (std::find(z.begin(), z.end(), j) != z.end()) return !de_i[static_cast<std::size_t>(j)];
    // nodes on proper causal paths i -> ... -> j, excluding i
    auto an_j = g.ancestors(j);
    an_j[static_cast<std::size_t>(j)] = true;
    std::vector<bool> forbidden(static_cast<std::size_t>(n), false);
    for (int w = 0; w < n; ++w) {
        if (!de_i[static_cast<std::size_t>(w)] || !an_j[static_cast<std::size_t>(w)]) continue;
        forbidden[static_cast<std::size_t>(w)] = true;
        const auto de_w = g.descendants(w);
        for (int v = 0; v < n; ++v)
            if (de_w[static_cast<std::size_t>(v)]) forbidden[static_cast<std::size_t>(v)] = true;
    }
    for (int v : z)
        if (forbidden[static_cast<std::size_t>(v)]) return false;
    // drop the first edge of every causal path and require z to separate the rest
    Dag cut(g.nodes());
    for (const auto& [a, b] : g.edges()) {
        if (a == i && an_j[static_cast<std::size_t>(b)]) continue;
        cut.add_edge(a, b);
    }
    return d_separated(cut, i, j, z);
}

}  // namespace

Pag project_to_pag(const Dag& truth) {
    FciOptions opt;
    opt.max_cond_size = std::max(0, static_cast<int>(truth.size()) - 2);
    return fci(dsep_ci(truth, truth.nodes()), truth.nodes(), opt);
}

int structural_hamming(const Pag& a, const Pag& b) {
    const auto map = name_map(a.nodes(), b.nodes());
    const auto n = static_cast<int>(a.size());
    int shd = 0;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            const int bu = map[static_cast<std::size_t>(u)], bv = map[static_cast<std::size_t>(v)];
            const bool in_a = a.adjacent(u, v), in_b = b.adjacent(bu, bv);
            if (in_a != in_b) {
                ++shd;
            } else if (in_a) {
                shd += (a.mark(u, v) != b.mark(bu, bv)) + (a.mark(v, u) != b.mark(bv, bu));
            }
        }
    return shd;
}

int structural_intervention_distance(const Dag& truth, const Dag& estimate) {
    if (truth.nodes() != estimate.nodes()) throw InvariantError("SID needs identical node order");
    const auto n = static_cast<int>(truth.size());
    int sid = 0;
    for (int i = 0; i < n; ++i) {
        const auto& z = estimate.parents(i);
        for (int j = 0; j < n; ++j)
            if (j != i && !adjustment_valid(truth, i, j, z)) ++sid;
    }
    return sid;
}

double harmonic_f1(double recall, double precision) {
    return recall + precision > 0 ? 2.0 * recall * precision / (recall + precision) : 0.0;
}

GraphScore score_graph(const Pag& found, const Dag& truth, const ScoreOptions& options) {
    const auto map = name_map(truth.nodes(), found.nodes());
    const Pag projected = project_to_pag(truth);
    GraphScore s;
    s.shd = structural_hamming(projected, found);

    const auto n = static_cast<int>(truth.size());
    int tp = 0, n_truth = 0, n_found = static_cast<int>(found.edge_count());
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            if (!truth.adjacent(u, v)) continue;
            ++n_truth;
            const int fu = map[static_cast<std::size_t>(u)], fv = map[static_cast<std::size_t>(v)];
            if (!found.adjacent(fu, fv)) continue;
            if (options.orientation_sensitive &&
                (found.mark(fu, fv) != projected.mark(u, v) || found.mark(fv, fu) != projected.mark(v, u)))
                continue;
            ++tp;
        }
    if (n_truth == 0 && n_found == 0) {
        s.edge_recall = s.edge_precision = s.edge_f1 = 1.0;
    } else {
        s.edge_recall = n_truth ? static_cast<double>(tp) / n_truth : 1.0;
        s.edge_precision = n_found ? static_cast<double>(tp) / n_found : 0.0;
        s.edge_f1 = harmonic_f1(s.edge_recall, s.edge_precision);
    }

    if (n > options.sid_max_nodes) return s;
    // member DAGs: orient each found edge in every direction its marks allow
    struct Choice {
        int a, b;
        bool forward, backward;
    };
    std::vector<std::pair<int, int>> fixed;
    std::vector<Choice> free;
    std::vector<int> inverse(map.size());
    for (std::size_t u = 0; u < map.size(); ++u) inverse[static_cast<std::size_t>(map[u])] = static_cast<int>(u);
    for (const auto& e : found.edges()) {
        const int a = inverse[static_cast<std::size_t>(e.a)];
        const int b = inverse[static_cast<std::size_t>(e.b)];
        // a -> b needs no arrowhead at a and no tail at b
        bool fwd = e.mark_at_a != Mark::Arrow && e.mark_at_b != Mark::Tail;
        bool bwd = e.mark_at_b != Mark::Arrow && e.mark_at_a != Mark::Tail;
        if (!fwd && !bwd) fwd = bwd = true;
        if (fwd && bwd)
            free.push_back({a, b, true, true});
        else
            fixed.emplace_back(fwd ? a : b, fwd ? b : a);
    }
    if (static_cast<int>(free.size()) > options.sid_max_free_edges) return s;
    const std::uint64_t combos = std::uint64_t{1} << free.size();
    for (std::uint64_t mask = 0; mask < combos; ++mask) {
        Dag member(truth.nodes());
        bool ok = true;
        try {
            for (const auto& [a, b] : fixed) member.add_edge(a, b);
            for (std::size_t k = 0; k < free.size(); ++k) {
                const bool fwd = (mask >> k) & 1U;
                member.add_edge(fwd ? free[k].a : free[k].b, fwd ? free[k].b : free[k].a);
            }
        } catch (const InvariantError&) {
            ok = false;
        }
        if (!ok) continue;
        const int sid = structural_intervention_distance(truth, member);
        s.sid = s.sid ? std::min(*s.sid, sid) : sid;
        s.sid_upper = s.sid_upper ? std::max(*s.sid_upper, sid) : sid;
    }
    return s;
}

}  // namespace coat::graph
