#include "coat/graph/fci.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>

#include "coat/graph/dsep.hpp"

namespace coat::graph {

namespace {

/// Visits every k-subset of `items` in lexicographic position order until `fn` returns true.
template <class Fn>
bool for_each_subset(const std::vector<int>& items, std::size_t k, Fn&& fn) {
    if (k > items.size()) return false;
    std::vector<std::size_t> pos(k);
    std::iota(pos.begin(), pos.end(), 0);
    std::vector<int> subset(k);
    while (true) {
        for (std::size_t i = 0; i < k; ++i) subset[i] = items[pos[i]];
        if (fn(std::span<const int>(subset))) return true;
        // advance
        std::size_t i = k;
        while (i > 0 && pos[i - 1] == items.size() - k + (i - 1)) --i;
        if (i == 0) return false;
        ++pos[i - 1];
        for (std::size_t j = i; j < k; ++j) pos[j] = pos[j - 1] + 1;
    }
}

std::pair<int, int> key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

class FciRunner {
public:
    FciRunner(const CiTest& ci, std::vector<std::string> nodes, const FciOptions& opt)
        : ci_(ci), opt_(opt), g_(Pag::complete(std::move(nodes))) {
        const auto n = static_cast<int>(g_.size());
        order_.resize(static_cast<std::size_t>(n));
        std::iota(order_.begin(), order_.end(), 0);
        std::sort(order_.begin(), order_.end(), [&](int a, int b) { return g_.name(a) < g_.name(b); });
        rank_.resize(static_cast<std::size_t>(n));
        for (int r = 0; r < n; ++r) rank_[static_cast<std::size_t>(order_[static_cast<std::size_t>(r)])] = r;
    }

    FciOutput run() {
        skeleton();
        orient_pag(g_, sepsets_, false);
        if (opt_.possible_dsep) {
            possible_dsep_pass();
        }
        orient_pag(g_, sepsets_, opt_.complete_rules);
        return {g_, sepsets_, calls_};
    }

private:
    void sort_by_rank(std::vector<int>& v) const {
        std::sort(v.begin(), v.end(), [&](int a, int b) { return rank_[static_cast<std::size_t>(a)] < rank_[static_cast<std::size_t>(b)]; });
    }

    bool independent(int x, int y, std::span<const int> s) {
        if (rank_[static_cast<std::size_t>(x)] > rank_[static_cast<std::size_t>(y)]) std::swap(x, y);
        std::vector<int> sorted(s.begin(), s.end());
        sort_by_rank(sorted);
        auto cache_key = std::make_tuple(x, y, sorted);
        if (const auto it = cache_.find(cache_key); it != cache_.end()) return it->second;
        stats::CiResult r;
        try {
            ++calls_;
            r = ci_(x, y, sorted);
        } catch (const std::exception& e) {
            std::vector<std::string> names;
            for (int v : sorted) names.push_back(g_.name(v));
            std::string msg = std::string("CI test failed for (") + g_.name(x) + ", " + g_.name(y) + " | {";
            for (std::size_t i = 0; i < names.size(); ++i) msg += (i ? ", " : "") + names[i];
            msg += std::string("}): ") + e.what();
            throw FciError(msg, g_.name(x), g_.name(y), names);
        }
        cache_.emplace(std::move(cache_key), r.independent);
        return r.independent;
    }

    std::vector<int> adj_sorted(int v) const {
        auto a = g_.adjacents(v);
        sort_by_rank(a);
        return a;
    }

    // Stable adjacency search: adjacency sets are frozen at the start of each level.
    void skeleton() {
        const auto n = static_cast<int>(g_.size());
        for (int d = 0; d <= opt_.max_cond_size; ++d) {
            std::vector<std::vector<int>> frozen(static_cast<std::size_t>(n));
            for (int v = 0; v < n; ++v) frozen[static_cast<std::size_t>(v)] = adj_sorted(v);
            bool any = false;
            for (int ri = 0; ri < n; ++ri) {
                for (int rj = ri + 1; rj < n; ++rj) {
                    const int x = order_[static_cast<std::size_t>(ri)];
                    const int y = order_[static_cast<std::size_t>(rj)];
                    if (!g_.adjacent(x, y)) continue;
                    for (auto [a, b] : {std::pair{x, y}, std::pair{y, x}}) {
                        std::vector<int> cand;
                        for (int v : frozen[static_cast<std::size_t>(a)])
                            if (v != b) cand.push_back(v);
                        if (cand.size() < static_cast<std::size_t>(d)) continue;
                        any = true;
                        const bool removed = for_each_subset(cand, static_cast<std::size_t>(d), [&](std::span<const int> s) {
                            if (!independent(x, y, s)) return false;
                            g_.remove_edge(x, y);
                            sepsets_[key(x, y)] = std::vector<int>(s.begin(), s.end());
                            return true;
                        });
                        if (removed) break;
                    }
                }
            }
            if (!any) break;
        }
    }

    std::vector<int> possible_dsep(const Pag& g, int a, int b) const {
        const auto n = static_cast<int>(g.size());
        std::set<int> result;
        std::set<std::pair<int, int>> visited;
        std::deque<std::tuple<int, int, int>> queue;  // (prev, cur, path length)
        for (int v : g.adjacents(a)) {
            queue.emplace_back(a, v, 1);
            visited.emplace(a, v);
            result.insert(v);
        }
        while (!queue.empty()) {
            const auto [u, v, len] = queue.front();
            queue.pop_front();
            if (opt_.depth_limit >= 0 && len >= opt_.depth_limit) continue;
            for (int w = 0; w < n; ++w) {
                if (w == u || w == v || !g.adjacent(v, w)) continue;
                if (visited.contains({v, w})) continue;
                const bool collider = g.mark(u, v) == Mark::Arrow && g.mark(w, v) == Mark::Arrow;
                const bool triangle = g.adjacent(u, w);
                if (!collider && !triangle) continue;
                visited.emplace(v, w);
                result.insert(w);
                queue.emplace_back(v, w, len + 1);
            }
        }
        result.erase(a);
        result.erase(b);
        std::vector<int> out(result.begin(), result.end());
        sort_by_rank(out);
        return out;
    }

    void possible_dsep_pass() {
        const auto n = static_cast<int>(g_.size());
        // possible-d-sep sets are read off the collider-oriented graph before any removal
        const Pag oriented = g_;
        std::vector<std::pair<int, int>> edges;
        for (int ri = 0; ri < n; ++ri)
            for (int rj = ri + 1; rj < n; ++rj) {
                const int x = order_[static_cast<std::size_t>(ri)];
                const int y = order_[static_cast<std::size_t>(rj)];
                if (g_.adjacent(x, y)) edges.emplace_back(x, y);
            }
        for (const auto& [x, y] : edges) {
            for (auto [a, b] : {std::pair{x, y}, std::pair{y, x}}) {
                if (!g_.adjacent(x, y)) break;
                const auto pds = possible_dsep(oriented, a, b);
                bool removed = false;
                const auto max_d = std::min<std::size_t>(pds.size(), static_cast<std::size_t>(std::max(0, opt_.max_cond_size)));
                for (std::size_t d = 0; d <= max_d && !removed; ++d) {
                    removed = for_each_subset(pds, d, [&](std::span<const int> s) {
                        if (!independent(x, y, s)) return false;
                        g_.remove_edge(x, y);
                        sepsets_[key(x, y)] = std::vector<int>(s.begin(), s.end());
                        return true;
                    });
                }
                if (removed) break;
            }
        }
    }

    const CiTest& ci_;
    FciOptions opt_;
    Pag g_;
    std::vector<int> order_;
    std::vector<int> rank_;
    SepsetMap sepsets_;
    std::map<std::tuple<int, int, std::vector<int>>, bool> cache_;
    std::size_t calls_ = 0;
};

// ---------------------------------------------------------------- orientation rules

class Orienter {
public:
    Orienter(Pag& g, const SepsetMap& sepsets) : g_(g), sep_(sepsets), n_(static_cast<int>(g.size())) {}

    bool in_sepset(int a, int c, int b) const {
        const auto it = sep_.find(key(a, c));
        if (it == sep_.end()) return false;
        return std::find(it->second.begin(), it->second.end(), b) != it->second.end();
    }
    bool has_sepset(int a, int c) const { return sep_.contains(key(a, c)); }

    void colliders() {
        for (int b = 0; b < n_; ++b) {
            const auto adj = g_.adjacents(b);
            for (std::size_t i = 0; i < adj.size(); ++i)
                for (std::size_t j = i + 1; j < adj.size(); ++j) {
                    const int a = adj[i], c = adj[j];
                    if (g_.adjacent(a, c)) continue;
                    if (!has_sepset(a, c) || in_sepset(a, c, b)) continue;
                    g_.set_mark(a, b, Mark::Arrow);
                    g_.set_mark(c, b, Mark::Arrow);
                }
        }
    }

    // R1: a *-> b o-* c, a and c nonadjacent  =>  b -> c
    bool r1() {
        bool changed = false;
        for (int b = 0; b < n_; ++b)
            for (int a : g_.adjacents(b)) {
                if (g_.mark(a, b) != Mark::Arrow) continue;
                for (int c : g_.adjacents(b)) {
                    if (c == a || g_.adjacent(a, c) || g_.mark(c, b) != Mark::Circle) continue;
                    g_.set_mark(c, b, Mark::Tail);
                    g_.set_mark(b, c, Mark::Arrow);
                    changed = true;
                }
            }
        return changed;
    }

    // R2: (a -> b *-> c or a *-> b -> c) and a *-o c  =>  a *-> c
    bool r2() {
        bool changed = false;
        for (int a = 0; a < n_; ++a)
            for (int c : g_.adjacents(a)) {
                if (g_.mark(a, c) != Mark::Circle) continue;
                for (int b : g_.adjacents(a)) {
                    if (b == c || !g_.adjacent(b, c)) continue;
                    const bool first = g_.is_directed(a, b) && g_.mark(b, c) == Mark::Arrow;
                    const bool second = g_.mark(a, b) == Mark::Arrow && g_.is_directed(b, c);
                    if (first || second) {
                        g_.set_mark(a, c, Mark::Arrow);
                        changed = true;
                        break;
                    }
                }
            }
        return changed;
    }

    // R3: a *-> b <-* c, a *-o d o-* c, a and c nonadjacent, d *-o b  =>  d *-> b
    bool r3() {
        bool changed = false;
        for (int b = 0; b < n_; ++b)
            for (int d : g_.adjacents(b)) {
                if (g_.mark(d, b) != Mark::Circle) continue;
                const auto adj = g_.adjacents(b);
                bool done = false;
                for (std::size_t i = 0; i < adj.size() && !done; ++i)
                    for (std::size_t j = i + 1; j < adj.size() && !done; ++j) {
                        const int a = adj[i], c = adj[j];
                        if (a == d || c == d || g_.adjacent(a, c)) continue;
                        if (g_.mark(a, b) != Mark::Arrow || g_.mark(c, b) != Mark::Arrow) continue;
                        if (!g_.adjacent(a, d) || !g_.adjacent(c, d)) continue;
                        if (g_.mark(a, d) != Mark::Circle || g_.mark(c, d) != Mark::Circle) continue;
                        g_.set_mark(d, b, Mark::Arrow);
                        changed = done = true;
                    }
            }
        return changed;
    }

    // R4: discriminating path <d, ..., a, b, c> for b with b o-* c.
    bool r4() {
        bool changed = false;
        for (int c = 0; c < n_; ++c)
            for (int b : g_.adjacents(c)) {
                if (g_.mark(c, b) != Mark::Circle) continue;
                for (int a : g_.adjacents(b)) {
                    if (a == c || !g_.adjacent(a, c)) continue;
                    // a must be a collider-in-waiting (b *-> a) and a parent of c
                    if (g_.mark(b, a) != Mark::Arrow || !g_.is_directed(a, c)) continue;
                    const auto d = find_discriminating_end(a, b, c);
                    if (!d) continue;
                    if (in_sepset(*d, c, b)) {
                        g_.set_mark(c, b, Mark::Tail);
                        g_.set_mark(b, c, Mark::Arrow);
                    } else {
                        g_.set_mark(a, b, Mark::Arrow);
                        g_.set_mark(c, b, Mark::Arrow);
                        g_.set_mark(b, c, Mark::Arrow);
                    }
                    changed = true;
                    break;
                }
                if (changed) return true;
            }
        return changed;
    }

    // R8: (a -> b -> c or a -o b -> c) and a o-> c  =>  a -> c
    bool r8() {
        bool changed = false;
        for (int a = 0; a < n_; ++a)
            for (int c : g_.adjacents(a)) {
                if (g_.mark(c, a) != Mark::Circle || g_.mark(a, c) != Mark::Arrow) continue;
                for (int b : g_.adjacents(a)) {
                    if (b == c || !g_.is_directed(b, c)) continue;
                    const bool ab = g_.mark(b, a) == Mark::Tail && (g_.mark(a, b) == Mark::Arrow || g_.mark(a, b) == Mark::Circle);
                    if (ab) {
                        g_.set_mark(c, a, Mark::Tail);
                        changed = true;
                        break;
                    }
                }
            }
        return changed;
    }

    // R9: a o-> c with an uncovered potentially directed path <a, b, ..., c>, b and c nonadjacent  =>  a -> c
    bool r9() {
        bool changed = false;
        for (int a = 0; a < n_; ++a)
            for (int c : g_.adjacents(a)) {
                if (g_.mark(c, a) != Mark::Circle || g_.mark(a, c) != Mark::Arrow) continue;
                const auto firsts = upd_path_first_nodes(a, c, c);
                for (int b : firsts) {
                    if (b == c || g_.adjacent(b, c)) continue;
                    g_.set_mark(c, a, Mark::Tail);
                    changed = true;
                    break;
                }
            }
        return changed;
    }

    // R10: a o-> c, b -> c <- d, uncovered p.d. paths a..b and a..d whose first nodes
    // mu and omega are distinct and nonadjacent  =>  a -> c
    bool r10() {
        bool changed = false;
        for (int a = 0; a < n_; ++a)
            for (int c : g_.adjacents(a)) {
                if (g_.mark(c, a) != Mark::Circle || g_.mark(a, c) != Mark::Arrow) continue;
                std::vector<int> into;
                for (int v : g_.adjacents(c))
                    if (v != a && g_.is_directed(v, c)) into.push_back(v);
                bool done = false;
                for (std::size_t i = 0; i < into.size() && !done; ++i)
                    for (std::size_t j = i + 1; j < into.size() && !done; ++j) {
                        const auto m1 = upd_path_first_nodes(a, into[i], c);
                        const auto m2 = upd_path_first_nodes(a, into[j], c);
                        for (int mu : m1) {
                            for (int om : m2)
                                if (mu != om && !g_.adjacent(mu, om)) {
                                    done = true;
                                    break;
                                }
                            if (done) break;
                        }
                    }
                if (done) {
                    g_.set_mark(c, a, Mark::Tail);
                    changed = true;
                }
            }
        return changed;
    }

private:
    /// Searches back from a for the far end d of a discriminating path <d, ..., a, b, c>.
    std::optional<int> find_discriminating_end(int a, int b, int c) const {
        // each frontier node v is a collider on the path and a parent of c; extend through v's
        // arrowhead-into-v neighbours
        std::deque<std::pair<int, int>> queue{{a, b}};  // (node, its successor on the path toward b)
        std::set<int> visited{a, b, c};
        while (!queue.empty()) {
            const auto [v, next] = queue.front();
            queue.pop_front();
            for (int u : g_.adjacents(v)) {
                if (visited.contains(u)) continue;
                if (g_.mark(u, v) != Mark::Arrow) continue;  // path needs u *-> v
                if (!g_.adjacent(u, c)) return u;
                // u continues the path only if it is a parent of c and a collider (v *-> u)
                if (g_.is_directed(u, c) && g_.mark(v, u) == Mark::Arrow) {
                    visited.insert(u);
                    queue.emplace_back(u, v);
                }
            }
            (void)next;
        }
        return std::nullopt;
    }

    /// Edge u -- v can be traversed u => v on a potentially directed path.
    bool pd_step(int u, int v) const {
        return g_.adjacent(u, v) && g_.mark(v, u) != Mark::Arrow && g_.mark(u, v) != Mark::Tail;
    }

    /// First nodes after `a` on uncovered potentially directed paths from a to `target`,
    /// never passing through `avoid`.
    std::vector<int> upd_path_first_nodes(int a, int target, int avoid) const {
        std::set<int> out;
        std::vector<int> path{a};
        std::vector<bool> on(static_cast<std::size_t>(n_), false);
        on[static_cast<std::size_t>(a)] = true;
        std::function<void(int)> dfs = [&](int v) {
            for (int w : g_.adjacents(v)) {
                if (on[static_cast<std::size_t>(w)] || (w == avoid && w != target)) continue;
                if (!pd_step(v, w)) continue;
                if (path.size() >= 2 && g_.adjacent(path[path.size() - 2], w)) continue;  // must stay uncovered
                if (w == target) {
                    out.insert(path.size() >= 2 ? path[1] : w);
                    continue;
                }
                on[static_cast<std::size_t>(w)] = true;
                path.push_back(w);
                dfs(w);
                path.pop_back();
                on[static_cast<std::size_t>(w)] = false;
            }
        };
        dfs(a);
        return {out.begin(), out.end()};
    }

    Pag& g_;
    const SepsetMap& sep_;
    int n_;
};

}  // namespace

void orient_pag(Pag& g, const SepsetMap& sepsets, bool complete_rules) {
    for (const auto& e : g.edges()) g.set_edge(e.a, e.b, Mark::Circle, Mark::Circle);
    Orienter o(g, sepsets);
    o.colliders();
    bool changed = true;
    while (changed) {
        changed = false;
        changed |= o.r1();
        changed |= o.r2();
        changed |= o.r3();
        changed |= o.r4();
        if (complete_rules) {
            changed |= o.r8();
            changed |= o.r9();
            changed |= o.r10();
        }
    }
}

FciOutput fci_detailed(const CiTest& ci, std::vector<std::string> nodes, const FciOptions& options) {
    if (nodes.empty()) throw InvariantError("fci: no nodes");
    FciRunner runner(ci, std::move(nodes), options);
    return runner.run();
}

Pag fci(const CiTest& ci, std::vector<std::string> nodes, const FciOptions& options) {
    return fci_detailed(ci, std::move(nodes), options).pag;
}

CiTest fisher_z_ci(Eigen::MatrixXd data, double alpha, std::shared_ptr<std::size_t> deterministic_hits) {
    auto corr = std::make_shared<Eigen::MatrixXd>(stats::correlation_matrix(data));
    const auto n = static_cast<std::size_t>(data.rows());
    return [corr, n, alpha, deterministic_hits](int x, int y, std::span<const int> s) {
        try {
            return stats::fisher_z_test_corr(*corr, n, x, y, s, alpha);
        } catch (const DeterministicRelationError&) {
            if (deterministic_hits) ++*deterministic_hits;
            stats::CiResult r;
            r.alpha = alpha;
            r.conditioning_size = static_cast<int>(s.size());
            r.statistic = std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
            r.independent = false;
            return r;
        }
    };
}

CiTest dsep_ci(const Dag& g, std::span<const std::string> observed) {
    std::vector<int> map;
    for (const auto& name : observed) map.push_back(g.require(name));
    return [g, map](int x, int y, std::span<const int> s) {
        std::vector<int> ms;
        for (int v : s) ms.push_back(map.at(static_cast<std::size_t>(v)));
        return dsep_result(g, map.at(static_cast<std::size_t>(x)), map.at(static_cast<std::size_t>(y)), ms);
    };
}

}  // namespace coat::graph
