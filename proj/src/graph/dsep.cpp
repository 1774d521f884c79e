#include "coat/graph/dsep.hpp"

#include <vector>

#include "coat/errors.hpp"

namespace coat::graph {

bool d_separated(const Dag& g, int x, int y, std::span<const int> s) {
    const auto n = static_cast<int>(g.size());
    auto check = [n](int v) {
        if (v < 0 || v >= n) throw InvariantError("d_separated: unknown node index " + std::to_string(v));
    };
    check(x);
    check(y);
    if (x == y) throw InvariantError("d_separated: x and y must differ");
    std::vector<bool> in_s(static_cast<std::size_t>(n), false);
    for (int v : s) {
        check(v);
        if (v == x || v == y) throw InvariantError("d_separated: x and y must not be in the conditioning set");
        in_s[static_cast<std::size_t>(v)] = true;
    }

    // nodes that are in s or have a descendant in s
    std::vector<bool> anc_s(in_s);
    {
        std::vector<int> stack(s.begin(), s.end());
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int p : g.parents(v))
                if (!anc_s[static_cast<std::size_t>(p)]) {
                    anc_s[static_cast<std::size_t>(p)] = true;
                    stack.push_back(p);
                }
        }
    }

    // state: (node, arrived_from_child)
    std::vector<bool> seen_up(static_cast<std::size_t>(n), false), seen_down(static_cast<std::size_t>(n), false);
    std::vector<std::pair<int, bool>> stack{{x, true}};
    while (!stack.empty()) {
        const auto [v, up] = stack.back();
        stack.pop_back();
        auto& seen = up ? seen_up : seen_down;
        if (seen[static_cast<std::size_t>(v)]) continue;
        seen[static_cast<std::size_t>(v)] = true;
        const bool blocked = in_s[static_cast<std::size_t>(v)];
        if (v == y && !blocked) return false;
        if (up) {
            if (blocked) continue;
            for (int p : g.parents(v)) stack.emplace_back(p, true);
            for (int c : g.children(v)) stack.emplace_back(c, false);
        } else {
            if (!blocked)
                for (int c : g.children(v)) stack.emplace_back(c, false);
            if (anc_s[static_cast<std::size_t>(v)])
                for (int p : g.parents(v)) stack.emplace_back(p, true);
        }
    }
    return true;
}

bool d_separated(const Dag& g, std::string_view x, std::string_view y, std::span<const std::string> s) {
    std::vector<int> idx;
    for (const auto& v : s) idx.push_back(g.require(v));
    return d_separated(g, g.require(x), g.require(y), idx);
}

stats::CiResult dsep_result(const Dag& g, int x, int y, std::span<const int> s, double alpha) {
    stats::CiResult r;
    r.alpha = alpha;
    r.conditioning_size = static_cast<int>(s.size());
    r.independent = d_separated(g, x, y, s);
    r.p_value = r.independent ? 1.0 : 0.0;
    r.statistic = r.independent ? 0.0 : 1.0;
    return r;
}

}  // namespace coat::graph
