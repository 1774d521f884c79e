#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coat::graph {

/// Endpoint mark on one end of an edge.
enum class Mark : std::uint8_t { None, Tail, Arrow, Circle };

char mark_glyph(Mark m);  // '-', '>', 'o' ; ' ' for None
std::string to_string(Mark m);
Mark mark_from_string(std::string_view s);

struct PagEdge {
    int a = 0;
    int b = 0;
    Mark mark_at_a = Mark::Circle;
    Mark mark_at_b = Mark::Circle;
};

/// Partial ancestral graph. For each adjacent pair {a, b} both end marks are stored;
/// `mark(a, b)` is the mark at b's end of the a-b edge, so `a *-> b` means mark(a, b) == Arrow.
class Pag {
public:
    Pag() = default;
    explicit Pag(std::vector<std::string> nodes);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    const std::string& name(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
    std::optional<int> index_of(std::string_view name) const;
    int require(std::string_view name) const;

    bool adjacent(int a, int b) const { return mark(a, b) != Mark::None; }
    /// Mark at b's end of edge a-b (None when not adjacent).
    Mark mark(int a, int b) const { return marks_[idx(a, b)]; }
    /// Sets both ends: mark at a's end and at b's end.
    void set_edge(int a, int b, Mark at_a, Mark at_b);
    /// Sets only the mark at b's end; the edge must exist.
    void set_mark(int a, int b, Mark at_b);
    void remove_edge(int a, int b);

    std::vector<int> adjacents(int v) const;
    std::vector<PagEdge> edges() const;  // a < b
    std::size_t edge_count() const;

    /// a -> b : tail at a, arrow at b.
    bool is_directed(int a, int b) const { return mark(b, a) == Mark::Tail && mark(a, b) == Mark::Arrow; }
    /// a <-> b.
    bool is_bidirected(int a, int b) const { return mark(b, a) == Mark::Arrow && mark(a, b) == Mark::Arrow; }

    /// Complete graph with o-o edges.
    static Pag complete(std::vector<std::string> nodes);

    bool operator==(const Pag&) const = default;

private:
    std::size_t idx(int a, int b) const { return static_cast<std::size_t>(a) * nodes_.size() + static_cast<std::size_t>(b); }

    std::vector<std::string> nodes_;
    std::vector<Mark> marks_;
};

}  // namespace coat::graph
