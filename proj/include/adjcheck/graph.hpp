#pragma once

#include <adjcheck/error.hpp>

#include <algorithm>
#include <compare>
#include <cstddef>
#include <deque>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace adjcheck {

using NodeId = std::size_t;

/// Membership mask indexed by NodeId.
using NodeMask = std::vector<char>;

/// Sorted, duplicate-free set of node ids. Because a Dag numbers its nodes in
/// label order, iterating a NodeSet visits nodes sorted by label.
class NodeSet {
public:
    using const_iterator = std::vector<NodeId>::const_iterator;

    NodeSet() = default;
    NodeSet(std::initializer_list<NodeId> ids) : ids_(ids) { normalize(); }
    explicit NodeSet(std::vector<NodeId> ids) : ids_(std::move(ids)) { normalize(); }

    static NodeSet from_mask(const NodeMask& mask) {
        NodeSet s;
        for (NodeId v = 0; v < mask.size(); ++v)
            if (mask[v]) s.ids_.push_back(v);
        return s;
    }

    NodeMask mask(std::size_t num_nodes) const {
        NodeMask m(num_nodes, 0);
        for (NodeId v : ids_) m[v] = 1;
        return m;
    }

    bool contains(NodeId v) const { return std::binary_search(ids_.begin(), ids_.end(), v); }

    void insert(NodeId v) {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), v);
        if (it == ids_.end() || *it != v) ids_.insert(it, v);
    }

    void erase(NodeId v) {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), v);
        if (it != ids_.end() && *it == v) ids_.erase(it);
    }

    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const_iterator begin() const noexcept { return ids_.begin(); }
    const_iterator end() const noexcept { return ids_.end(); }
    const std::vector<NodeId>& ids() const noexcept { return ids_; }

    bool is_subset_of(const NodeSet& other) const {
        return std::includes(other.ids_.begin(), other.ids_.end(), ids_.begin(), ids_.end());
    }

    friend bool operator==(const NodeSet&, const NodeSet&) = default;
    friend auto operator<=>(const NodeSet& a, const NodeSet& b) { return a.ids_ <=> b.ids_; }

    friend NodeSet operator|(const NodeSet& a, const NodeSet& b) {
        NodeSet out;
        std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out.ids_));
        return out;
    }
    friend NodeSet operator&(const NodeSet& a, const NodeSet& b) {
        NodeSet out;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out.ids_));
        return out;
    }
    friend NodeSet operator-(const NodeSet& a, const NodeSet& b) {
        NodeSet out;
        std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out.ids_));
        return out;
    }

private:
    void normalize() {
        std::sort(ids_.begin(), ids_.end());
        ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    }

    std::vector<NodeId> ids_;
};

/// Orders sets by cardinality first, then lexicographically by label.
inline bool size_then_lex_less(const NodeSet& a, const NodeSet& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

using LabelEdge = std::pair<std::string, std::string>;
using Edge = std::pair<NodeId, NodeId>;

/// Immutable directed acyclic graph over string-labelled nodes.
///
/// Nodes are renumbered in ascending label order at construction, so NodeId
/// order and label order coincide. Acyclicity is checked once and a
/// topological order is cached.
class Dag {
public:
    Dag() = default;

    Dag(std::vector<std::string> nodes, const std::vector<LabelEdge>& edges) {
        std::sort(nodes.begin(), nodes.end());
        for (std::size_t i = 1; i < nodes.size(); ++i)
            if (nodes[i] == nodes[i - 1]) throw Error(ErrorCode::DuplicateNode, "node '" + nodes[i] + "' declared twice");
        labels_ = std::move(nodes);
        for (NodeId v = 0; v < labels_.size(); ++v) index_.emplace(labels_[v], v);

        std::vector<Edge> ids;
        ids.reserve(edges.size());
        for (const auto& [from, to] : edges) ids.emplace_back(id(from), id(to));
        init(std::move(ids));
    }

    /// Builds from labels already in ascending order and id-based edges.
    static Dag from_ids(std::vector<std::string> sorted_labels, std::vector<Edge> edges) {
        Dag g;
        if (!std::is_sorted(sorted_labels.begin(), sorted_labels.end()))
            throw Error(ErrorCode::InvalidArgument, "labels must be sorted");
        for (std::size_t i = 1; i < sorted_labels.size(); ++i)
            if (sorted_labels[i] == sorted_labels[i - 1])
                throw Error(ErrorCode::DuplicateNode, "node '" + sorted_labels[i] + "' declared twice");
        g.labels_ = std::move(sorted_labels);
        for (NodeId v = 0; v < g.labels_.size(); ++v) g.index_.emplace(g.labels_[v], v);
        for (const auto& [u, v] : edges)
            if (u >= g.labels_.size() || v >= g.labels_.size())
                throw Error(ErrorCode::UnknownNode, "edge endpoint out of range");
        g.init(std::move(edges));
        return g;
    }

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t num_edges() const noexcept { return edges_.size(); }

    const std::string& label(NodeId v) const {
        check(v);
        return labels_[v];
    }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    std::optional<NodeId> find(std::string_view label) const {
        auto it = index_.find(std::string(label));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    NodeId id(std::string_view label) const {
        if (auto v = find(label)) return *v;
        throw Error(ErrorCode::UnknownNode, "unknown node '" + std::string(label) + "'");
    }

    NodeSet set(const std::vector<std::string>& labels) const {
        std::vector<NodeId> ids;
        ids.reserve(labels.size());
        for (const auto& l : labels) ids.push_back(id(l));
        return NodeSet(std::move(ids));
    }

    std::vector<std::string> names(const NodeSet& s) const {
        std::vector<std::string> out;
        out.reserve(s.size());
        for (NodeId v : s) out.push_back(label(v));
        return out;
    }

    NodeSet all_nodes() const {
        std::vector<NodeId> ids(size());
        for (NodeId v = 0; v < size(); ++v) ids[v] = v;
        return NodeSet(std::move(ids));
    }

    const std::vector<NodeId>& parents(NodeId v) const {
        check(v);
        return parents_[v];
    }
    const std::vector<NodeId>& children(NodeId v) const {
        check(v);
        return children_[v];
    }

    bool has_edge(NodeId from, NodeId to) const {
        check(from);
        check(to);
        return std::binary_search(children_[from].begin(), children_[from].end(), to);
    }
    bool adjacent(NodeId a, NodeId b) const { return has_edge(a, b) || has_edge(b, a); }

    /// Edges sorted by (parent, child).
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::vector<NodeId>& topological_order() const noexcept { return topo_; }

    void check(NodeId v) const {
        if (v >= labels_.size()) throw Error(ErrorCode::UnknownNode, "node id " + std::to_string(v) + " out of range");
    }
    void check(const NodeSet& s) const {
        if (!s.empty() && s.ids().back() >= labels_.size())
            throw Error(ErrorCode::UnknownNode, "node id " + std::to_string(s.ids().back()) + " out of range");
    }

    friend bool operator==(const Dag& a, const Dag& b) { return a.labels_ == b.labels_ && a.edges_ == b.edges_; }

private:
    void init(std::vector<Edge> edges) {
        const std::size_t n = labels_.size();
        std::sort(edges.begin(), edges.end());
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto [u, v] = edges[i];
            if (u == v) throw Error(ErrorCode::CycleDetected, "self-loop at '" + labels_[u] + "'");
            if (i > 0 && edges[i - 1] == edges[i])
                throw Error(ErrorCode::DuplicateEdge, "edge " + labels_[u] + " -> " + labels_[v] + " repeated");
        }
        parents_.assign(n, {});
        children_.assign(n, {});
        for (const auto& [u, v] : edges) {
            children_[u].push_back(v);
            parents_[v].push_back(u);
        }
        for (auto& p : parents_) std::sort(p.begin(), p.end());
        edges_ = std::move(edges);

        // Kahn's algorithm; the smallest ready id goes first so the order is canonical.
        std::vector<std::size_t> indegree(n);
        for (NodeId v = 0; v < n; ++v) indegree[v] = parents_[v].size();
        std::vector<NodeId> ready;
        for (NodeId v = n; v-- > 0;)
            if (indegree[v] == 0) ready.push_back(v);
        topo_.clear();
        while (!ready.empty()) {
            std::pop_heap(ready.begin(), ready.end(), std::greater<>{});
            NodeId v = ready.back();
            ready.pop_back();
            topo_.push_back(v);
            for (NodeId c : children_[v])
                if (--indegree[c] == 0) {
                    ready.push_back(c);
                    std::push_heap(ready.begin(), ready.end(), std::greater<>{});
                }
        }
        if (topo_.size() != n) throw Error(ErrorCode::CycleDetected, "graph contains a directed cycle");
    }

    std::vector<std::string> labels_;
    std::unordered_map<std::string, NodeId> index_;
    std::vector<std::vector<NodeId>> parents_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<Edge> edges_;
    std::vector<NodeId> topo_;
};

inline Dag build_dag(std::vector<std::string> nodes, const std::vector<LabelEdge>& edges) {
    return Dag(std::move(nodes), edges);
}

namespace detail {

enum class Direction { Up, Down };

inline NodeMask closure(const Dag& g, const NodeSet& seeds, Direction dir) {
    g.check(seeds);
    NodeMask seen(g.size(), 0);
    std::vector<NodeId> stack(seeds.begin(), seeds.end());
    for (NodeId v : seeds) seen[v] = 1;
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        const auto& next = dir == Direction::Down ? g.children(v) : g.parents(v);
        for (NodeId w : next)
            if (!seen[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    return seen;
}

}  // namespace detail

/// Reflexive-transitive closure along directed edges.
inline NodeSet descendants(const Dag& g, const NodeSet& s) {
    return NodeSet::from_mask(detail::closure(g, s, detail::Direction::Down));
}

inline NodeSet ancestors(const Dag& g, const NodeSet& s) {
    return NodeSet::from_mask(detail::closure(g, s, detail::Direction::Up));
}

inline NodeSet parents(const Dag& g, const NodeSet& s) {
    g.check(s);
    std::vector<NodeId> out;
    for (NodeId v : s) out.insert(out.end(), g.parents(v).begin(), g.parents(v).end());
    return NodeSet(std::move(out));
}

inline NodeSet children(const Dag& g, const NodeSet& s) {
    g.check(s);
    std::vector<NodeId> out;
    for (NodeId v : s) out.insert(out.end(), g.children(v).begin(), g.children(v).end());
    return NodeSet(std::move(out));
}

/// Nodes reachable from `a` along a path that is active given `z`.
///
/// Walks states (node, arrival direction). Arriving from a child ("up") the
/// node is a non-collider in every continuation; arriving from a parent
/// ("down") it is a collider when continuing to a parent, which is allowed
/// only if the node has a descendant in `z`.
inline NodeMask d_connected_mask(const Dag& g, const NodeSet& a, const NodeSet& z) {
    g.check(a);
    g.check(z);
    const std::size_t n = g.size();
    const NodeMask in_z = z.mask(n);
    const NodeMask anc_z = detail::closure(g, z, detail::Direction::Up);

    NodeMask reached(n, 0);
    std::vector<char> visited_up(n, 0), visited_down(n, 0);
    std::vector<std::pair<NodeId, detail::Direction>> stack;
    for (NodeId v : a) stack.emplace_back(v, detail::Direction::Up);

    while (!stack.empty()) {
        auto [v, dir] = stack.back();
        stack.pop_back();
        auto& visited = dir == detail::Direction::Up ? visited_up : visited_down;
        if (visited[v]) continue;
        visited[v] = 1;
        if (!in_z[v]) reached[v] = 1;

        if (dir == detail::Direction::Up) {
            if (in_z[v]) continue;
            for (NodeId p : g.parents(v)) stack.emplace_back(p, detail::Direction::Up);
            for (NodeId c : g.children(v)) stack.emplace_back(c, detail::Direction::Down);
        } else {
            if (!in_z[v])
                for (NodeId c : g.children(v)) stack.emplace_back(c, detail::Direction::Down);
            if (anc_z[v])
                for (NodeId p : g.parents(v)) stack.emplace_back(p, detail::Direction::Up);
        }
    }
    return reached;
}

inline bool d_separated(const Dag& g, const NodeSet& a, const NodeSet& b, const NodeSet& z) {
    g.check(a);
    g.check(b);
    g.check(z);
    if (!(a & b).empty() || !(a & z).empty() || !(b & z).empty())
        throw Error(ErrorCode::OverlappingSets, "d-separation requires pairwise disjoint sets");
    const NodeMask reached = d_connected_mask(g, a, z);
    return std::none_of(b.begin(), b.end(), [&](NodeId v) { return reached[v] != 0; });
}

/// Nodes on directed paths from x to y, excluding x. Empty if y is not a
/// descendant of x.
inline NodeSet causal_nodes(const Dag& g, NodeId x, NodeId y) {
    g.check(x);
    g.check(y);
    if (x == y) return {};
    const NodeMask de = detail::closure(g, {x}, detail::Direction::Down);
    if (!de[y]) return {};
    const NodeMask an = detail::closure(g, {y}, detail::Direction::Up);
    NodeSet out;
    for (NodeId v = 0; v < g.size(); ++v)
        if (v != x && de[v] && an[v]) out.insert(v);
    return out;
}

/// Descendants of the causal nodes, plus x itself.
inline NodeSet forbidden_nodes(const Dag& g, NodeId x, NodeId y) {
    NodeSet out = descendants(g, causal_nodes(g, x, y));
    out.insert(x);
    return out;
}

/// V \ forb(x, y) with x and y removed: the candidate pool for adjustment.
inline NodeSet adjustment_candidates(const Dag& g, NodeId x, NodeId y) {
    NodeSet out = g.all_nodes() - forbidden_nodes(g, x, y);
    out.erase(x);
    out.erase(y);
    return out;
}

/// The graph with the first edge of every directed x -> y path removed.
inline Dag proper_backdoor_graph(const Dag& g, NodeId x, NodeId y) {
    const NodeSet cn = causal_nodes(g, x, y);
    std::vector<Edge> kept;
    kept.reserve(g.num_edges());
    for (const auto& e : g.edges())
        if (!(e.first == x && cn.contains(e.second))) kept.push_back(e);
    return Dag::from_ids(g.labels(), std::move(kept));
}

inline bool is_valid_adjustment_set(const Dag& g, NodeId x, NodeId y, const NodeSet& z) {
    g.check(x);
    g.check(y);
    g.check(z);
    if (z.contains(x) || z.contains(y)) throw Error(ErrorCode::XYInZ, "adjustment set contains x or y");
    if (x == y) return false;
    if (!(z & forbidden_nodes(g, x, y)).empty()) return false;
    return d_separated(proper_backdoor_graph(g, x, y), {x}, {y}, z);
}

inline NodeSet descendants(const Dag& g, NodeId v) { return descendants(g, NodeSet{v}); }
inline NodeSet ancestors(const Dag& g, NodeId v) { return ancestors(g, NodeSet{v}); }

// ---------------------------------------------------------------------------
// Text format: one `A -> B` per line, `node C` declares a node, `#` comments.

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline bool valid_label(std::string_view s) {
    return !s.empty() && s.find_first_of(" \t,;:#") == std::string_view::npos && s.find("->") == std::string_view::npos;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Error parse_error(std::size_t line_no, const std::string& what) {
    return Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + what);
}

}  // namespace detail

inline Dag parse_graph(std::string_view text) {
    std::vector<std::string> nodes;
    std::vector<LabelEdge> edges;
    std::unordered_map<std::string, bool> known;
    auto declare = [&](const std::string& label) {
        if (known.emplace(label, true).second) nodes.push_back(label);
    };

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = std::min(text.find('\n', pos), text.size());
        const std::string_view line = detail::trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;

        if (line.starts_with("node ") || line.starts_with("node\t")) {
            const auto label = detail::trim(line.substr(5));
            if (!detail::valid_label(label)) throw detail::parse_error(line_no, "bad node label");
            declare(std::string(label));
            continue;
        }
        const auto arrow = line.find("->");
        if (arrow == std::string_view::npos) throw detail::parse_error(line_no, "expected 'A -> B' or 'node A'");
        const auto from = detail::trim(line.substr(0, arrow));
        const auto to = detail::trim(line.substr(arrow + 2));
        if (!detail::valid_label(from) || !detail::valid_label(to))
            throw detail::parse_error(line_no, "bad edge endpoints");
        declare(std::string(from));
        declare(std::string(to));
        edges.emplace_back(std::string(from), std::string(to));
    }
    return Dag(std::move(nodes), edges);
}

inline Dag load_graph(const std::string& path) { return parse_graph(detail::read_file(path)); }

/// Canonical form: isolated nodes first as `node` lines, then edges sorted by
/// (parent label, child label).
inline std::string write_graph(const Dag& g) {
    std::string out;
    for (NodeId v = 0; v < g.size(); ++v)
        if (g.parents(v).empty() && g.children(v).empty()) out += "node " + g.label(v) + "\n";
    for (const auto& [u, v] : g.edges()) out += g.label(u) + " -> " + g.label(v) + "\n";
    return out;
}

}  // namespace adjcheck
