#pragma once

#include <adjcheck/graph.hpp>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace adjcheck {

enum class Strategy { All, MinPlus, UserProvided };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::All: return "all";
        case Strategy::MinPlus: return "minplus";
        case Strategy::UserProvided: return "user";
    }
    return "user";
}

inline Strategy parse_strategy(std::string_view s) {
    if (s == "all") return Strategy::All;
    if (s == "minplus" || s == "min+") return Strategy::MinPlus;
    if (s == "user") return Strategy::UserProvided;
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(s) + "' (expected all|minplus)");
}

/// An ordered, duplicate-free list of adjustment sets for one (x, y) pair.
struct AdjustmentCollection {
    std::vector<NodeSet> sets;
    Strategy strategy = Strategy::UserProvided;
    NodeId x = 0;
    NodeId y = 0;
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return sets.size(); }
};

inline void sort_collection(std::vector<NodeSet>& sets) {
    std::sort(sets.begin(), sets.end(), size_then_lex_less);
    sets.erase(std::unique(sets.begin(), sets.end()), sets.end());
}

/// Wraps caller-supplied sets. Only the structural requirements are checked;
/// the sets need not be valid in any particular graph.
inline AdjustmentCollection user_collection(const Dag& g, NodeId x, NodeId y, std::vector<NodeSet> sets) {
    g.check(x);
    g.check(y);
    if (sets.empty()) throw Error(ErrorCode::EmptyInput, "collection needs at least one set");
    for (const auto& z : sets) {
        g.check(z);
        if (z.contains(x) || z.contains(y)) throw Error(ErrorCode::XYInZ, "adjustment set contains x or y");
    }
    sort_collection(sets);
    return {std::move(sets), Strategy::UserProvided, x, y, {}};
}

namespace detail {

/// Backtracking enumeration of every valid set Z with include ⊆ Z ⊆ allow.
///
/// A branch is explored only if An(x, y, include) ∩ allow separates x and y
/// in the proper back-door graph; when any separator exists inside the
/// window, that one does, so dead branches are cut immediately and the
/// enumeration has polynomial delay.
class ValidSetLister {
public:
    ValidSetLister(const Dag& g, NodeId x, NodeId y, std::size_t cap)
        : pbd_(proper_backdoor_graph(g, x, y)), x_(x), y_(y), cap_(cap) {}

    std::vector<NodeSet> run(const NodeSet& allowed) {
        found_.clear();
        list(NodeSet{}, allowed);
        return std::move(found_);
    }

private:
    bool separable(const NodeSet& include, const NodeSet& allow) const {
        NodeSet seeds = include;
        seeds.insert(x_);
        seeds.insert(y_);
        const NodeSet candidate = ancestors(pbd_, seeds) & allow;
        return d_separated(pbd_, {x_}, {y_}, candidate);
    }

    void list(const NodeSet& include, const NodeSet& allow) {
        if (!separable(include, allow)) return;
        if (include == allow) {
            if (found_.size() >= cap_)
                throw Error(ErrorCode::CapExceeded,
                            "more than " + std::to_string(cap_) + " valid adjustment sets; use the minplus strategy");
            found_.push_back(include);
            return;
        }
        const NodeSet free = allow - include;
        const NodeId v = *free.begin();
        NodeSet with = include;
        with.insert(v);
        list(with, allow);
        NodeSet without = allow;
        without.erase(v);
        list(include, without);
    }

    Dag pbd_;
    NodeId x_;
    NodeId y_;
    std::size_t cap_;
    std::vector<NodeSet> found_;
};

/// Undirected graph as sorted adjacency lists.
using Adjacency = std::vector<std::vector<NodeId>>;

inline void add_undirected(Adjacency& adj, NodeId a, NodeId b) {
    if (a == b) return;
    auto link = [&](NodeId u, NodeId v) {
        auto it = std::lower_bound(adj[u].begin(), adj[u].end(), v);
        if (it == adj[u].end() || *it != v) adj[u].insert(it, v);
    };
    link(a, b);
    link(b, a);
}

/// Component of `start` in the graph with `blocked` nodes removed.
inline NodeMask component(const Adjacency& adj, NodeId start, const NodeMask& blocked) {
    NodeMask seen(adj.size(), 0);
    if (blocked[start]) return seen;
    std::vector<NodeId> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : adj[v])
            if (!seen[w] && !blocked[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    return seen;
}

/// Open neighbourhood of the node set `inside`.
inline NodeSet boundary(const Adjacency& adj, const NodeMask& inside) {
    NodeMask out(adj.size(), 0);
    for (NodeId v = 0; v < adj.size(); ++v)
        if (inside[v])
            for (NodeId w : adj[v])
                if (!inside[w]) out[w] = 1;
    return NodeSet::from_mask(out);
}

/// Lists all minimal a-b vertex separators of an undirected graph. Each
/// separator S spawns, for every s in S not adjacent to b, the separator
/// closest to b after the a-side is grown by s and its neighbourhood.
inline std::vector<NodeSet> minimal_separators(const Adjacency& adj, const NodeMask& present, NodeId a, NodeId b) {
    const std::size_t n = adj.size();
    if (std::binary_search(adj[a].begin(), adj[a].end(), b)) return {};

    auto absent = [&] {
        NodeMask m(n, 0);
        for (NodeId v = 0; v < n; ++v) m[v] = !present[v];
        return m;
    }();

    // Separator closest to b once every node of `a_side` and its neighbours is removed.
    auto close_to_b = [&](const NodeMask& a_side) {
        NodeMask blocked = absent;
        for (NodeId v = 0; v < n; ++v)
            if (a_side[v]) {
                blocked[v] = 1;
                for (NodeId w : adj[v]) blocked[w] = 1;
            }
        return boundary(adj, component(adj, b, blocked));
    };

    NodeMask start(n, 0);
    start[a] = 1;
    std::set<NodeSet> seen;
    std::vector<NodeSet> queue{close_to_b(start)};
    seen.insert(queue.front());
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const NodeSet s = queue[head];
        NodeMask blocked = absent;
        for (NodeId v : s) blocked[v] = 1;
        const NodeMask a_comp = component(adj, a, blocked);
        for (NodeId v : s) {
            if (std::binary_search(adj[v].begin(), adj[v].end(), b)) continue;
            NodeMask grown = a_comp;
            grown[v] = 1;
            NodeSet next = close_to_b(grown);
            if (seen.insert(next).second) queue.push_back(std::move(next));
        }
    }
    return queue;
}

}  // namespace detail

/// Every valid adjustment set for (x, y), sorted by size then label.
/// Throws CapExceeded once more than `cap` sets have been found.
inline AdjustmentCollection enumerate_all_valid(const Dag& g, NodeId x, NodeId y,
                                                std::size_t cap = 10'000) {
    g.check(x);
    g.check(y);
    if (x == y) throw Error(ErrorCode::InvalidArgument, "x and y must differ");
    detail::ValidSetLister lister(g, x, y, cap);
    auto sets = lister.run(adjustment_candidates(g, x, y));
    sort_collection(sets);
    return {std::move(sets), Strategy::All, x, y, {}};
}

/// Minimal valid adjustment sets for (x, y).
///
/// Restricts the proper back-door graph to An(x, y), moralizes it, removes
/// forbidden nodes by turning each one's neighbourhood into a clique, and
/// lists the minimal x-y separators of what is left.
inline AdjustmentCollection enumerate_minimal_valid(const Dag& g, NodeId x, NodeId y) {
    g.check(x);
    g.check(y);
    if (x == y || !descendants(g, x).contains(y))
        throw Error(ErrorCode::NotDescendant, g.label(y) + " is not a proper descendant of " + g.label(x));

    const std::size_t n = g.size();
    const Dag pbd = proper_backdoor_graph(g, x, y);
    const NodeMask anc = detail::closure(pbd, {x, y}, detail::Direction::Up);

    detail::Adjacency adj(n);
    for (NodeId v = 0; v < n; ++v) {
        if (!anc[v]) continue;
        const auto& pa = pbd.parents(v);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            detail::add_undirected(adj, pa[i], v);
            for (std::size_t j = i + 1; j < pa.size(); ++j) detail::add_undirected(adj, pa[i], pa[j]);
        }
    }

    NodeMask present = anc;
    const NodeSet allowed = adjustment_candidates(g, x, y);
    for (NodeId v = 0; v < n; ++v) {
        if (!present[v] || v == x || v == y || allowed.contains(v)) continue;
        const std::vector<NodeId> nbrs = adj[v];
        for (std::size_t i = 0; i < nbrs.size(); ++i) {
            auto& list = adj[nbrs[i]];
            list.erase(std::remove(list.begin(), list.end(), v), list.end());
            for (std::size_t j = i + 1; j < nbrs.size(); ++j) detail::add_undirected(adj, nbrs[i], nbrs[j]);
        }
        adj[v].clear();
        present[v] = 0;
    }

    auto sets = detail::minimal_separators(adj, present, x, y);
    if (sets.empty()) throw Error(ErrorCode::InvalidArgument, "no valid adjustment set exists");
    sort_collection(sets);
    return {std::move(sets), Strategy::MinPlus, x, y, {}};
}

/// Drops sets until every remaining set owns a node no other kept set has,
/// without shrinking the union.
///
/// Sets are first picked greedily by how many uncovered nodes they add (ties
/// go to the earlier set); then, while some kept set has no private node, the
/// last such set is removed. A set without a private node lies inside the
/// union of the others, so removal never loses coverage.
inline AdjustmentCollection prune_distinct(const AdjustmentCollection& minimal) {
    if (minimal.sets.empty()) throw Error(ErrorCode::EmptyInput, "nothing to prune");
    const auto& input = minimal.sets;

    NodeSet target;
    for (const auto& z : input) target = target | z;

    std::vector<std::size_t> picked;
    NodeSet covered;
    std::vector<char> used(input.size(), 0);
    while (picked.empty() || covered != target) {
        std::size_t best = input.size();
        std::size_t best_gain = 0;
        for (std::size_t i = 0; i < input.size(); ++i) {
            if (used[i]) continue;
            const std::size_t gain = (input[i] - covered).size();
            if (best == input.size() || gain > best_gain) {
                best = i;
                best_gain = gain;
            }
        }
        used[best] = 1;
        picked.push_back(best);
        covered = covered | input[best];
    }
    std::sort(picked.begin(), picked.end());

    auto has_private = [&](std::size_t pos) {
        NodeSet others;
        for (std::size_t j = 0; j < picked.size(); ++j)
            if (j != pos) others = others | input[picked[j]];
        return !(input[picked[pos]] - others).empty();
    };
    for (;;) {
        if (picked.size() <= 1) break;
        std::size_t drop = picked.size();
        for (std::size_t pos = picked.size(); pos-- > 0;)
            if (!has_private(pos)) {
                drop = pos;
                break;
            }
        if (drop == picked.size()) break;
        picked.erase(picked.begin() + static_cast<std::ptrdiff_t>(drop));
    }

    AdjustmentCollection out{{}, minimal.strategy, minimal.x, minimal.y, minimal.warnings};
    for (std::size_t i : picked) out.sets.push_back(input[i]);

    NodeSet check;
    for (const auto& z : out.sets) check = check | z;
    if (check != target) throw Error(ErrorCode::InvalidArgument, "pruning lost coverage");
    for (std::size_t pos = 0; pos < picked.size() && picked.size() > 1; ++pos)
        if (!has_private(pos)) throw Error(ErrorCode::InvalidArgument, "pruned set without a private node");
    return out;
}

/// Pruned minimal sets plus the non-forbidden set (deduplicated).
inline AdjustmentCollection min_plus_collection(const Dag& g, NodeId x, NodeId y) {
    AdjustmentCollection out = prune_distinct(enumerate_minimal_valid(g, x, y));
    const NodeSet nonforb = adjustment_candidates(g, x, y);

    NodeSet covered;
    for (const auto& z : out.sets) covered = covered | z;
    const NodeSet rest = nonforb - covered;
    if (!out.sets.empty() && !(out.sets.size() == 1 && out.sets.front() == nonforb) &&
        (rest.empty() || d_separated(g, rest, {x}, {})))
        out.warnings.push_back("non-forbidden nodes outside the minimal sets are d-separated from " + g.label(x) +
                               "; the covariance may be rank deficient");

    out.sets.push_back(nonforb);
    sort_collection(out.sets);
    out.strategy = Strategy::MinPlus;
    return out;
}

/// Collection for a testing strategy. UserProvided is rejected here.
inline AdjustmentCollection collection_for(const Dag& g, NodeId x, NodeId y, Strategy strategy,
                                           std::size_t cap = 10'000) {
    switch (strategy) {
        case Strategy::All: return enumerate_all_valid(g, x, y, cap);
        case Strategy::MinPlus: return min_plus_collection(g, x, y);
        case Strategy::UserProvided: break;
    }
    throw Error(ErrorCode::InvalidArgument, "user collections are not derived from a graph");
}

}  // namespace adjcheck
