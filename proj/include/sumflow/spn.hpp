#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sumflow/error.hpp"
#include "sumflow/rng.hpp"

namespace sumflow {

using NodeId = std::uint32_t;

struct Bernoulli {
  double p = 0.5;
  friend bool operator==(const Bernoulli&, const Bernoulli&) = default;
};

/// Degenerate leaf: all mass on one of the two states.
struct Indicator {
  std::uint8_t value = 1;
  friend bool operator==(const Indicator&, const Indicator&) = default;
};

using LeafDistribution = std::variant<Bernoulli, Indicator>;

struct SumNode {
  std::vector<NodeId> children;
  std::vector<double> weights;  // same length as children, >= 0 when valid
};

struct ProductNode {
  std::vector<NodeId> children;
};

struct LeafNode {
  std::int32_t variable = 0;
  LeafDistribution dist;
};

using Node = std::variant<SumNode, ProductNode, LeafNode>;

/// One outgoing edge of a sum node, addressed by child position.
struct EdgeRef {
  NodeId node = 0;
  std::int32_t child = 0;
  friend auto operator<=>(const EdgeRef&, const EdgeRef&) = default;
};

/// Set of variable indices, kept sorted and deduplicated.
class Scope {
 public:
  Scope() = default;
  static Scope single(std::int32_t variable) {
    Scope s;
    s.vars_ = {variable};
    return s;
  }

  bool empty() const { return vars_.empty(); }
  std::size_t size() const { return vars_.size(); }
  bool contains(std::int32_t v) const;
  bool intersects(const Scope& other) const;
  void unite(const Scope& other);
  const std::vector<std::int32_t>& variables() const { return vars_; }
  std::string to_string() const;

  friend bool operator==(const Scope&, const Scope&) = default;

 private:
  std::vector<std::int32_t> vars_;
};

/// One structural problem found by validate(). `kind` is a stable token:
/// "cycle", "unreachable", "incomplete", "non-decomposable",
/// "negative-weight" or "root-scope". `detail` names the node or edge.
struct Violation {
  std::string kind;
  NodeId node = 0;
  std::string detail;
  std::string to_string() const;
};

/// Rooted DAG of sum / product / leaf nodes over binary variables.
///
/// The node store and topology are immutable after construction; only sum
/// weights and leaf parameters may change (set_weight / set_leaf). This
/// lets structural queries (topological order, scopes, edge index) be
/// computed once and shared, and makes const access thread-safe.
class Spn {
 public:
  /// Throws Error on out-of-range child ids, sum children/weights length
  /// mismatch, childless inner nodes, leaf variable outside [0, D), or
  /// Bernoulli p outside [0, 1]. Semantic problems (cycles, scope rule
  /// violations, negative weights, unreachable nodes) are representable and
  /// reported by validate() instead.
  Spn(std::vector<Node> nodes, NodeId root, std::int32_t num_variables);

  std::size_t node_count() const { return nodes_.size(); }
  NodeId root() const { return root_; }
  std::int32_t num_variables() const { return num_variables_; }
  const Node& node(NodeId id) const { return nodes_[id]; }

  bool is_sum(NodeId id) const {
    return std::holds_alternative<SumNode>(nodes_[id]);
  }
  bool is_product(NodeId id) const {
    return std::holds_alternative<ProductNode>(nodes_[id]);
  }
  bool is_leaf(NodeId id) const {
    return std::holds_alternative<LeafNode>(nodes_[id]);
  }
  const SumNode& sum(NodeId id) const { return std::get<SumNode>(nodes_[id]); }
  const ProductNode& product(NodeId id) const {
    return std::get<ProductNode>(nodes_[id]);
  }
  const LeafNode& leaf(NodeId id) const {
    return std::get<LeafNode>(nodes_[id]);
  }

  double weight(EdgeRef e) const {
    return sum(e.node).weights[static_cast<std::size_t>(e.child)];
  }
  void set_weight(EdgeRef e, double w) {
    std::get<SumNode>(nodes_[e.node])
        .weights[static_cast<std::size_t>(e.child)] = w;
  }
  void set_leaf(NodeId id, LeafDistribution dist) {
    std::get<LeafNode>(nodes_[id]).dist = dist;
  }

  /// Children before parents. Covers every node, reachable or not.
  /// Throws Error if the graph has a cycle.
  std::span<const NodeId> topological_order() const;

  bool has_cycle() const { return cache_->cyclic; }
  bool reachable(NodeId id) const { return cache_->reachable[id]; }

  /// Every sum edge, ordered by (node id, child position).
  std::span<const EdgeRef> sum_edges() const { return cache_->sum_edges; }
  std::size_t sum_edge_count() const { return cache_->sum_edges.size(); }
  /// Flat index of `e` within sum_edges().
  std::size_t edge_index(EdgeRef e) const {
    return cache_->edge_offset[e.node] + static_cast<std::size_t>(e.child);
  }

  /// Union of leaf variables below the node. Throws on cyclic graphs.
  const Scope& scope(NodeId id) const;

  std::vector<double> weights_flat() const;
  void set_weights_flat(std::span<const double> w);

  /// All invariant violations: acyclicity, reachability, sum completeness,
  /// product decomposability, weight non-negativity, root scope coverage.
  /// Empty iff the graph is a valid SPN over all num_variables() variables.
  std::vector<Violation> validate() const;

  /// True when every sum's weights add to 1 within `tol`.
  bool is_normalized(double tol = 1e-12) const;

 private:
  struct StructureCache {
    bool cyclic = false;
    NodeId cycle_node = 0;
    std::vector<NodeId> topo;           // empty when cyclic
    std::vector<char> reachable;        // from root
    std::vector<EdgeRef> sum_edges;     // ascending (node, child)
    std::vector<std::size_t> edge_offset;  // per node, into sum_edges
    std::vector<Scope> scopes;          // empty when cyclic
  };

  std::vector<Node> nodes_;
  NodeId root_;
  std::int32_t num_variables_;
  std::shared_ptr<const StructureCache> cache_;
};

/// Children of `node` regardless of its kind (empty span for leaves).
std::span<const NodeId> children_of(const Node& node);

/// Copy the subgraphs rooted at `roots` out of `src` into a fresh node
/// store, preserving sharing and relative topological order.
struct SubgraphCopy {
  std::vector<Node> nodes;
  std::vector<NodeId> mapped_roots;  // one per requested root
};
SubgraphCopy copy_subgraph(const Spn& src, std::span<const NodeId> roots);

/// K-component Bernoulli mixture: root sum over K products, each product
/// holding D Bernoulli leaves with p drawn uniformly from [0.3, 0.7].
/// Root weights are left at zero; callers initialise them explicitly.
Spn build_shallow_mixture(std::int32_t components, std::int32_t num_variables,
                          Rng& rng);

/// Mixture with every parameter given: weights[k] on the root, leaf_p[k][d]
/// on the component leaves.
Spn build_mixture(const std::vector<double>& weights,
                  const std::vector<std::vector<double>>& leaf_p);

}  // namespace sumflow
