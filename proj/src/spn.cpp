#include "sumflow/spn.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace sumflow {

bool Scope::contains(std::int32_t v) const {
  return std::binary_search(vars_.begin(), vars_.end(), v);
}

bool Scope::intersects(const Scope& other) const {
  auto a = vars_.begin();
  auto b = other.vars_.begin();
  while (a != vars_.end() && b != other.vars_.end()) {
    if (*a == *b) return true;
    if (*a < *b) {
      ++a;
    } else {
      ++b;
    }
  }
  return false;
}

void Scope::unite(const Scope& other) {
  std::vector<std::int32_t> merged;
  merged.reserve(vars_.size() + other.vars_.size());
  std::set_union(vars_.begin(), vars_.end(), other.vars_.begin(),
                 other.vars_.end(), std::back_inserter(merged));
  vars_ = std::move(merged);
}

std::string Scope::to_string() const {
  std::string out = "{";
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(vars_[i]);
  }
  out += "}";
  return out;
}

std::string Violation::to_string() const {
  return kind + " at node " + std::to_string(node) +
         (detail.empty() ? "" : ": " + detail);
}

std::span<const NodeId> children_of(const Node& node) {
  if (const auto* s = std::get_if<SumNode>(&node)) return s->children;
  if (const auto* p = std::get_if<ProductNode>(&node)) return p->children;
  return {};
}

namespace {

// Iterative post-order over all nodes; fills topo (children first) and
// detects cycles via colouring. Works on disconnected stores.
struct TopoResult {
  bool cyclic = false;
  NodeId cycle_node = 0;
  std::vector<NodeId> order;
};

TopoResult topo_sort(const std::vector<Node>& nodes) {
  enum : char { kWhite = 0, kGrey = 1, kBlack = 2 };
  TopoResult result;
  std::vector<char> colour(nodes.size(), kWhite);
  result.order.reserve(nodes.size());
  // frame: (node, next child index)
  std::vector<std::pair<NodeId, std::size_t>> stack;
  for (NodeId start = 0; start < nodes.size(); ++start) {
    if (colour[start] != kWhite) continue;
    stack.emplace_back(start, 0);
    colour[start] = kGrey;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      auto kids = children_of(nodes[id]);
      if (next < kids.size()) {
        NodeId child = kids[next++];
        if (colour[child] == kGrey) {
          result.cyclic = true;
          result.cycle_node = child;
          return result;
        }
        if (colour[child] == kWhite) {
          colour[child] = kGrey;
          stack.emplace_back(child, 0);
        }
      } else {
        colour[id] = kBlack;
        result.order.push_back(id);
        stack.pop_back();
      }
    }
  }
  return result;
}

std::vector<char> reachable_from(const std::vector<Node>& nodes, NodeId root) {
  std::vector<char> seen(nodes.size(), 0);
  std::vector<NodeId> stack = {root};
  seen[root] = 1;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId child : children_of(nodes[id])) {
      if (!seen[child]) {
        seen[child] = 1;
        stack.push_back(child);
      }
    }
  }
  return seen;
}

}  // namespace

Spn::Spn(std::vector<Node> nodes, NodeId root, std::int32_t num_variables)
    : nodes_(std::move(nodes)), root_(root), num_variables_(num_variables) {
  if (nodes_.empty()) throw Error("spn: empty node store");
  if (root_ >= nodes_.size())
    throw Error("spn: root id " + std::to_string(root_) + " out of range");
  if (num_variables_ <= 0) throw Error("spn: num_variables must be positive");

  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    const std::string at = "node " + std::to_string(id);
    if (const auto* s = std::get_if<SumNode>(&n)) {
      if (s->children.empty()) throw Error("spn: sum with no children at " + at);
      if (s->children.size() != s->weights.size())
        throw Error("spn: children/weights length mismatch at " + at);
    } else if (const auto* p = std::get_if<ProductNode>(&n)) {
      if (p->children.empty())
        throw Error("spn: product with no children at " + at);
    } else {
      const auto& l = std::get<LeafNode>(n);
      if (l.variable < 0 || l.variable >= num_variables_)
        throw Error("spn: leaf variable " + std::to_string(l.variable) +
                    " out of range at " + at);
      if (const auto* b = std::get_if<Bernoulli>(&l.dist)) {
        if (!(b->p >= 0.0 && b->p <= 1.0))
          throw Error("spn: Bernoulli p outside [0,1] at " + at);
      } else if (std::get<Indicator>(l.dist).value > 1) {
        throw Error("spn: indicator value must be 0 or 1 at " + at);
      }
    }
    for (NodeId child : children_of(n)) {
      if (child >= nodes_.size())
        throw Error("spn: child id " + std::to_string(child) +
                    " out of range at " + at);
    }
  }

  auto cache = std::make_shared<StructureCache>();
  TopoResult topo = topo_sort(nodes_);
  cache->cyclic = topo.cyclic;
  cache->cycle_node = topo.cycle_node;
  if (!topo.cyclic) cache->topo = std::move(topo.order);
  cache->reachable = reachable_from(nodes_, root_);

  cache->edge_offset.assign(nodes_.size() + 1, 0);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    std::size_t count = 0;
    if (const auto* s = std::get_if<SumNode>(&nodes_[id]))
      count = s->children.size();
    cache->edge_offset[id + 1] = cache->edge_offset[id] + count;
  }
  cache->sum_edges.reserve(cache->edge_offset.back());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (const auto* s = std::get_if<SumNode>(&nodes_[id])) {
      for (std::size_t c = 0; c < s->children.size(); ++c)
        cache->sum_edges.push_back({id, static_cast<std::int32_t>(c)});
    }
  }

  if (!cache->cyclic) {
    cache->scopes.resize(nodes_.size());
    for (NodeId id : cache->topo) {
      Scope& sc = cache->scopes[id];
      if (const auto* l = std::get_if<LeafNode>(&nodes_[id])) {
        sc = Scope::single(l->variable);
      } else {
        for (NodeId child : children_of(nodes_[id]))
          sc.unite(cache->scopes[child]);
      }
    }
  }

  cache_ = std::move(cache);
}

std::span<const NodeId> Spn::topological_order() const {
  if (cache_->cyclic)
    throw Error("spn: graph has a cycle through node " +
                std::to_string(cache_->cycle_node));
  return cache_->topo;
}

const Scope& Spn::scope(NodeId id) const {
  if (cache_->cyclic)
    throw Error("spn: scope undefined, graph has a cycle through node " +
                std::to_string(cache_->cycle_node));
  return cache_->scopes[id];
}

std::vector<double> Spn::weights_flat() const {
  std::vector<double> out;
  out.reserve(sum_edge_count());
  for (EdgeRef e : sum_edges()) out.push_back(weight(e));
  return out;
}

void Spn::set_weights_flat(std::span<const double> w) {
  if (w.size() != sum_edge_count())
    throw Error("spn: flat weight vector has wrong length");
  std::size_t i = 0;
  for (EdgeRef e : sum_edges()) set_weight(e, w[i++]);
}

std::vector<Violation> Spn::validate() const {
  std::vector<Violation> out;
  if (cache_->cyclic) {
    out.push_back({"cycle", cache_->cycle_node,
                   "a path from this node leads back to it"});
    // Scope-based checks are undefined on cyclic graphs; report the weight
    // and reachability problems that are still well defined, then stop.
    for (EdgeRef e : sum_edges()) {
      if (weight(e) < 0.0)
        out.push_back({"negative-weight", e.node,
                       "child " + std::to_string(e.child) + " has weight " +
                           std::to_string(weight(e))});
    }
    return out;
  }

  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!cache_->reachable[id])
      out.push_back({"unreachable", id, "not reachable from the root"});
  }

  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (const auto* s = std::get_if<SumNode>(&n)) {
      const Scope& first = scope(s->children[0]);
      for (std::size_t c = 1; c < s->children.size(); ++c) {
        if (scope(s->children[c]) != first) {
          out.push_back({"incomplete", id,
                         "child " + std::to_string(c) + " has scope " +
                             scope(s->children[c]).to_string() +
                             ", child 0 has " + first.to_string()});
        }
      }
      for (std::size_t c = 0; c < s->weights.size(); ++c) {
        if (s->weights[c] < 0.0)
          out.push_back({"negative-weight", id,
                         "child " + std::to_string(c) + " has weight " +
                             std::to_string(s->weights[c])});
      }
    } else if (const auto* p = std::get_if<ProductNode>(&n)) {
      // Pairwise disjointness via running union: overlap is caught when a
      // child intersects the union of all previous children.
      Scope seen;
      for (std::size_t c = 0; c < p->children.size(); ++c) {
        const Scope& sc = scope(p->children[c]);
        if (seen.intersects(sc)) {
          out.push_back({"non-decomposable", id,
                         "child " + std::to_string(c) + " scope " +
                             sc.to_string() + " overlaps earlier children"});
        }
        seen.unite(sc);
      }
    }
  }

  Scope full;
  for (std::int32_t v = 0; v < num_variables_; ++v) full.unite(Scope::single(v));
  if (scope(root_) != full) {
    out.push_back({"root-scope", root_,
                   "root scope " + scope(root_).to_string() + " must cover " +
                       std::to_string(num_variables_) + " variables"});
  }
  return out;
}

bool Spn::is_normalized(double tol) const {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (const auto* s = std::get_if<SumNode>(&nodes_[id])) {
      double total = 0.0;
      for (double w : s->weights) total += w;
      if (std::abs(total - 1.0) > tol) return false;
    }
  }
  return true;
}

SubgraphCopy copy_subgraph(const Spn& src, std::span<const NodeId> roots) {
  SubgraphCopy out;
  std::unordered_map<NodeId, NodeId> remap;
  // Emit in source topological order restricted to nodes below the roots,
  // so children land before parents and relative order is preserved.
  std::vector<char> wanted(src.node_count(), 0);
  std::vector<NodeId> stack(roots.begin(), roots.end());
  for (NodeId r : roots) wanted[r] = 1;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId child : children_of(src.node(id))) {
      if (!wanted[child]) {
        wanted[child] = 1;
        stack.push_back(child);
      }
    }
  }
  for (NodeId id : src.topological_order()) {
    if (!wanted[id]) continue;
    Node copy = src.node(id);
    if (auto* s = std::get_if<SumNode>(&copy)) {
      for (NodeId& c : s->children) c = remap.at(c);
    } else if (auto* p = std::get_if<ProductNode>(&copy)) {
      for (NodeId& c : p->children) c = remap.at(c);
    }
    remap[id] = static_cast<NodeId>(out.nodes.size());
    out.nodes.push_back(std::move(copy));
  }
  out.mapped_roots.reserve(roots.size());
  for (NodeId r : roots) out.mapped_roots.push_back(remap.at(r));
  return out;
}

Spn build_shallow_mixture(std::int32_t components, std::int32_t num_variables,
                          Rng& rng) {
  if (components <= 0) throw Error("mixture: need at least one component");
  if (num_variables <= 0) throw Error("mixture: need at least one variable");
  std::vector<Node> nodes;
  nodes.reserve(static_cast<std::size_t>(components) *
                    (static_cast<std::size_t>(num_variables) + 1) +
                1);
  std::vector<NodeId> component_ids;
  for (std::int32_t k = 0; k < components; ++k) {
    ProductNode prod;
    for (std::int32_t d = 0; d < num_variables; ++d) {
      nodes.push_back(LeafNode{d, Bernoulli{rng.uniform(0.3, 0.7)}});
      prod.children.push_back(static_cast<NodeId>(nodes.size() - 1));
    }
    nodes.push_back(std::move(prod));
    component_ids.push_back(static_cast<NodeId>(nodes.size() - 1));
  }
  SumNode root;
  root.children = component_ids;
  root.weights.assign(component_ids.size(), 0.0);
  nodes.push_back(std::move(root));
  const NodeId root_id = static_cast<NodeId>(nodes.size() - 1);
  return Spn(std::move(nodes), root_id, num_variables);
}

Spn build_mixture(const std::vector<double>& weights,
                  const std::vector<std::vector<double>>& leaf_p) {
  if (weights.size() != leaf_p.size() || weights.empty())
    throw Error("mixture: weights and leaf_p must have equal nonzero length");
  const std::size_t dims = leaf_p[0].size();
  std::vector<Node> nodes;
  std::vector<NodeId> component_ids;
  for (std::size_t k = 0; k < leaf_p.size(); ++k) {
    if (leaf_p[k].size() != dims)
      throw Error("mixture: ragged leaf_p");
    ProductNode prod;
    for (std::size_t d = 0; d < dims; ++d) {
      nodes.push_back(
          LeafNode{static_cast<std::int32_t>(d), Bernoulli{leaf_p[k][d]}});
      prod.children.push_back(static_cast<NodeId>(nodes.size() - 1));
    }
    nodes.push_back(std::move(prod));
    component_ids.push_back(static_cast<NodeId>(nodes.size() - 1));
  }
  SumNode root;
  root.children = component_ids;
  root.weights = weights;
  nodes.push_back(std::move(root));
  const NodeId root_id = static_cast<NodeId>(nodes.size() - 1);
  return Spn(std::move(nodes), root_id, static_cast<std::int32_t>(dims));
}

}  // namespace sumflow
