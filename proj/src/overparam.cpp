#include "sumflow/overparam.hpp"

#include <cmath>
#include <unordered_map>

namespace sumflow {

namespace {

std::uint64_t ipow_capped(std::uint64_t base, std::uint32_t exp,
                          std::uint64_t cap) {
  std::uint64_t r = 1;
  for (std::uint32_t i = 0; i < exp; ++i) {
    if (r > cap / std::max<std::uint64_t>(base, 1)) return cap + 1;
    r *= base;
  }
  return r;
}

}  // namespace

DeepMixture overparameterize(const Spn& mixture, std::int32_t layers,
                             std::int32_t branching) {
  if (layers < 1) throw Error("overparameterize: layers must be >= 1");
  if (branching < 1) throw Error("overparameterize: branching must be >= 1");
  if (!mixture.is_sum(mixture.root()))
    throw Error("overparameterize: input root must be a sum node");

  const SumNode& old_root = mixture.sum(mixture.root());
  const std::size_t K = old_root.children.size();
  const std::uint64_t b = static_cast<std::uint64_t>(branching);
  const std::uint32_t L = static_cast<std::uint32_t>(layers);

  if (layers == 1) {
    DeepMixture out{mixture, {}};
    out.map.chains.resize(K);
    for (std::size_t k = 0; k < K; ++k)
      out.map.chains[k] = {
          EdgeRef{mixture.root(), static_cast<std::int32_t>(k)}};
    return out;
  }

  // Fan-in per level: the root has K / b^(L-1) children, every other new
  // sum has exactly `branching`; components must divide evenly.
  const std::uint64_t top_groups = ipow_capped(b, L - 1, K);
  if (top_groups > K || K % top_groups != 0)
    throw Error("overparameterize: components (" + std::to_string(K) +
                ") not divisible by branching^(layers-1)");

  SubgraphCopy copied = copy_subgraph(mixture, old_root.children);
  std::vector<Node> nodes = std::move(copied.nodes);

  // sums_at[j] lists node ids of the depth-j sums, j = layers-1 .. 1;
  // depth-L "entities" are the components themselves.
  std::vector<std::vector<NodeId>> sums_at(L);
  std::vector<NodeId> below = copied.mapped_roots;  // depth j+1 entities
  for (std::uint32_t j = L - 1; j >= 1; --j) {
    const std::size_t m = below.size() / static_cast<std::size_t>(b);
    std::vector<NodeId> level(m);
    for (std::size_t i = 0; i < m; ++i) {
      SumNode s;
      for (std::uint64_t t = 0; t < b; ++t) {
        const std::size_t entity = i * static_cast<std::size_t>(b) + t;
        s.children.push_back(below[entity]);
        // The deepest new edges carry the original mixture weights so the
        // transform is density preserving; all other new edges carry 1.
        s.weights.push_back(j == L - 1 ? old_root.weights[entity] : 1.0);
      }
      nodes.push_back(std::move(s));
      level[i] = static_cast<NodeId>(nodes.size() - 1);
    }
    sums_at[j] = level;
    below = std::move(level);
  }

  SumNode root;
  root.children = below;
  root.weights.assign(below.size(), 1.0);
  nodes.push_back(std::move(root));
  const NodeId root_id = static_cast<NodeId>(nodes.size() - 1);

  DeepMixture out{Spn(std::move(nodes), root_id, mixture.num_variables()),
                  {}};
  out.map.chains.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& chain = out.map.chains[k];
    chain.reserve(L);
    // entity index (1-based) of the depth-(l+1) node on this path
    std::uint64_t prev_entity = 1;  // the root
    for (std::uint32_t l = 0; l < L; ++l) {
      const std::uint64_t group = ipow_capped(b, L - 1 - l, K);
      const std::uint64_t entity = k / group + 1;  // = ceil((k+1)/group)
      const NodeId parent = l == 0 ? root_id : sums_at[l][prev_entity - 1];
      const std::int32_t pos =
          l == 0 ? static_cast<std::int32_t>(entity - 1)
                 : static_cast<std::int32_t>((entity - 1) % b);
      chain.push_back({parent, pos});
      prev_entity = entity;
    }
  }
  return out;
}

double effective_weight(const Spn& spn, const LayerIndexMap& map,
                        std::size_t k) {
  double w = 1.0;
  for (EdgeRef e : map.chains[k]) w *= spn.weight(e);
  return w;
}

std::vector<double> effective_weights(const Spn& spn,
                                      const LayerIndexMap& map) {
  std::vector<double> out(map.components());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = effective_weight(spn, map, k);
  return out;
}

void match_weights(Spn& spn, const LayerIndexMap& map,
                   std::span<const double> component_weights) {
  if (component_weights.size() != map.components())
    throw Error("match_weights: weight count does not match components");
  for (std::size_t k = 0; k < map.components(); ++k) {
    const auto& chain = map.chains[k];
    if (chain.empty()) throw Error("match_weights: empty chain");
    for (std::size_t l = 0; l + 1 < chain.size(); ++l)
      spn.set_weight(chain[l], 1.0);
    spn.set_weight(chain.back(), component_weights[k]);
  }
}

void match_weights(Spn& spn, const LayerIndexMap& map,
                   std::span<const double> component_weights,
                   std::span<const std::vector<double>> split) {
  if (component_weights.size() != map.components() ||
      split.size() != map.components())
    throw Error("match_weights: weight count does not match components");

  // Shared edges must receive one unambiguous value, and each chain's
  // product must reproduce the requested component weight.
  std::unordered_map<std::uint64_t, double> assigned;
  for (std::size_t k = 0; k < map.components(); ++k) {
    const auto& chain = map.chains[k];
    if (split[k].size() != chain.size())
      throw Error("match_weights: split for component " + std::to_string(k) +
                  " has wrong length");
    double prod = 1.0;
    for (std::size_t l = 0; l < chain.size(); ++l) {
      prod *= split[k][l];
      const std::uint64_t key =
          (static_cast<std::uint64_t>(chain[l].node) << 32) |
          static_cast<std::uint32_t>(chain[l].child);
      auto [it, fresh] = assigned.emplace(key, split[k][l]);
      if (!fresh && it->second != split[k][l])
        throw Error("match_weights: conflicting values for a shared edge at "
                    "component " +
                    std::to_string(k));
    }
    const double want = component_weights[k];
    const double tol = 1e-9 * std::max({std::abs(want), std::abs(prod), 1e-30});
    if (std::abs(prod - want) > tol)
      throw Error("match_weights: split product for component " +
                  std::to_string(k) + " misses the target weight");
  }
  for (std::size_t k = 0; k < map.components(); ++k) {
    const auto& chain = map.chains[k];
    for (std::size_t l = 0; l < chain.size(); ++l)
      spn.set_weight(chain[l], split[k][l]);
  }
}

void initialize_near_zero(Spn& spn, double scale, Rng& rng) {
  if (!(scale > 0.0)) throw Error("initialize_near_zero: scale must be > 0");
  for (EdgeRef e : spn.sum_edges()) spn.set_weight(e, rng.positive_uniform(scale));
}

namespace {

constexpr std::uint64_t kSat = ~std::uint64_t{0};

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return a > kSat - b ? kSat : a + b;
}

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a == 0 || b == 0) return 0;
  return a > kSat / b ? kSat : a * b;
}

}  // namespace

std::uint64_t count_induced_trees(const Spn& spn) {
  std::vector<std::uint64_t> count(spn.node_count(), 0);
  for (NodeId id : spn.topological_order()) {
    if (spn.is_leaf(id)) {
      count[id] = 1;
    } else if (spn.is_sum(id)) {
      std::uint64_t total = 0;
      for (NodeId c : spn.sum(id).children) total = sat_add(total, count[c]);
      count[id] = total;
    } else {
      std::uint64_t total = 1;
      for (NodeId c : spn.product(id).children)
        total = sat_mul(total, count[c]);
      count[id] = total;
    }
  }
  return count[spn.root()];
}

namespace {

void enumerate_rec(const Spn& spn, std::vector<NodeId> agenda,
                   InducedTree partial, std::vector<InducedTree>& out) {
  while (!agenda.empty()) {
    const NodeId id = agenda.back();
    agenda.pop_back();
    if (spn.is_leaf(id)) {
      partial.leaves.push_back(id);
      continue;
    }
    if (spn.is_product(id)) {
      const auto& kids = spn.product(id).children;
      for (auto it = kids.rbegin(); it != kids.rend(); ++it)
        agenda.push_back(*it);
      continue;
    }
    const SumNode& s = spn.sum(id);
    for (std::size_t c = 0; c < s.children.size(); ++c) {
      std::vector<NodeId> next_agenda = agenda;
      next_agenda.push_back(s.children[c]);
      InducedTree next_partial = partial;
      next_partial.edges.push_back({id, static_cast<std::int32_t>(c)});
      enumerate_rec(spn, std::move(next_agenda), std::move(next_partial), out);
    }
    return;
  }
  partial.weight_product = 1.0;
  for (EdgeRef e : partial.edges) partial.weight_product *= spn.weight(e);
  out.push_back(std::move(partial));
}

}  // namespace

std::vector<InducedTree> enumerate_induced_trees(const Spn& spn,
                                                 std::size_t cap) {
  const std::uint64_t n = count_induced_trees(spn);
  if (n > cap)
    throw Error("enumerate_induced_trees: " +
                (n == kSat ? std::string("more than 2^64-1")
                           : std::to_string(n)) +
                " trees exceeds cap " + std::to_string(cap));
  std::vector<InducedTree> out;
  out.reserve(static_cast<std::size_t>(n));
  enumerate_rec(spn, {spn.root()}, {}, out);
  return out;
}

double mixture_eval(std::span<const InducedTree> trees, const Spn& spn,
                    const Assignment& x) {
  std::vector<double> terms;
  terms.reserve(trees.size());
  for (const InducedTree& tree : trees) {
    double log_term = 0.0;
    for (EdgeRef e : tree.edges) log_term += std::log(spn.weight(e));
    for (NodeId leaf : tree.leaves)
      log_term += leaf_log_mass(spn.leaf(leaf), x[spn.leaf(leaf).variable]);
    terms.push_back(log_term);
  }
  return log_sum_exp(terms);
}

LayerIndexMap layer_map_from_trees(std::span<const InducedTree> trees) {
  LayerIndexMap map;
  map.chains.reserve(trees.size());
  for (const InducedTree& tree : trees) map.chains.push_back(tree.edges);
  return map;
}

}  // namespace sumflow
