#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sumflow/evaluation.hpp"
#include "sumflow/rng.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

/// For each mixture component k, the sum edges whose weights multiply into
/// that component's effective weight, ordered from the root downwards.
/// Edges may be shared between chains (branching > 1).
struct LayerIndexMap {
  std::vector<std::vector<EdgeRef>> chains;

  std::size_t components() const { return chains.size(); }
  std::size_t depth(std::size_t k) const { return chains[k].size(); }
};

struct DeepMixture {
  Spn spn;
  LayerIndexMap map;
};

/// Replace the root of a K-component mixture by a tower of sum nodes with
/// `layers` sum edges on every root-to-component path. `branching` controls
/// sharing: branching 1 gives K independent unary chains; branching b > 1
/// groups components b-fold per level (requires K divisible by b^(layers-1)).
///
/// The component subgraphs are copied unchanged (sharing preserved). New
/// weights are chosen so the represented density is untouched: the edge
/// closest to component k carries the old root weight w_k, every other new
/// edge carries 1. layers == 1 returns a plain copy.
DeepMixture overparameterize(const Spn& mixture, std::int32_t layers,
                             std::int32_t branching);

/// Product of the chain weights for component k, multiplied root-to-leaf.
double effective_weight(const Spn& spn, const LayerIndexMap& map,
                        std::size_t k);
std::vector<double> effective_weights(const Spn& spn,
                                      const LayerIndexMap& map);

/// Set chain weights so that component k's effective weight equals
/// component_weights[k], using the canonical split (all ones, last edge
/// carries the full weight).
void match_weights(Spn& spn, const LayerIndexMap& map,
                   std::span<const double> component_weights);

/// Same, but with a caller-chosen factorisation: split[k][l] is assigned to
/// chain k's l-th edge. Rejects splits that disagree on shared edges or
/// whose product misses component_weights[k] by more than 1e-9 relative.
void match_weights(Spn& spn, const LayerIndexMap& map,
                   std::span<const double> component_weights,
                   std::span<const std::vector<double>> split);

/// Every sum weight independently uniform in (0, scale]; strictly positive
/// so that log-space evaluation never sees an all-zero sum.
void initialize_near_zero(Spn& spn, double scale, Rng& rng);

/// One monomial of the network polynomial: a tree picking one child per sum
/// and all children per product (Zhao-style induced tree).
struct InducedTree {
  std::vector<EdgeRef> edges;   // in root-to-leaf discovery order
  std::vector<NodeId> leaves;   // leaf nodes of the tree
  double weight_product = 1.0;  // edge weights multiplied in `edges` order
};

inline constexpr std::size_t kDefaultTreeCap = 4096;

/// Number of induced trees, computed bottom-up without enumeration;
/// saturates at 2^64-1.
std::uint64_t count_induced_trees(const Spn& spn);

/// Explicit enumeration from the root. Throws Error when the count exceeds
/// `cap` (the count is checked first, so no partial work is done).
std::vector<InducedTree> enumerate_induced_trees(
    const Spn& spn, std::size_t cap = kDefaultTreeCap);

/// f(x) computed as the sum over induced trees of weight_product times the
/// tree's leaf masses. Exponential-size reference semantics for testing the
/// main evaluator; log domain result.
double mixture_eval(std::span<const InducedTree> trees, const Spn& spn,
                    const Assignment& x);

/// Reconstruct the per-component chain map of an overparameterised mixture
/// from its induced trees: tree t's sum edges, root-to-leaf, form chain t.
/// Trees (and hence chains) come back in enumeration order, which matches
/// the component order of overparameterize().
LayerIndexMap layer_map_from_trees(std::span<const InducedTree> trees);

}  // namespace sumflow
