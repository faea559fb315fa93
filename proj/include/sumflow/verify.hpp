#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sumflow/data_io.hpp"
#include "sumflow/rng.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

struct RandomSpnOptions {
  std::int32_t num_variables = 4;
  std::size_t max_nodes = 50;
  double weight_lo = 0.1;   // sums stay unnormalised on purpose
  double weight_hi = 2.0;
  double leaf_p_lo = 0.05;
  double leaf_p_hi = 0.95;
  double reuse_probability = 0.25;  // chance of sharing an existing subgraph
};

/// Generates a structurally valid SPN (complete, decomposable, acyclic,
/// connected) with random shape: scopes are split recursively, siblings
/// under sums share scope, and existing same-scope subgraphs are sometimes
/// reused so the result is a DAG rather than a tree.
Spn random_valid_spn(Rng& rng, const RandomSpnOptions& opt);

/// Random binary dataset, entries fair coin flips.
Dataset random_dataset(Rng& rng, std::size_t rows, std::int32_t cols);

struct CheckResult {
  std::string name;
  bool passed = false;
  double residual = 0.0;  // worst scaled deviation the check observed
  std::string detail;
};

/// Analytic gradients against central finite differences on random
/// networks and datasets.
std::vector<CheckResult> verify_gradients(std::uint64_t seed,
                                          std::size_t cases = 100);

/// Main evaluator against the explicit sum over induced trees, on random
/// networks and on deepened mixtures.
std::vector<CheckResult> verify_trees(std::uint64_t seed,
                                      std::size_t cases = 50);

/// Depth transform: density preservation, tree count preservation, chain
/// consistency.
std::vector<CheckResult> verify_transform(std::uint64_t seed);

/// Recorded training dynamics: first-order split identity, residual decay
/// under step halving, momentum-style unroll.
std::vector<CheckResult> verify_dynamics(std::uint64_t seed);

std::vector<CheckResult> verify_all(std::uint64_t seed);

}  // namespace sumflow
