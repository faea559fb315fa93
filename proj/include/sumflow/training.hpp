#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sumflow/data_io.hpp"
#include "sumflow/dynamics.hpp"
#include "sumflow/overparam.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

/// How raw likelihood gradients are scaled before the update. The total
/// over a 16k-sample dataset is orders of magnitude too hot for a fixed
/// step size; the mean keeps eta meaningful across dataset sizes.
enum class GradientScale : std::uint8_t { kMeanPerSample = 0, kTotal = 1 };

struct TrainConfig {
  double eta = 0.01;
  std::int64_t iterations = 500;
  std::uint64_t seed = 0;       // recorded for provenance; train() does not
                                // draw random numbers itself
  double init_scale = 0.01;     // used by callers that initialise weights
  double clamp_floor = 1e-8;    // weights are clamped to >= this after steps
  bool record_dynamics = false;
  bool train_leaves = false;    // also ascend Bernoulli leaf probabilities
  GradientScale gradient_scale = GradientScale::kMeanPerSample;
};

struct TrainTrace {
  /// Total data log likelihood per iteration, entry 0 = before any step,
  /// entry t = after t steps; length iterations + 1.
  std::vector<double> llh;
  std::uint64_t clamp_events = 0;
  double wall_ms = 0.0;
  std::optional<DynamicsRecord> dynamics;
};

/// Batch gradient ascent on the likelihood of an unnormalised network:
/// every sum weight moves along eta * scaled gradient, then is clamped to
/// clamp_floor. Weights are trained in place; the caller initialises them.
///
/// When cfg.record_dynamics is set, per-iteration layer snapshots are
/// recorded against `map` (pass the chain map of an overparameterised
/// mixture); a null map is accepted for plain mixtures, where each root
/// edge forms its own length-1 chain.
TrainTrace train(Spn& spn, const Dataset& data, const TrainConfig& cfg,
                 const LayerIndexMap* map = nullptr);

/// One cell of the depth-sweep experiment grid.
struct ExperimentCell {
  std::int32_t depth = 1;
  std::int32_t run = 0;
  std::uint64_t seed = 0;      // derived per-cell seed actually used
  TrainTrace trace;
  std::size_t samples = 0;
  double final_llh_per_sample = 0.0;
  /// First iteration whose llh/sample is within threshold of the final.
  std::int64_t iterations_to_threshold = 0;
};

struct ExperimentConfig {
  std::int32_t components = 8;
  std::vector<std::int32_t> depths = {1, 2, 3};
  std::int32_t branching = 1;
  std::int32_t runs = 2;
  double eta = 0.01;
  std::int64_t iterations = 500;
  /// Near-zero init for the sweep. Deliberately larger than TrainConfig's
  /// default: at 0.01 the very first step dwarfs every weight (the
  /// partition gradient scales with 1/sum w) and all depths "converge" in
  /// one jump, leaving nothing for iteration counts to resolve. At 0.2 the
  /// ascent is gradual (shallow runs take ~15-30 iterations to settle) and
  /// the depth ordering is stable across dataset/model seeds.
  double init_scale = 0.2;
  double clamp_floor = 1e-8;
  std::uint64_t seed = 20240101;
  double threshold_nats = 0.1;  // per-sample closeness defining convergence
};

struct ExperimentResult {
  std::vector<ExperimentCell> cells;  // ordered by (depth, run)
  std::vector<std::int32_t> depths;
  std::vector<double> mean_iterations_to_threshold;  // aligned with depths
};

/// Depth sweep on one dataset: for every (depth, run) build a fresh
/// mixture, deepen it, initialise all sum weights near zero with a
/// per-cell seed, and train. Leaves come from the mixture builder and
/// stay fixed, so every depth optimises the same landscape shape.
ExperimentResult run_experiment(const Dataset& data,
                                const ExperimentConfig& cfg);

/// Per-cell seed: mixes depth and run into the base seed.
std::uint64_t cell_seed(std::uint64_t base, std::int32_t depth,
                        std::int32_t run);

}  // namespace sumflow
