#include "sumflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "sumflow/evaluation.hpp"
#include "sumflow/gradients.hpp"

namespace sumflow {

namespace {

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Iteration workhorse. Sum weights are the only thing that changes between
// iterations, so every node without a sum somewhere below it has a constant
// value per sample; those values are computed once and the per-iteration
// passes only touch the "dynamic" part (sums and their ancestors).
class BatchEvaluator {
 public:
  BatchEvaluator(const Spn& spn, const Dataset& data)
      : n_(data.rows()), edges_(spn.sum_edge_count()) {
    const std::size_t count = spn.node_count();
    dynamic_.assign(count, 0);
    for (NodeId id : spn.topological_order()) {
      bool dyn = spn.is_sum(id);
      if (!dyn) {
        for (NodeId c : children_of(spn.node(id))) dyn = dyn || dynamic_[c];
      }
      dynamic_[id] = dyn ? 1 : 0;
    }

    dyn_index_.assign(count, -1);
    boundary_index_.assign(count, -1);
    for (NodeId id : spn.topological_order()) {
      if (!spn.reachable(id) || !dynamic_[id]) continue;
      dyn_index_[id] = static_cast<std::int32_t>(dyn_nodes_.size());
      dyn_nodes_.push_back(id);
      for (NodeId c : children_of(spn.node(id))) {
        if (!dynamic_[c] && boundary_index_[c] < 0) {
          boundary_index_[c] = static_cast<std::int32_t>(boundary_.size());
          boundary_.push_back(c);
        }
      }
    }
    if (dyn_index_[spn.root()] < 0)
      throw Error("train: network has no sum nodes to train");

    // Frozen pass: fill the boundary cache for every sample plus one extra
    // row for the all-marginalised (partition) query.
    cache_.assign((n_ + 1) * boundary_.size(), 0.0);
    const auto fill_row = [&](std::size_t row, const Assignment& x,
                              std::vector<double>& scratch) {
      for (NodeId id : spn.topological_order()) {
        if (dynamic_[id]) continue;
        double lv;
        if (spn.is_leaf(id)) {
          const LeafNode& leaf = spn.leaf(id);
          lv = leaf_log_mass(leaf, x[leaf.variable]);
        } else {  // static products; static sums cannot exist
          lv = 0.0;
          for (NodeId c : spn.product(id).children) lv += scratch[c];
        }
        scratch[id] = lv;
        if (boundary_index_[id] >= 0)
          cache_[row * boundary_.size() +
                 static_cast<std::size_t>(boundary_index_[id])] = lv;
      }
    };
    parallel_chunks(n_, [&](std::size_t, std::size_t begin, std::size_t end) {
      std::vector<double> local(count, 0.0);
      for (std::size_t i = begin; i < end; ++i)
        fill_row(i, Assignment::from_row(data.row(i)), local);
    });
    std::vector<double> scratch(count, 0.0);
    fill_row(n_, Assignment::all_marginalized(spn.num_variables()), scratch);

    root_lv_.assign(n_ + 1, kNegInf);
  }

  std::size_t samples() const { return n_; }

  /// Log value of a frozen node for sample row (row == samples() is the
  /// partition row); only valid for boundary nodes.
  double frozen_value(NodeId id, std::size_t row) const {
    return cache_[row * boundary_.size() +
                  static_cast<std::size_t>(boundary_index_[id])];
  }
  bool is_dynamic(NodeId id) const { return dynamic_[id] != 0; }
  bool is_boundary(NodeId id) const { return boundary_index_[id] >= 0; }
  double root_log_value(std::size_t row) const { return root_lv_[row]; }

  /// Forward/backward over the dynamic subgraph at the current weights.
  /// Returns total log likelihood; `grad` (edge-indexed, unscaled) gets
  /// sum_n C_e(x_n)/f(x_n) - N * C_e(*)/f(*).
  double pass(const Spn& spn, std::vector<double>& grad) {
    grad.assign(edges_, 0.0);

    // Partition row first; it also guards against a fully zeroed network.
    RowScratch main_scratch(dyn_nodes_.size());
    std::vector<double> z_acc(edges_, 0.0);
    const double log_z = row_pass(spn, n_, z_acc.data(), main_scratch);
    if (log_z == kNegInf)
      throw NonFiniteError("train: partition value is zero");

    const std::size_t chunks = chunk_count(n_);
    std::vector<std::vector<double>> chunk_grad(
        chunks, std::vector<double>(edges_, 0.0));
    std::vector<double> chunk_llh(chunks, 0.0);
    std::vector<std::ptrdiff_t> chunk_bad(chunks, -1);
    parallel_chunks(n_, [&](std::size_t chunk, std::size_t begin,
                            std::size_t end) {
      RowScratch scratch(dyn_nodes_.size());
      for (std::size_t i = begin; i < end; ++i) {
        const double lv = row_pass(spn, i, chunk_grad[chunk].data(), scratch);
        if (lv == kNegInf) {
          chunk_bad[chunk] = static_cast<std::ptrdiff_t>(i);
          return;
        }
        chunk_llh[chunk] += lv;
      }
    });
    for (std::ptrdiff_t bad : chunk_bad) {
      if (bad >= 0)
        throw NonFiniteError("train: sample has zero probability mass", bad);
    }

    double llh = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      llh += chunk_llh[c];
      for (std::size_t e = 0; e < edges_; ++e) grad[e] += chunk_grad[c][e];
    }
    for (std::size_t e = 0; e < edges_; ++e)
      grad[e] -= static_cast<double>(n_) * z_acc[e];
    return llh - static_cast<double>(n_) * log_z;
  }

 private:
  struct RowScratch {
    explicit RowScratch(std::size_t dyn_count)
        : lv(dyn_count), ld(dyn_count) {}
    std::vector<double> lv;
    std::vector<double> ld;
  };

  // One sample: forward + backward on dynamic nodes, accumulating
  // exp(log deriv + log child value - log root) per sum edge into `acc`.
  double row_pass(const Spn& spn, std::size_t row, double* acc,
                  RowScratch& s) {
    const std::size_t dyn_count = dyn_nodes_.size();
    std::vector<double>& lv_ = s.lv;
    std::vector<double>& ld_ = s.ld;
    auto value_of = [&](NodeId c) {
      return dyn_index_[c] >= 0
                 ? lv_[static_cast<std::size_t>(dyn_index_[c])]
                 : frozen_value(c, row);
    };

    for (std::size_t s = 0; s < dyn_count; ++s) {
      const NodeId id = dyn_nodes_[s];
      if (spn.is_sum(id)) {
        const SumNode& sum = spn.sum(id);
        double best = kNegInf;
        for (std::size_t c = 0; c < sum.children.size(); ++c) {
          if (sum.weights[c] > 0.0)
            best = std::max(best,
                            std::log(sum.weights[c]) + value_of(sum.children[c]));
        }
        double accum = 0.0;
        if (best != kNegInf) {
          for (std::size_t c = 0; c < sum.children.size(); ++c) {
            if (sum.weights[c] <= 0.0) continue;
            const double term = std::log(sum.weights[c]) +
                                value_of(sum.children[c]);
            if (term != kNegInf) accum += std::exp(term - best);
          }
        }
        lv_[s] = best == kNegInf ? kNegInf : best + std::log(accum);
      } else {  // dynamic product
        double total = 0.0;
        for (NodeId c : spn.product(id).children) total += value_of(c);
        lv_[s] = total;
      }
    }

    const double root_lv =
        lv_[static_cast<std::size_t>(dyn_index_[spn.root()])];
    root_lv_[row] = root_lv;
    if (root_lv == kNegInf) return root_lv;

    std::fill(ld_.begin(), ld_.end(), kNegInf);
    ld_[static_cast<std::size_t>(dyn_index_[spn.root()])] = 0.0;
    for (std::size_t s = dyn_count; s-- > 0;) {
      const NodeId id = dyn_nodes_[s];
      const double ld = ld_[s];
      if (ld == kNegInf) continue;
      if (spn.is_sum(id)) {
        const SumNode& sum = spn.sum(id);
        const std::size_t base = spn.edge_index({id, 0});
        for (std::size_t c = 0; c < sum.children.size(); ++c) {
          const double child_lv = value_of(sum.children[c]);
          if (child_lv != kNegInf)
            acc[base + c] += std::exp(ld + child_lv - root_lv);
          if (sum.weights[c] > 0.0) {
            const std::int32_t ci = dyn_index_[sum.children[c]];
            if (ci >= 0) {
              double& slot = ld_[static_cast<std::size_t>(ci)];
              slot = log_add_exp(slot, ld + std::log(sum.weights[c]));
            }
          }
        }
      } else {
        const ProductNode& prod = spn.product(id);
        double finite_sum = 0.0;
        int zero_count = 0;
        for (NodeId c : prod.children) {
          const double v = value_of(c);
          if (v == kNegInf) {
            ++zero_count;
          } else {
            finite_sum += v;
          }
        }
        for (NodeId c : prod.children) {
          const std::int32_t ci = dyn_index_[c];
          if (ci < 0) continue;
          const double v = value_of(c);
          double sibling;
          if (v == kNegInf) {
            sibling = zero_count == 1 ? finite_sum : kNegInf;
          } else {
            sibling = zero_count == 0 ? finite_sum - v : kNegInf;
          }
          if (sibling == kNegInf) continue;
          double& slot = ld_[static_cast<std::size_t>(ci)];
          slot = log_add_exp(slot, ld + sibling);
        }
      }
    }
    return root_lv;
  }

  std::size_t n_;
  std::size_t edges_;
  std::vector<char> dynamic_;
  std::vector<std::int32_t> dyn_index_;
  std::vector<std::int32_t> boundary_index_;
  std::vector<NodeId> dyn_nodes_;
  std::vector<NodeId> boundary_;
  std::vector<double> cache_;
  std::vector<double> root_lv_;
};

struct DynamicsHooks {
  const LayerIndexMap* map = nullptr;
  std::vector<NodeId> component_nodes;
  LayerIndexMap trivial;  // storage when the caller passed none
};

}  // namespace

std::uint64_t cell_seed(std::uint64_t base, std::int32_t depth,
                        std::int32_t run) {
  const std::uint64_t tag =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(depth)) << 32) |
      static_cast<std::uint32_t>(run);
  return base ^ splitmix64(tag);
}

namespace {

// Effective-weight gradient for component k, from cached per-row values:
// sum_n C_k(x_n)/f(x_n) - N * C_k(*)/f(*). C_k is the component's circuit
// value, available because components sit on the frozen boundary.
double effective_grad(const BatchEvaluator& ev, NodeId comp) {
  const std::size_t n = ev.samples();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += std::exp(ev.frozen_value(comp, i) - ev.root_log_value(i));
  acc -= static_cast<double>(n) *
         std::exp(ev.frozen_value(comp, n) - ev.root_log_value(n));
  return acc;
}

}  // namespace

TrainTrace train(Spn& spn, const Dataset& data, const TrainConfig& cfg,
                 const LayerIndexMap* map) {
  if (cfg.iterations < 0) throw Error("train: negative iteration count");
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta))
    throw Error("train: eta must be positive and finite");
  if (!(cfg.clamp_floor >= 0.0))
    throw Error("train: clamp floor must be non-negative");
  if (data.cols() != spn.num_variables())
    throw Error("train: dataset arity does not match the network");
  if (cfg.train_leaves && cfg.record_dynamics)
    throw Error("train: dynamics recording with leaf training is not "
                "supported; freeze the leaves to record dynamics");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = data.rows();
  const std::size_t edges = spn.sum_edge_count();
  const double scale =
      cfg.gradient_scale == GradientScale::kMeanPerSample
          ? 1.0 / static_cast<double>(n)
          : 1.0;

  TrainTrace trace;
  trace.llh.reserve(static_cast<std::size_t>(cfg.iterations) + 1);

  DynamicsHooks hooks;
  if (cfg.record_dynamics) {
    if (map) {
      hooks.map = map;
    } else {
      if (!spn.is_sum(spn.root()))
        throw Error("train: dynamics recording needs a sum root or an "
                    "explicit chain map");
      const SumNode& root = spn.sum(spn.root());
      hooks.trivial.chains.resize(root.children.size());
      for (std::size_t k = 0; k < root.children.size(); ++k)
        hooks.trivial.chains[k] = {
            EdgeRef{spn.root(), static_cast<std::int32_t>(k)}};
      hooks.map = &hooks.trivial;
    }
    for (const auto& chain : hooks.map->chains) {
      if (chain.empty()) throw Error("train: empty chain in layer map");
      const EdgeRef last = chain.back();
      hooks.component_nodes.push_back(
          spn.sum(last.node).children[static_cast<std::size_t>(last.child)]);
    }
    trace.dynamics.emplace();
    trace.dynamics->eta = cfg.eta;
    trace.dynamics->components = hooks.map->components();
    trace.dynamics->steps.reserve(static_cast<std::size_t>(cfg.iterations));
  }

  if (cfg.train_leaves) {
    // General path: leaves move too, so nothing can be frozen.
    for (std::int64_t t = 0; t <= cfg.iterations; ++t) {
      const LogLikelihood llh = log_likelihood(spn, data);
      if (!llh.finite())
        throw NonFiniteError("train: log likelihood became non-finite",
                             llh.first_zero_sample
                                 ? static_cast<std::ptrdiff_t>(
                                       *llh.first_zero_sample)
                                 : -1);
      trace.llh.push_back(llh.value);
      if (t == cfg.iterations) break;
      const GradientMap grad = llh_gradients(spn, data);
      const std::vector<double> leaf_grad =
          bernoulli_leaf_gradients(spn, data);
      for (std::size_t e = 0; e < edges; ++e) {
        const EdgeRef edge = spn.sum_edges()[e];
        double w = spn.weight(edge) + cfg.eta * scale * grad[e];
        if (w < cfg.clamp_floor) {
          w = cfg.clamp_floor;
          ++trace.clamp_events;
        }
        spn.set_weight(edge, w);
      }
      for (NodeId id = 0; id < spn.node_count(); ++id) {
        if (!spn.is_leaf(id)) continue;
        const auto* b = std::get_if<Bernoulli>(&spn.leaf(id).dist);
        if (!b) continue;
        double p = b->p + cfg.eta * scale * leaf_grad[id];
        const double lo = std::max(cfg.clamp_floor, 1e-12);
        if (p < lo || p > 1.0 - lo) {
          p = std::clamp(p, lo, 1.0 - lo);
          ++trace.clamp_events;
        }
        spn.set_leaf(id, Bernoulli{p});
      }
    }
    trace.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    return trace;
  }

  BatchEvaluator ev(spn, data);
  if (cfg.record_dynamics) {
    for (NodeId comp : hooks.component_nodes) {
      if (ev.is_dynamic(comp))
        throw Error("train: dynamics recording requires components without "
                    "internal sum nodes");
    }
  }

  std::vector<double> grad;
  std::vector<char> edge_clamped(edges, 0);
  for (std::int64_t t = 0; t < cfg.iterations; ++t) {
    trace.llh.push_back(ev.pass(spn, grad));
    for (double& g : grad) g *= scale;

    DynamicsStep* step = nullptr;
    if (cfg.record_dynamics) {
      trace.dynamics->steps.emplace_back();
      step = &trace.dynamics->steps.back();
      const auto& chains = hooks.map->chains;
      const std::size_t K = chains.size();
      step->layer_weights.resize(K);
      step->layer_grads.resize(K);
      step->effective_weight.resize(K);
      step->effective_grad.resize(K);
      step->actual_next.resize(K);
      step->clamped.assign(K, 0);
      for (std::size_t k = 0; k < K; ++k) {
        double prod = 1.0;
        for (EdgeRef e : chains[k]) {
          step->layer_weights[k].push_back(spn.weight(e));
          step->layer_grads[k].push_back(grad[spn.edge_index(e)]);
          prod *= spn.weight(e);
        }
        step->effective_weight[k] = prod;
        step->effective_grad[k] =
            scale * effective_grad(ev, hooks.component_nodes[k]);
      }
    }

    std::fill(edge_clamped.begin(), edge_clamped.end(), 0);
    for (std::size_t e = 0; e < edges; ++e) {
      const EdgeRef edge = spn.sum_edges()[e];
      double w = spn.weight(edge) + cfg.eta * grad[e];
      if (w < cfg.clamp_floor) {
        w = cfg.clamp_floor;
        edge_clamped[e] = 1;
        ++trace.clamp_events;
      }
      spn.set_weight(edge, w);
    }

    if (step) {
      const auto& chains = hooks.map->chains;
      for (std::size_t k = 0; k < chains.size(); ++k) {
        double prod = 1.0;
        bool hit = false;
        for (EdgeRef e : chains[k]) {
          prod *= spn.weight(e);
          hit = hit || edge_clamped[spn.edge_index(e)];
        }
        step->actual_next[k] = prod;
        step->clamped[k] = hit ? 1 : 0;
      }
    }
  }
  trace.llh.push_back(ev.pass(spn, grad));
  trace.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return trace;
}

ExperimentResult run_experiment(const Dataset& data,
                                const ExperimentConfig& cfg) {
  if (cfg.runs < 1) throw Error("experiment: need at least one run");
  if (cfg.depths.empty()) throw Error("experiment: need at least one depth");

  ExperimentResult result;
  result.depths = cfg.depths;
  const std::size_t n = data.rows();

  for (std::int32_t depth : cfg.depths) {
    double iter_sum = 0.0;
    for (std::int32_t run = 0; run < cfg.runs; ++run) {
      // The mixture (hence the landscape) depends on the run only, so a
      // given run faces the same leaves at every depth; the near-zero
      // weight draw is per cell.
      Rng leaf_rng(cell_seed(cfg.seed, 0, run));
      Spn mixture =
          build_shallow_mixture(cfg.components, data.cols(), leaf_rng);
      DeepMixture deep = overparameterize(mixture, depth, cfg.branching);

      ExperimentCell cell;
      cell.depth = depth;
      cell.run = run;
      cell.seed = cell_seed(cfg.seed, depth, run);
      cell.samples = n;
      Rng init_rng(cell.seed);
      initialize_near_zero(deep.spn, cfg.init_scale, init_rng);

      TrainConfig tc;
      tc.eta = cfg.eta;
      tc.iterations = cfg.iterations;
      tc.seed = cell.seed;
      tc.init_scale = cfg.init_scale;
      tc.clamp_floor = cfg.clamp_floor;
      cell.trace = train(deep.spn, data, tc, &deep.map);

      const double n_d = static_cast<double>(n);
      cell.final_llh_per_sample = cell.trace.llh.back() / n_d;
      const double target = cell.final_llh_per_sample - cfg.threshold_nats;
      std::int64_t hit = cfg.iterations;
      for (std::size_t t = 0; t < cell.trace.llh.size(); ++t) {
        if (cell.trace.llh[t] / n_d >= target) {
          hit = static_cast<std::int64_t>(t);
          break;
        }
      }
      cell.iterations_to_threshold = hit;
      iter_sum += static_cast<double>(hit);
      result.cells.push_back(std::move(cell));
    }
    result.mean_iterations_to_threshold.push_back(iter_sum /
                                                  static_cast<double>(cfg.runs));
  }
  return result;
}

}  // namespace sumflow
