#include "sumflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sumflow/dynamics.hpp"
#include "sumflow/evaluation.hpp"
#include "sumflow/gradients.hpp"
#include "sumflow/overparam.hpp"
#include "sumflow/training.hpp"

namespace sumflow {

namespace {

struct GenState {
  std::vector<Node> nodes;
  // subgraphs already built, by scope signature, for DAG-style reuse
  std::map<std::vector<std::int32_t>, std::vector<NodeId>> pool;
  std::size_t budget = 0;
};

NodeId emit(GenState& st, Node node) {
  st.nodes.push_back(std::move(node));
  return static_cast<NodeId>(st.nodes.size() - 1);
}

NodeId gen_over(GenState& st, Rng& rng, const RandomSpnOptions& opt,
                std::vector<std::int32_t> scope) {
  // Reuse an existing subgraph over exactly this scope sometimes; that is
  // what makes shared nodes with several parents appear.
  if (auto it = st.pool.find(scope); it != st.pool.end() &&
                                     rng.uniform() < opt.reuse_probability) {
    return it->second[rng.below(it->second.size())];
  }

  NodeId made;
  if (scope.size() == 1 || st.budget < scope.size() * 2 + 2) {
    if (scope.size() == 1) {
      const std::int32_t v = scope[0];
      if (st.budget > 4 && rng.uniform() < 0.25) {
        // small sum over two leaves on the same variable
        SumNode s;
        s.children = {emit(st, LeafNode{v, Bernoulli{rng.uniform(
                               opt.leaf_p_lo, opt.leaf_p_hi)}}),
                      emit(st, LeafNode{v, Bernoulli{rng.uniform(
                               opt.leaf_p_lo, opt.leaf_p_hi)}})};
        s.weights = {rng.uniform(opt.weight_lo, opt.weight_hi),
                     rng.uniform(opt.weight_lo, opt.weight_hi)};
        st.budget -= std::min<std::size_t>(st.budget, 3);
        made = emit(st, std::move(s));
      } else {
        st.budget -= std::min<std::size_t>(st.budget, 1);
        made = emit(st, LeafNode{v, Bernoulli{rng.uniform(opt.leaf_p_lo,
                                                          opt.leaf_p_hi)}});
      }
    } else {
      // Budget exhausted: cheapest valid cover is a product of leaves.
      ProductNode prod;
      for (std::int32_t v : scope)
        prod.children.push_back(emit(st, LeafNode{v, Bernoulli{rng.uniform(
                                            opt.leaf_p_lo, opt.leaf_p_hi)}}));
      st.budget -= std::min(st.budget, scope.size() + 1);
      made = emit(st, std::move(prod));
    }
  } else if (rng.uniform() < 0.5) {
    // sum: 2-3 children over the same scope
    const std::size_t arity = 2 + rng.below(2);
    SumNode s;
    for (std::size_t c = 0; c < arity; ++c) {
      s.children.push_back(gen_over(st, rng, opt, scope));
      s.weights.push_back(rng.uniform(opt.weight_lo, opt.weight_hi));
    }
    st.budget -= std::min<std::size_t>(st.budget, 1);
    made = emit(st, std::move(s));
  } else {
    // product: split the scope into 2..min(4,|scope|) nonempty parts
    std::vector<std::int32_t> shuffled = scope;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const std::size_t parts =
        2 + rng.below(std::min<std::size_t>(3, shuffled.size() - 1));
    std::vector<std::vector<std::int32_t>> groups(parts);
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      groups[i < parts ? i : rng.below(parts)].push_back(shuffled[i]);
    ProductNode prod;
    for (auto& g : groups) {
      std::sort(g.begin(), g.end());
      prod.children.push_back(gen_over(st, rng, opt, g));
    }
    st.budget -= std::min<std::size_t>(st.budget, 1);
    made = emit(st, std::move(prod));
  }
  st.pool[scope].push_back(made);
  return made;
}

}  // namespace

Spn random_valid_spn(Rng& rng, const RandomSpnOptions& opt) {
  if (opt.num_variables < 1) throw Error("random spn: need variables");
  GenState st;
  st.budget = opt.max_nodes;
  std::vector<std::int32_t> scope(opt.num_variables);
  for (std::int32_t v = 0; v < opt.num_variables; ++v) scope[v] = v;
  NodeId root = gen_over(st, rng, opt, scope);
  // A root that came back as a leaf/product reuse is fine; the Spn just
  // needs the full scope, which gen_over guarantees.
  Spn spn(std::move(st.nodes), root, opt.num_variables);
  return spn;
}

Dataset random_dataset(Rng& rng, std::size_t rows, std::int32_t cols) {
  std::vector<std::uint8_t> values(rows * static_cast<std::size_t>(cols));
  for (auto& v : values) v = rng.bernoulli(0.5) ? 1 : 0;
  return Dataset(rows, cols, std::move(values));
}

namespace {

double scaled_gap(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

CheckResult check(std::string name, bool passed, double residual,
                  std::string detail = "") {
  return CheckResult{std::move(name), passed, residual, std::move(detail)};
}

}  // namespace

std::vector<CheckResult> verify_gradients(std::uint64_t seed,
                                          std::size_t cases) {
  std::vector<CheckResult> out;
  Rng rng(splitmix64(seed ^ 0xa11ce5u));
  for (std::size_t i = 0; i < cases; ++i) {
    Rng local = rng.fork(i);
    RandomSpnOptions opt;
    opt.num_variables = 2 + static_cast<std::int32_t>(local.below(7));
    opt.max_nodes = 10 + local.below(41);
    const Spn spn = random_valid_spn(local, opt);
    const Dataset data =
        random_dataset(local, 4 + local.below(29), spn.num_variables());

    const GradientMap analytic = llh_gradients(spn, data);
    const FdResult fd = finite_difference_gradient(spn, data);
    double worst = 0.0;
    for (std::size_t e = 0; e < analytic.size(); ++e) {
      const double a = analytic[e];
      const double b = fd.grad[e];
      // absolute slack for near-zero entries, relative otherwise
      const double gap = std::abs(a - b);
      const double scaled =
          gap <= 1e-8 ? 0.0 : gap / std::max({std::abs(a), std::abs(b), 1e-2});
      worst = std::max(worst, scaled);
    }
    out.push_back(check("gradient-fd-" + std::to_string(i), worst <= 1e-6,
                        worst,
                        "nodes=" + std::to_string(spn.node_count()) +
                            " edges=" + std::to_string(spn.sum_edge_count()) +
                            " rows=" + std::to_string(data.rows())));
  }
  return out;
}

std::vector<CheckResult> verify_trees(std::uint64_t seed, std::size_t cases) {
  std::vector<CheckResult> out;
  Rng rng(splitmix64(seed ^ 0x7ee5u));
  std::size_t produced = 0;
  std::size_t attempt = 0;
  while (produced < cases && attempt < cases * 20) {
    Rng local = rng.fork(attempt++);
    RandomSpnOptions opt;
    opt.num_variables = 2 + static_cast<std::int32_t>(local.below(5));
    opt.max_nodes = 8 + local.below(25);
    const Spn spn = random_valid_spn(local, opt);
    if (count_induced_trees(spn) > 256) continue;

    const auto trees = enumerate_induced_trees(spn, 256);
    double worst = 0.0;
    for (int q = 0; q < 8; ++q) {
      std::vector<ObsValue> vals(spn.num_variables());
      for (auto& v : vals) {
        const auto roll = local.below(4);
        v = roll == 3 ? ObsValue::kMarginalized
                      : (roll % 2 ? ObsValue::kOne : ObsValue::kZero);
      }
      const Assignment x(std::move(vals));
      const double direct = log_value(spn, x).root_log_value;
      const double by_trees = mixture_eval(trees, spn, x);
      if (direct == kNegInf && by_trees == kNegInf) continue;
      worst = std::max(worst, scaled_gap(direct, by_trees));
    }
    out.push_back(check("trees-eval-" + std::to_string(produced),
                        worst <= 1e-12, worst,
                        "trees=" + std::to_string(trees.size())));
    ++produced;
  }

  // Deepened mixtures have exactly the ladder shape the transform makes.
  std::size_t shaped = 0;
  for (auto [K, L, b] : {std::tuple{4, 2, 2}, std::tuple{8, 3, 1},
                         std::tuple{6, 2, 1}}) {
    Rng local = rng.fork(1000 + shaped);
    Spn mixture = build_shallow_mixture(K, 3, local);
    std::vector<double> w(K);
    for (auto& x : w) x = local.uniform(0.1, 1.0);
    mixture.set_weights_flat(w);
    DeepMixture deep = overparameterize(mixture, L, b);
    const auto trees = enumerate_induced_trees(deep.spn, 256);
    double worst = 0.0;
    for (int q = 0; q < 8; ++q) {
      std::vector<ObsValue> vals(deep.spn.num_variables());
      for (auto& v : vals)
        v = local.bernoulli(0.5) ? ObsValue::kOne : ObsValue::kZero;
      const Assignment x(std::move(vals));
      worst = std::max(worst, scaled_gap(log_value(deep.spn, x).root_log_value,
                                         mixture_eval(trees, deep.spn, x)));
    }
    out.push_back(check("trees-eval-ladder-" + std::to_string(shaped),
                        worst <= 1e-12 && trees.size() == std::size_t(K),
                        worst, "trees=" + std::to_string(trees.size())));
    ++shaped;
  }
  return out;
}

std::vector<CheckResult> verify_transform(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(splitmix64(seed ^ 0x0f0f1u));
  const std::tuple<int, int, int> shapes[] = {{8, 2, 1}, {8, 3, 1}, {4, 2, 2}};
  for (auto [K, L, b] : shapes) {
    Rng local = rng.fork(static_cast<std::uint64_t>(K * 100 + L * 10 + b));
    Spn mixture = build_shallow_mixture(K, 5, local);
    std::vector<double> w(K);
    for (auto& x : w) x = local.uniform(0.05, 1.5);
    mixture.set_weights_flat(w);
    DeepMixture deep = overparameterize(mixture, L, b);

    const std::string tag = std::to_string(K) + "x" + std::to_string(L) +
                            "b" + std::to_string(b);

    double worst = 0.0;
    for (int q = 0; q < 1000; ++q) {
      std::vector<ObsValue> vals(mixture.num_variables());
      for (auto& v : vals)
        v = local.bernoulli(0.5) ? ObsValue::kOne : ObsValue::kZero;
      const Assignment x(std::move(vals));
      worst = std::max(worst,
                       std::abs(log_value(mixture, x).root_log_value -
                                log_value(deep.spn, x).root_log_value));
    }
    out.push_back(check("transform-density-" + tag, worst <= 1e-10, worst));

    const std::uint64_t trees = count_induced_trees(deep.spn);
    out.push_back(check("transform-trees-" + tag,
                        trees == static_cast<std::uint64_t>(K),
                        static_cast<double>(trees),
                        "expected " + std::to_string(K)));

    const std::vector<double> eff = effective_weights(deep.spn, deep.map);
    bool exact = true;
    for (int k = 0; k < K; ++k) exact = exact && eff[k] == w[k];
    out.push_back(check("transform-effective-" + tag, exact,
                        exact ? 0.0 : 1.0,
                        "effective weights reproduce the originals"));
  }
  return out;
}

std::vector<CheckResult> verify_dynamics(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(splitmix64(seed ^ 0xd1aau));

  // Small two-layer chain setup trained softly enough to stay regular.
  const std::int32_t K = 4, D = 6;
  Spn mixture = build_shallow_mixture(K, D, rng);
  const Dataset data = synthesize(K, D, 64, seed ^ 0xbeefu).data;

  const auto record_run = [&](double eta, double init) {
    DeepMixture deep = overparameterize(mixture, 2, 1);
    Rng init_rng(splitmix64(seed ^ 0x515eedu));
    initialize_near_zero(deep.spn, init, init_rng);
    TrainConfig cfg;
    cfg.eta = eta;
    cfg.iterations = 40;
    cfg.record_dynamics = true;
    Spn spn = deep.spn;
    TrainTrace trace = train(spn, data, cfg, &deep.map);
    return *trace.dynamics;
  };

  const DynamicsRecord rec = record_run(1e-3, 0.05);

  // (a) the first-order increment splits exactly into rho * grad_eff +
  //     lambda * w_eff
  double worst_split = 0.0;
  for (const DynamicsStep& step : rec.steps) {
    const FirstOrderStep fo = first_order_step(step, rec.eta);
    for (std::size_t k = 0; k < rec.components; ++k) {
      if (fo.flagged[k]) continue;
      const double increment = fo.predicted_next[k] - step.effective_weight[k];
      const double split =
          fo.rho[k] * step.effective_grad[k] + fo.lambda[k] * step.effective_weight[k];
      worst_split = std::max(worst_split, scaled_gap(increment, split));
    }
  }
  out.push_back(check("dynamics-split-identity", worst_split <= 1e-12,
                      worst_split));

  // (b) prediction residual drops ~4x when eta halves (state-matched at
  //     the first step)
  const DynamicsRecord rec_half = record_run(5e-4, 0.05);
  const FirstOrderStep fo_full = first_order_step(rec.steps[0], rec.eta);
  const FirstOrderStep fo_half =
      first_order_step(rec_half.steps[0], rec_half.eta);
  double r_full = 0.0, r_half = 0.0;
  for (std::size_t k = 0; k < rec.components; ++k) {
    r_full = std::max(r_full, std::abs(rec.steps[0].actual_next[k] -
                                       fo_full.predicted_next[k]));
    r_half = std::max(r_half, std::abs(rec_half.steps[0].actual_next[k] -
                                       fo_half.predicted_next[k]));
  }
  const double ratio = r_half > 0.0 ? r_full / r_half : 4.0;
  out.push_back(check("dynamics-residual-order", ratio >= 3.0 && ratio <= 5.0,
                      ratio, "halving eta should quarter the residual"));

  // (c) the unrolled momentum form tracks a trajectory that stays in the
  //     first-order regime: moderate weights and small steps. From
  //     near-zero init the partition term makes the first step overshoot
  //     by orders of magnitude and the reconstruction detaches; the
  //     acceptance gate reports that regime as a failure on purpose.
  const MomentumUnroll unroll = [&] {
    DeepMixture gentle = overparameterize(mixture, 2, 1);
    Rng wrng(splitmix64(seed ^ 0x90ddu));
    std::vector<double> w = gentle.spn.weights_flat();
    for (double& v : w) v = wrng.uniform(0.4, 0.9);
    gentle.spn.set_weights_flat(w);
    TrainConfig cfg;
    cfg.eta = 2e-4;
    cfg.iterations = 40;
    cfg.record_dynamics = true;
    Spn spn = gentle.spn;
    TrainTrace trace = train(spn, data, cfg, &gentle.map);
    return unroll_momentum(*trace.dynamics);
  }();
  const double bound = 1e-4 * std::max(unroll.max_abs_weight, 1e-30);
  out.push_back(check("dynamics-momentum-unroll",
                      unroll.max_residual <= bound, unroll.max_residual,
                      "bound " + std::to_string(bound)));

  // (d) linear-regression companion: residual is exactly eta^2 * g1 * g2
  const LinregData lin = make_linreg_fixture(48, 5, seed ^ 0x11u);
  std::vector<double> w0(5, 0.0), w1_0(5, 0.5);
  const LinregTrace lt = linreg_demo(lin, 2, 0.05, 30, w0, w1_0, 0.8);
  double worst_lin = 0.0;
  for (std::size_t t = 1; t < lt.steps.size(); ++t) {
    const LinregStep& prev = lt.steps[t - 1];
    const LinregStep& cur = lt.steps[t];
    for (std::size_t d = 0; d < cur.identity_residual.size(); ++d) {
      // reconstruct eta^2 * grad_w1 * grad_w2 from recorded pieces:
      // grad_w1 = (w1' - w1)/-eta etc.; compare against the stored residual
      const double g1 = (cur.w1[d] - prev.w1[d]) / -0.05;
      const double g2 = (cur.w2 - prev.w2) / -0.05;
      const double expect = 0.05 * 0.05 * g1 * g2;
      worst_lin = std::max(worst_lin,
                           scaled_gap(cur.identity_residual[d], expect));
    }
  }
  out.push_back(check("dynamics-linreg-residual", worst_lin <= 1e-9,
                      worst_lin));
  return out;
}

std::vector<CheckResult> verify_all(std::uint64_t seed) {
  std::vector<CheckResult> out = verify_gradients(seed);
  for (auto&& c : verify_trees(seed)) out.push_back(std::move(c));
  for (auto&& c : verify_transform(seed)) out.push_back(std::move(c));
  for (auto&& c : verify_dynamics(seed)) out.push_back(std::move(c));
  return out;
}

}  // namespace sumflow
