#include <cmath>
#include <vector>

#include "doctest.h"
#include "sumflow/dynamics.hpp"
#include "sumflow/overparam.hpp"
#include "sumflow/training.hpp"

using namespace sumflow;

namespace {

DynamicsStep one_component_step(std::vector<double> w, std::vector<double> g) {
  DynamicsStep step;
  double prod = 1.0;
  for (double wl : w) prod *= wl;
  step.layer_weights.push_back(std::move(w));
  step.layer_grads.push_back(std::move(g));
  step.effective_weight.push_back(prod);
  step.effective_grad.push_back(0.0);
  step.actual_next.push_back(0.0);
  step.clamped.push_back(0);
  return step;
}

}  // namespace

TEST_CASE("first-order split on a worked three-layer example") {
  // w = (2, 3, 5), g = (0.1, 0.2, 0.3), eta = 0.01. Leave-one-out products
  // are 15, 10, 6, so the increment is 0.1*15 + 0.2*10 + 0.3*6 = 5.3;
  // rho = eta * (2*3)^2 = 0.36; lambda = eta * (0.1/2 + 0.2/3) = 7e-2/60;
  // the two-layer textbook coefficient is eta * 2^2.
  DynamicsStep step = one_component_step({2.0, 3.0, 5.0}, {0.1, 0.2, 0.3});
  FirstOrderStep fo = first_order_step(step, 0.01);
  CHECK(fo.predicted_next[0] == doctest::Approx(30.053).epsilon(1e-14));
  CHECK(fo.rho[0] == doctest::Approx(0.36).epsilon(1e-14));
  CHECK(fo.lambda[0] == doctest::Approx(0.01 * (0.1 / 2.0 + 0.2 / 3.0))
                            .epsilon(1e-14));
  CHECK(fo.rho_first_layer[0] == doctest::Approx(0.04).epsilon(1e-14));
  CHECK(fo.flagged[0] == 0);
}

TEST_CASE("a single layer degenerates to plain gradient ascent") {
  DynamicsStep step = one_component_step({1.7}, {0.4});
  FirstOrderStep fo = first_order_step(step, 0.02);
  CHECK(fo.rho[0] == 0.02);
  CHECK(fo.lambda[0] == 0.0);
  CHECK(fo.rho_first_layer[0] == 0.02);
  CHECK(fo.predicted_next[0] == doctest::Approx(1.7 + 0.02 * 0.4)
                                    .epsilon(1e-15));
}

TEST_CASE("split identity holds for chain-consistent gradients") {
  // When the layer gradients come from the chain rule of one effective
  // gradient, the first-order increment decomposes exactly into
  // rho * g_eff + lambda * w_eff.
  const double eta = 0.01;
  for (std::size_t depth : {2u, 3u, 5u}) {
    std::vector<double> w, g;
    const double g_eff = -0.37;
    double w_eff = 1.0;
    for (std::size_t l = 0; l < depth; ++l) {
      w.push_back(0.4 + 0.3 * static_cast<double>(l));
      w_eff *= w.back();
    }
    for (std::size_t l = 0; l < depth; ++l) {
      double others = 1.0;
      for (std::size_t m = 0; m < depth; ++m)
        if (m != l) others *= w[m];
      g.push_back(g_eff * others);
    }
    DynamicsStep step = one_component_step(w, g);
    FirstOrderStep fo = first_order_step(step, eta);
    const double split = fo.rho[0] * g_eff + fo.lambda[0] * w_eff;
    const double increment = fo.predicted_next[0] - w_eff;
    CAPTURE(depth);
    CHECK(std::abs(split - increment) <=
          1e-13 * std::max(1.0, std::abs(increment)));
  }
}

TEST_CASE("near-zero layers are flagged") {
  DynamicsStep step = one_component_step({1e-13, 2.0}, {0.1, 0.1});
  FirstOrderStep fo = first_order_step(step, 0.01);
  CHECK(fo.flagged[0] == 1);
  DynamicsStep fine = one_component_step({1e-6, 2.0}, {0.1, 0.1});
  CHECK(first_order_step(fine, 0.01).flagged[0] == 0);
}

TEST_CASE("momentum unroll equals the step recursion") {
  // Synthetic record: two components, two layers, made-up smooth weights
  // and gradients. The closed form must match iterating
  //   r <- (1 + lambda) r + rho * g  exactly (up to rounding).
  DynamicsRecord rec;
  rec.eta = 0.01;
  rec.components = 2;
  const std::size_t T = 8;
  for (std::size_t t = 0; t < T; ++t) {
    DynamicsStep step;
    for (std::size_t k = 0; k < 2; ++k) {
      const double base = 0.5 + 0.1 * static_cast<double>(t) +
                          0.3 * static_cast<double>(k);
      std::vector<double> w{base, 1.1 * base};
      std::vector<double> g{0.2 / base, -0.1 * base};
      double prod = w[0] * w[1];
      step.layer_weights.push_back(w);
      step.layer_grads.push_back(g);
      step.effective_weight.push_back(prod);
      step.effective_grad.push_back(0.05 - 0.01 * static_cast<double>(t));
      step.actual_next.push_back(prod * 1.01);
      step.clamped.push_back(0);
    }
    rec.steps.push_back(std::move(step));
  }

  MomentumUnroll unroll = unroll_momentum(rec);
  REQUIRE(unroll.reconstructed.size() == T + 1);
  auto coeffs = first_order_trajectory(rec);
  for (std::size_t k = 0; k < 2; ++k) {
    double r = rec.steps[0].effective_weight[k];
    CHECK(unroll.reconstructed[0][k] == r);
    for (std::size_t t = 0; t < T; ++t) {
      r = (1.0 + coeffs[t].lambda[k]) * r +
          coeffs[t].rho[k] * rec.steps[t].effective_grad[k];
      CAPTURE(t);
      CHECK(std::abs(unroll.reconstructed[t + 1][k] - r) <=
            1e-12 * std::max(1.0, std::abs(r)));
    }
  }
  // mu is triangular: row t+1 has t+1 entries, the newest being rho(t).
  for (std::size_t t = 0; t < T; ++t) {
    REQUIRE(unroll.mu[t + 1].size() == t + 1);
    CHECK(unroll.mu[t + 1][t][0] == coeffs[t].rho[0]);
  }
  CHECK(unroll.step_residual[0] == 0.0);
}

TEST_CASE("unroll tracks an actual gentle training run") {
  Dataset data = synthesize(4, 6, 64, 2026).data;
  Rng rng(2026);
  Spn mixture = build_shallow_mixture(4, 6, rng);
  DeepMixture deep = overparameterize(mixture, 2, 1);
  // Moderate weights keep the run inside the first-order regime
  // (eta * gradient well below every weight); near-zero init instead makes
  // the relative step size blow up with the partition term.
  Rng init(2027);
  std::vector<double> w(deep.spn.sum_edge_count());
  for (double& v : w) v = init.uniform(0.4, 0.9);
  deep.spn.set_weights_flat(w);

  TrainConfig cfg;
  cfg.eta = 2e-4;
  cfg.iterations = 40;
  cfg.record_dynamics = true;
  TrainTrace trace = train(deep.spn, data, cfg, &deep.map);
  REQUIRE(trace.dynamics.has_value());

  MomentumUnroll unroll = unroll_momentum(*trace.dynamics);
  CHECK(unroll.max_abs_weight > 0.0);
  // First-order theory, so the drift is O(eta^2) per step; at this step
  // size it stays far below the weight scale over the whole horizon.
  CHECK(unroll.max_residual <= 1e-4 * unroll.max_abs_weight);
}

TEST_CASE("regression fixture is deterministic and shaped right") {
  LinregData a = make_linreg_fixture(32, 5, 9);
  LinregData b = make_linreg_fixture(32, 5, 9);
  LinregData c = make_linreg_fixture(32, 5, 10);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK_FALSE(a.y == c.y);
  REQUIRE(a.x.size() == 32);
  REQUIRE(a.x[0].size() == 5);
  // Geometric feature scales: later columns live on smaller ranges.
  double max0 = 0.0, max4 = 0.0;
  for (const auto& row : a.x) {
    max0 = std::max(max0, std::abs(row[0]));
    max4 = std::max(max4, std::abs(row[4]));
  }
  CHECK(max4 < max0);
}

TEST_CASE("two-factor regression leaves exactly the second-order residual") {
  LinregData data = make_linreg_fixture(48, 5, 7);
  std::vector<double> w0(5, 0.0), w1_0(5, 0.5);
  const double eta = 0.05, w2_0 = 0.8;
  LinregTrace trace = linreg_demo(data, 2, eta, 30, w0, w1_0, w2_0);
  REQUIRE(trace.steps.size() == 31);
  CHECK(trace.steps[0].identity_residual.empty());

  // Independent reconstruction of the residual at every arriving step:
  // eta^2 * grad_w1 * grad_w2 evaluated at the step we left.
  auto grad_at = [&](const std::vector<double>& w) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t n = 0; n < data.x.size(); ++n) {
      double r = -data.y[n];
      for (std::size_t d = 0; d < w.size(); ++d) r += data.x[n][d] * w[d];
      for (std::size_t d = 0; d < w.size(); ++d) g[d] += r * data.x[n][d];
    }
    for (double& v : g) v /= static_cast<double>(data.x.size());
    return g;
  };
  for (std::size_t t = 1; t < trace.steps.size(); ++t) {
    const LinregStep& prev = trace.steps[t - 1];
    const LinregStep& cur = trace.steps[t];
    REQUIRE(cur.identity_residual.size() == 5);
    const std::vector<double> g = grad_at(prev.w_product);
    double g_w2 = 0.0;
    for (std::size_t d = 0; d < 5; ++d) g_w2 += g[d] * prev.w1[d];
    for (std::size_t d = 0; d < 5; ++d) {
      const double expect = eta * eta * (g[d] * prev.w2) * g_w2;
      CAPTURE(t);
      CAPTURE(d);
      CHECK(std::abs(cur.identity_residual[d] - expect) <=
            1e-9 * std::max(1.0, std::abs(expect)));
    }
  }

  // Both parameterisations descend.
  CHECK(trace.steps.back().loss_direct < trace.steps.front().loss_direct);
  CHECK(trace.steps.back().loss_product < trace.steps.front().loss_product);
}

TEST_CASE("the leftover shrinks like eta squared") {
  LinregData data = make_linreg_fixture(48, 5, 7);
  std::vector<double> w0(5, 0.0), w1_0(5, 0.5);
  LinregTrace full = linreg_demo(data, 2, 0.04, 1, w0, w1_0, 0.8);
  LinregTrace half = linreg_demo(data, 2, 0.02, 1, w0, w1_0, 0.8);
  // One step from the same state: residuals are eta^2 * (same gradients),
  // so halving eta divides the residual by exactly four.
  double r_full = 0.0, r_half = 0.0;
  for (std::size_t d = 0; d < 5; ++d) {
    r_full = std::max(r_full, std::abs(full.steps[1].identity_residual[d]));
    r_half = std::max(r_half, std::abs(half.steps[1].identity_residual[d]));
  }
  REQUIRE(r_half > 0.0);
  CHECK(r_full / r_half == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("regression demo rejects odd exponents") {
  LinregData data = make_linreg_fixture(8, 2, 1);
  std::vector<double> w0(2, 0.0), w1_0(2, 0.5);
  CHECK_THROWS_AS(linreg_demo(data, 3, 0.01, 2, w0, w1_0, 1.0), Error);
  CHECK_THROWS_AS(linreg_demo(data, 1, 0.01, 2, w0, w1_0, 1.0), Error);
  CHECK_NOTHROW(linreg_demo(data, 4, 0.001, 2, w0, w1_0, 1.0));
}
