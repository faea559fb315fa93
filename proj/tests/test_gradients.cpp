#include <cmath>
#include <vector>

#include "doctest.h"
#include "sumflow/gradients.hpp"
#include "sumflow/spn.hpp"
#include "sumflow/verify.hpp"

using namespace sumflow;

namespace {

Spn hand_mixture() {
  return build_mixture({0.3, 0.4}, {{0.2, 0.6}, {0.9, 0.4}});
}

// Worst relative deviation between two gradient vectors, the same scaled
// measure the verification suite uses.
double max_rel_gap(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double gap = std::abs(a[i] - b[i]);
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-2});
    worst = std::max(worst, gap / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("backprop derivatives on the hand mixture") {
  Spn spn = hand_mixture();
  std::vector<ObsValue> bits{ObsValue::kOne, ObsValue::kOne};
  EvalTrace trace = log_value(spn, Assignment(bits));
  NodeDerivatives d = backprop(spn, trace);

  // Root derivative is 1; each component's derivative is its root weight.
  CHECK(d.log_derivs[spn.root()] == 0.0);
  const auto& root = spn.sum(spn.root());
  CHECK(std::exp(d.log_derivs[root.children[0]]) ==
        doctest::Approx(0.3).epsilon(1e-14));
  CHECK(std::exp(d.log_derivs[root.children[1]]) ==
        doctest::Approx(0.4).epsilon(1e-14));

  // Leaf of component A over x0: derivative = w_A * (sibling leaf value)
  // = 0.3 * 0.6 at x = (1,1).
  const NodeId leaf_a0 = spn.product(root.children[0]).children[0];
  CHECK(std::exp(d.log_derivs[leaf_a0]) ==
        doctest::Approx(0.18).epsilon(1e-13));
}

TEST_CASE("edge gradients match the worked example") {
  // d LLH / d w_k = sum_n f_k(x_n)/f(x_n) - N f_k(*)/f(*). With the rows
  // (1,1) and (0,0): component A gives 2/3 + 8/3 - 2/0.7 = 10/21 and
  // component B gives 2 + 1/2 - 2/0.7 = -5/14.
  Spn spn = hand_mixture();
  Dataset data = parse_binary_csv("1,1\n0,0\n");
  GradientMap g = llh_gradients(spn, data);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(10.0 / 21.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-5.0 / 14.0).epsilon(1e-12));
}

TEST_CASE("analytic edge gradients agree with finite differences") {
  Rng rng(908172);
  RandomSpnOptions opt;
  opt.num_variables = 5;
  for (int rep = 0; rep < 15; ++rep) {
    Spn spn = random_valid_spn(rng, opt);
    Dataset data = random_dataset(rng, 16, 5);
    GradientMap g = llh_gradients(spn, data);
    FdResult fd = finite_difference_gradient(spn, data);
    CAPTURE(rep);
    CHECK(max_rel_gap(g.values(), fd.grad.values()) < 1e-6);
  }
}

TEST_CASE("shared subgraphs accumulate over every parent") {
  // One Bernoulli leaf feeding both mixture components directly:
  //   root = 0.5 * leaf + 0.25 * leaf  (complete: same scope).
  std::vector<Node> nodes;
  nodes.push_back(LeafNode{0, Bernoulli{0.3}});
  nodes.push_back(SumNode{{0, 0}, {0.5, 0.25}});
  Spn spn(std::move(nodes), 1, 1);
  REQUIRE(spn.validate().empty());

  std::vector<ObsValue> one{ObsValue::kOne};
  EvalTrace trace = log_value(spn, Assignment(one));
  NodeDerivatives d = backprop(spn, trace);
  // d root / d leaf = 0.5 + 0.25 accumulated across both edges.
  CHECK(std::exp(d.log_derivs[0]) == doctest::Approx(0.75).epsilon(1e-14));

  Dataset data = parse_binary_csv("1\n0\n1\n");
  GradientMap g = llh_gradients(spn, data);
  FdResult fd = finite_difference_gradient(spn, data);
  CHECK(max_rel_gap(g.values(), fd.grad.values()) < 1e-7);
}

TEST_CASE("bernoulli leaf gradients agree with finite differences") {
  Rng rng(5150);
  RandomSpnOptions opt;
  opt.num_variables = 4;
  for (int rep = 0; rep < 10; ++rep) {
    Spn spn = random_valid_spn(rng, opt);
    Dataset data = random_dataset(rng, 12, 4);
    std::vector<double> g = bernoulli_leaf_gradients(spn, data);
    std::vector<double> fd = finite_difference_leaf_gradient(spn, data);
    CAPTURE(rep);
    CHECK(max_rel_gap(g, fd) < 1e-5);
  }
}

TEST_CASE("leaf gradient needs no partition correction") {
  // Check the gradient of the *normalised* objective directly: nudging a
  // leaf p moves sum_n log f(x_n) and leaves f(*) alone, so the analytic
  // gradient above already is the full normalised-likelihood gradient.
  Spn spn = hand_mixture();
  Dataset data = parse_binary_csv("1,0\n0,1\n1,1\n");
  const double z_before = log_partition(spn);
  std::vector<double> g = bernoulli_leaf_gradients(spn, data);

  const NodeId leaf = spn.product(spn.sum(spn.root()).children[0]).children[0];
  spn.set_leaf(leaf, Bernoulli{0.2 + 1e-7});
  CHECK(log_partition(spn) == doctest::Approx(z_before).epsilon(1e-13));
  CHECK(g[leaf] != 0.0);
}

TEST_CASE("zero-mass samples raise a sample-indexed error") {
  std::vector<Node> nodes;
  nodes.push_back(LeafNode{0, Indicator{1}});
  Spn spn(std::move(nodes), 0, 1);
  Dataset data = parse_binary_csv("1\n0\n");
  try {
    llh_gradients(spn, data);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.sample() == 1);
  }
}

TEST_CASE("gradient of a product child with zero siblings stays finite") {
  // Product with an indicator child that the query zeroes out: the other
  // child's derivative must be exactly 0 (log -inf), not NaN.
  std::vector<Node> nodes;
  nodes.push_back(LeafNode{0, Indicator{1}});
  nodes.push_back(LeafNode{1, Bernoulli{0.4}});
  nodes.push_back(ProductNode{{0, 1}});
  Spn spn(std::move(nodes), 2, 2);

  std::vector<ObsValue> bits{ObsValue::kZero, ObsValue::kOne};
  EvalTrace trace = log_value(spn, Assignment(bits));
  REQUIRE(trace.root_log_value == kNegInf);
  NodeDerivatives d = backprop(spn, trace);
  CHECK(d.log_derivs[1] == kNegInf);          // sibling zero kills it
  CHECK(std::exp(d.log_derivs[0]) ==
        doctest::Approx(0.4).epsilon(1e-14));  // the zeroed child itself
  for (double v : d.log_derivs) CHECK_FALSE(std::isnan(v));
}

TEST_CASE("finite differences clamp at the w=0 boundary") {
  Spn spn = build_mixture({0.0, 0.7}, {{0.2, 0.6}, {0.9, 0.4}});
  Dataset data = parse_binary_csv("1,1\n");
  FdResult fd = finite_difference_gradient(spn, data, 1e-5);
  CHECK(fd.flags[0] == FdFlag::kClamped);
  CHECK(fd.flags[1] == FdFlag::kCentral);
  GradientMap g = llh_gradients(spn, data);
  // One-sided step loses an order of accuracy but must still be close.
  CHECK(std::abs(g[0] - fd.grad[0]) < 1e-4 * std::max(1.0, std::abs(g[0])));
}
