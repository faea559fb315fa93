#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "sumflow/spn.hpp"
#include "sumflow/verify.hpp"

using namespace sumflow;

namespace {

// Two-component mixture over two variables, fully spelled out. Node ids:
// 0..3 leaves, 4/5 products, 6 root sum.
Spn tiny_mixture() {
  std::vector<Node> nodes;
  nodes.push_back(LeafNode{0, Bernoulli{0.2}});
  nodes.push_back(LeafNode{1, Bernoulli{0.6}});
  nodes.push_back(LeafNode{0, Bernoulli{0.9}});
  nodes.push_back(LeafNode{1, Bernoulli{0.4}});
  nodes.push_back(ProductNode{{0, 1}});
  nodes.push_back(ProductNode{{2, 3}});
  nodes.push_back(SumNode{{4, 5}, {0.3, 0.4}});
  return Spn(std::move(nodes), 6, 2);
}

}  // namespace

TEST_CASE("scope set operations") {
  Scope a = Scope::single(3);
  Scope b = Scope::single(1);
  a.unite(b);
  a.unite(Scope::single(3));  // dedup
  CHECK(a.size() == 2);
  CHECK(a.contains(1));
  CHECK(a.contains(3));
  CHECK_FALSE(a.contains(2));
  CHECK(a.variables() == std::vector<std::int32_t>{1, 3});
  CHECK(a.intersects(b));
  CHECK_FALSE(b.intersects(Scope::single(0)));
}

TEST_CASE("valid mixture passes validation") {
  Spn spn = tiny_mixture();
  CHECK(spn.validate().empty());
  CHECK_FALSE(spn.has_cycle());
  CHECK(spn.node_count() == 7);
  CHECK(spn.scope(spn.root()).size() == 2);
  CHECK(spn.scope(4) == spn.scope(5));
  CHECK(spn.sum_edge_count() == 2);
  CHECK(spn.weight(EdgeRef{6, 0}) == 0.3);
  CHECK(spn.weight(EdgeRef{6, 1}) == 0.4);
  // Unnormalised on purpose: 0.3 + 0.4 != 1.
  CHECK_FALSE(spn.is_normalized());
}

TEST_CASE("normalization check tolerance") {
  std::vector<Node> nodes;
  nodes.push_back(LeafNode{0, Bernoulli{0.5}});
  nodes.push_back(LeafNode{0, Bernoulli{0.5}});
  nodes.push_back(SumNode{{0, 1}, {0.25, 0.75}});
  Spn spn(std::move(nodes), 2, 1);
  CHECK(spn.is_normalized());
  spn.set_weight(EdgeRef{2, 0}, 0.25 + 1e-10);
  CHECK_FALSE(spn.is_normalized());
  CHECK(spn.is_normalized(1e-9));
}

TEST_CASE("topological order puts children first") {
  Spn spn = tiny_mixture();
  auto topo = spn.topological_order();
  REQUIRE(topo.size() == spn.node_count());
  std::vector<std::size_t> pos(spn.node_count());
  for (std::size_t i = 0; i < topo.size(); ++i) pos[topo[i]] = i;
  for (NodeId id = 0; id < spn.node_count(); ++id)
    for (NodeId c : children_of(spn.node(id))) CHECK(pos[c] < pos[id]);
  CHECK(topo.back() == spn.root());
}

TEST_CASE("constructor rejects structural garbage") {
  // Child id out of range.
  {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(SumNode{{0, 7}, {1.0, 1.0}});
    CHECK_THROWS_AS(Spn(std::move(nodes), 1, 1), Error);
  }
  // children/weights length mismatch.
  {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(SumNode{{0}, {1.0, 2.0}});
    CHECK_THROWS_AS(Spn(std::move(nodes), 1, 1), Error);
  }
  // Bernoulli p outside [0, 1].
  {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{1.5}});
    CHECK_THROWS_AS(Spn(std::move(nodes), 0, 1), Error);
  }
  // Leaf variable out of range.
  {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{3, Bernoulli{0.5}});
    CHECK_THROWS_AS(Spn(std::move(nodes), 0, 2), Error);
  }
  // Childless sum.
  {
    std::vector<Node> nodes;
    nodes.push_back(SumNode{{}, {}});
    CHECK_THROWS_AS(Spn(std::move(nodes), 0, 1), Error);
  }
}

TEST_CASE("validate reports semantic violations without throwing") {
  auto kinds = [](const Spn& spn) {
    std::set<std::string> out;
    for (const auto& v : spn.validate()) out.insert(v.kind);
    return out;
  };

  SUBCASE("cycle") {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(SumNode{{2, 0}, {1.0, 1.0}});
    nodes.push_back(SumNode{{1, 0}, {1.0, 1.0}});
    Spn spn(std::move(nodes), 1, 1);
    CHECK(spn.has_cycle());
    CHECK(kinds(spn).count("cycle") == 1);
    CHECK_THROWS_AS(spn.topological_order(), Error);
  }

  SUBCASE("negative weight") {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(SumNode{{0, 1}, {0.5, -0.5}});
    Spn spn(std::move(nodes), 2, 1);
    CHECK(kinds(spn) == std::set<std::string>{"negative-weight"});
  }

  SUBCASE("incomplete sum: children with different scopes") {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(LeafNode{1, Bernoulli{0.5}});
    nodes.push_back(SumNode{{0, 1}, {1.0, 1.0}});
    Spn spn(std::move(nodes), 2, 2);
    auto k = kinds(spn);
    CHECK(k.count("incomplete") == 1);
  }

  SUBCASE("non-decomposable product: overlapping child scopes") {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(LeafNode{0, Bernoulli{0.7}});
    nodes.push_back(ProductNode{{0, 1}});
    Spn spn(std::move(nodes), 2, 1);
    CHECK(kinds(spn).count("non-decomposable") == 1);
  }

  SUBCASE("unreachable node") {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    nodes.push_back(LeafNode{0, Bernoulli{0.7}});  // dangling
    Spn spn(std::move(nodes), 0, 1);
    CHECK(kinds(spn).count("unreachable") == 1);
    CHECK(spn.reachable(0));
    CHECK_FALSE(spn.reachable(1));
  }

  SUBCASE("root scope misses a variable") {
    std::vector<Node> nodes;
    nodes.push_back(LeafNode{0, Bernoulli{0.5}});
    Spn spn(std::move(nodes), 0, 2);
    CHECK(kinds(spn).count("root-scope") == 1);
  }
}

TEST_CASE("edge index is dense and ordered") {
  Spn spn = tiny_mixture();
  auto edges = spn.sum_edges();
  REQUIRE(edges.size() == 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    CHECK(spn.edge_index(edges[i]) == i);
  CHECK(std::is_sorted(edges.begin(), edges.end()));
}

TEST_CASE("weights_flat round trip") {
  Spn spn = tiny_mixture();
  auto w = spn.weights_flat();
  REQUIRE(w.size() == 2);
  CHECK(w[0] == 0.3);
  CHECK(w[1] == 0.4);
  w[0] = 1.25;
  spn.set_weights_flat(w);
  CHECK(spn.weight(EdgeRef{6, 0}) == 1.25);
}

TEST_CASE("copy_subgraph preserves sharing") {
  // Shared leaf under two products.
  std::vector<Node> nodes;
  nodes.push_back(LeafNode{0, Bernoulli{0.5}});   // shared
  nodes.push_back(LeafNode{1, Bernoulli{0.3}});
  nodes.push_back(LeafNode{1, Bernoulli{0.8}});
  nodes.push_back(ProductNode{{0, 1}});
  nodes.push_back(ProductNode{{0, 2}});
  nodes.push_back(SumNode{{3, 4}, {1.0, 1.0}});
  Spn spn(std::move(nodes), 5, 2);

  auto copy = copy_subgraph(spn, std::vector<NodeId>{3, 4});
  REQUIRE(copy.mapped_roots.size() == 2);
  // Leaf 0 must appear exactly once in the copied store.
  std::size_t bern_half = 0;
  for (const auto& n : copy.nodes)
    if (const auto* leaf = std::get_if<LeafNode>(&n))
      if (leaf->variable == 0) ++bern_half;
  CHECK(bern_half == 1);
  CHECK(copy.nodes.size() == 5);
}

TEST_CASE("mixture builders") {
  Rng rng(99);
  Spn spn = build_shallow_mixture(4, 3, rng);
  CHECK(spn.num_variables() == 3);
  CHECK(spn.sum_edge_count() == 4);
  CHECK(spn.validate().empty());
  for (double w : spn.weights_flat()) CHECK(w == 0.0);
  const auto& root = spn.sum(spn.root());
  for (NodeId c : root.children) {
    CHECK(spn.is_product(c));
    CHECK(spn.product(c).children.size() == 3);
  }

  Spn given = build_mixture({0.25, 0.75}, {{0.1, 0.2}, {0.3, 0.4}});
  CHECK(given.validate().empty());
  CHECK(given.weights_flat() == std::vector<double>{0.25, 0.75});
  CHECK(given.leaf(given.product(given.sum(given.root()).children[1])
                       .children[0])
            .dist == LeafDistribution{Bernoulli{0.3}});
}

TEST_CASE("random generator emits valid networks of many shapes") {
  Rng rng(20240101);
  RandomSpnOptions opt;
  std::set<std::size_t> sizes;
  for (int i = 0; i < 40; ++i) {
    Spn spn = random_valid_spn(rng, opt);
    CAPTURE(i);
    CHECK(spn.validate().empty());
    sizes.insert(spn.node_count());
  }
  CHECK(sizes.size() > 5);  // actually varied
}
