#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "sumflow/data_io.hpp"

using namespace sumflow;
namespace fs = std::filesystem;

TEST_CASE("csv parsing accepts plain 0/1 rows") {
  Dataset d = parse_binary_csv("1,0,1\n0,0,0\n1,1,1\n");
  CHECK(d.rows() == 3);
  CHECK(d.cols() == 3);
  CHECK(d.at(0, 0) == 1);
  CHECK(d.at(0, 1) == 0);
  CHECK(d.at(2, 2) == 1);
}

TEST_CASE("csv parsing tolerates blank lines, CRLF and missing final newline") {
  Dataset d = parse_binary_csv("1,0\r\n\n0,1");
  CHECK(d.rows() == 2);
  CHECK(d.cols() == 2);
  CHECK(d.at(1, 0) == 0);
  CHECK(d.at(1, 1) == 1);
}

TEST_CASE("space- and tab-delimited files parse the same as commas") {
  Dataset commas = parse_binary_csv("1,0,1\n0,1,1\n");
  CHECK(parse_binary_csv("1 0 1\n0 1 1\n") == commas);
  CHECK(parse_binary_csv("1\t0\t1\n0\t1\t1\n") == commas);
  // Mixed separators, padding and separator-only lines also occur in the
  // wild; a run of separators counts as one.
  CHECK(parse_binary_csv("1, 0, 1\n  0 1\t1  \n") == commas);
  CHECK(parse_binary_csv("1,0,1\n \t \n0,1,1\n") == commas);
}

TEST_CASE("csv parse errors carry a position") {
  SUBCASE("non-binary token") {
    try {
      parse_binary_csv("1,0\n1,2\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 3);
    }
  }
  SUBCASE("ragged row") {
    CHECK_THROWS_AS(parse_binary_csv("1,0\n1\n"), ParseError);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(parse_binary_csv(""), ParseError);
  }
  SUBCASE("stray character") {
    try {
      parse_binary_csv("1,0\n0,1x\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 3);
    }
  }
}

TEST_CASE("csv writing round trips") {
  Dataset d = parse_binary_csv("1,0,1\n0,1,0\n");
  fs::path p = fs::temp_directory_path() / "sumflow_test_roundtrip.csv";
  write_binary_csv(d, p);
  Dataset back = load_binary_csv(p);
  CHECK(back == d);
  std::remove(p.string().c_str());
}

TEST_CASE("synthesis is deterministic in the seed") {
  Synthesis a = synthesize(3, 5, 64, 42);
  Synthesis b = synthesize(3, 5, 64, 42);
  Synthesis c = synthesize(3, 5, 64, 43);
  CHECK(a.data == b.data);
  CHECK(a.params.weights == b.params.weights);
  CHECK_FALSE(a.data == c.data);
  CHECK(a.data.rows() == 64);
  CHECK(a.data.cols() == 5);

  double total = 0.0;
  for (double w : a.params.weights) {
    CHECK(w > 0.0);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // Leaf probabilities are either background-sparse or active, never in
  // the dead zone between the two bands.
  for (const auto& comp : a.params.leaf_p)
    for (double p : comp) {
      CHECK(p >= 0.01);
      CHECK(p <= 0.95);
      CHECK((p <= 0.15 || p >= 0.5));
    }
}

TEST_CASE("synthesis from fixed parameters matches marginals roughly") {
  // One component with extreme-ish leaf probabilities: the sample mean of
  // each column must approach the leaf probability.
  MixtureParams params;
  params.weights = {1.0};
  params.leaf_p = {{0.8, 0.2}};
  Synthesis s = synthesize(params, 20000, 7);
  double mean0 = 0.0, mean1 = 0.0;
  for (std::size_t n = 0; n < s.data.rows(); ++n) {
    mean0 += s.data.at(n, 0);
    mean1 += s.data.at(n, 1);
  }
  mean0 /= static_cast<double>(s.data.rows());
  mean1 /= static_cast<double>(s.data.rows());
  CHECK(mean0 == doctest::Approx(0.8).epsilon(0.02));
  CHECK(mean1 == doctest::Approx(0.2).epsilon(0.08));
}
