#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "sumflow/overparam.hpp"
#include "sumflow/report.hpp"
#include "sumflow/training.hpp"

using namespace sumflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempFile {
  fs::path path;
  explicit TempFile(const char* name)
      : path(fs::temp_directory_path() / name) {}
  ~TempFile() { std::remove(path.string().c_str()); }
};

ExperimentResult tiny_experiment() {
  Dataset data = synthesize(3, 4, 80, 31).data;
  ExperimentConfig cfg;
  cfg.components = 3;
  cfg.depths = {1, 2};
  cfg.runs = 1;
  cfg.iterations = 10;
  cfg.seed = 31;
  return run_experiment(data, cfg);
}

}  // namespace

TEST_CASE("curves csv layout") {
  ExperimentResult result = tiny_experiment();
  TempFile f("sumflow_test_curves.csv");
  write_curves_csv(f.path, result);
  std::istringstream in(slurp(f.path));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "L,run,iteration,llh_per_sample");
  std::size_t rows = 0;
  int l = 0, run = 0, iter = 0;
  double v = 0.0;
  while (std::getline(in, line)) {
    REQUIRE(std::sscanf(line.c_str(), "%d,%d,%d,%lg", &l, &run, &iter, &v) ==
            4);
    ++rows;
  }
  // Two cells, 11 llh entries each.
  CHECK(rows == 22);
  CHECK(l == 2);
  CHECK(iter == 10);
}

TEST_CASE("dynamics csv layout and residual column") {
  Dataset data = synthesize(3, 4, 40, 77).data;
  Rng rng(77);
  Spn mixture = build_shallow_mixture(3, 4, rng);
  DeepMixture deep = overparameterize(mixture, 2, 1);
  Rng init(78);
  initialize_near_zero(deep.spn, 0.05, init);
  TrainConfig cfg;
  cfg.eta = 1e-3;
  cfg.iterations = 5;
  cfg.record_dynamics = true;
  TrainTrace trace = train(deep.spn, data, cfg, &deep.map);
  REQUIRE(trace.dynamics.has_value());

  TempFile f("sumflow_test_dynamics.csv");
  write_dynamics_csv(f.path, *trace.dynamics);
  std::istringstream in(slurp(f.path));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line ==
        "t,k,w_effective,grad_effective,rho,lambda,predicted_next,"
        "actual_next,residual,rho_first_layer");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    int t = 0, k = 0;
    double w, g, rho, lambda, pred, act, res, rho1;
    REQUIRE(std::sscanf(line.c_str(),
                        "%d,%d,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg", &t, &k, &w,
                        &g, &rho, &lambda, &pred, &act, &res, &rho1) == 10);
    CHECK(res == doctest::Approx(act - pred).epsilon(1e-9));
    // Two layers: the textbook coefficient coincides with the general one.
    CHECK(rho1 == doctest::Approx(rho).epsilon(1e-12));
    ++rows;
  }
  CHECK(rows == 5 * 3);
}

TEST_CASE("summary json structure and determinism") {
  ExperimentResult result = tiny_experiment();
  ExperimentConfig cfg;
  cfg.components = 3;
  cfg.depths = {1, 2};
  cfg.runs = 1;
  cfg.iterations = 10;
  cfg.seed = 31;

  TempFile f("sumflow_test_summary.json");
  write_summary_json(f.path, result, cfg);
  const std::string first = slurp(f.path);
  write_summary_json(f.path, result, cfg);
  CHECK(slurp(f.path) == first);  // byte-identical rewrite

  nlohmann::json doc = nlohmann::json::parse(first);
  CHECK(doc["config"]["components"] == 3);
  CHECK(doc["config"]["seed"] == 31);
  REQUIRE(doc["depths"].size() == 2);
  CHECK(doc["depths"][0]["cells"].size() == 1);
  CHECK(doc["depths"][0]["cells"][0].contains("final_llh_per_sample"));
  CHECK(doc["depths"][0]["cells"][0].contains("iterations_to_threshold"));
  REQUIRE(doc.contains("speedups"));
  // Speedup of the first depth against itself is 1 by construction.
  CHECK(doc["speedups"][0]["iterations_vs_first_depth"] ==
        doctest::Approx(1.0));
}

TEST_CASE("curve chart is self-contained svg") {
  ExperimentResult result = tiny_experiment();
  TempFile f("sumflow_test_curves.svg");
  write_curves_svg(f.path, result);
  const std::string svg = slurp(f.path);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  // One polyline per (depth, run).
  std::size_t count = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos;
       at = svg.find("<polyline", at + 1))
    ++count;
  CHECK(count == 2);
}

TEST_CASE("regression csv layout") {
  LinregData data = make_linreg_fixture(16, 3, 5);
  std::vector<double> w0(3, 0.0), w1_0(3, 0.5);
  LinregTrace trace = linreg_demo(data, 2, 0.02, 6, w0, w1_0, 0.9);
  TempFile f("sumflow_test_linreg.csv");
  write_linreg_csv(f.path, trace);
  std::istringstream in(slurp(f.path));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,loss_direct,loss_product,rho,lambda,max_identity_residual");
  std::size_t rows = 0;
  double last_running_max = 0.0;
  while (std::getline(in, line)) {
    int t;
    double ld, lp, rho, lambda, runmax;
    REQUIRE(std::sscanf(line.c_str(), "%d,%lg,%lg,%lg,%lg,%lg", &t, &ld, &lp,
                        &rho, &lambda, &runmax) == 6);
    CHECK(runmax >= last_running_max);  // running maximum never decreases
    last_running_max = runmax;
    ++rows;
  }
  CHECK(rows == 7);
}

TEST_CASE("sha256 of a known vector") {
  TempFile f("sumflow_test_abc.bin");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "abc";
  }
  CHECK(sha256_file(f.path) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest round trip") {
  RunManifest m;
  m.argv = {"sumflow", "train", "--data", "d.csv"};
  m.inputs = {{"d.csv", "00ff"}};
  m.outputs = {{"model.json", "ab"}, {"curve.csv", "cd"}};
  TempFile f("sumflow_test_manifest.json");
  write_manifest(f.path, m);
  RunManifest back = read_manifest(f.path);
  CHECK(back.argv == m.argv);
  REQUIRE(back.inputs.size() == 1);
  CHECK(back.inputs[0].path == "d.csv");
  CHECK(back.inputs[0].sha256 == "00ff");
  REQUIRE(back.outputs.size() == 2);
  CHECK(back.outputs[1].path == "curve.csv");
}
