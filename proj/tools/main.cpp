#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>

#include "sumflow/data_io.hpp"
#include "sumflow/dynamics.hpp"
#include "sumflow/evaluation.hpp"
#include "sumflow/overparam.hpp"
#include "sumflow/report.hpp"
#include "sumflow/serialization.hpp"
#include "sumflow/training.hpp"
#include "sumflow/verify.hpp"

namespace fs = std::filesystem;
using namespace sumflow;

namespace {

// Exit codes: 0 success, 1 failed checks / violations / diverged runs,
// 2 usage, parse or I/O problems.
constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kBadInput = 2;

int run_cli(const std::vector<std::string>& args);

int cmd_validate(const std::string& model_path) {
  const ParsedModel model =
      load_model(model_path, /*validate=*/false);
  const std::vector<Violation> violations = model.spn.validate();
  if (violations.empty()) {
    std::cout << "valid: " << model.spn.node_count() << " nodes, "
              << model.spn.sum_edge_count() << " sum edges, "
              << model.spn.num_variables() << " variables\n";
    return kOk;
  }
  for (const Violation& v : violations)
    std::cout << "violation: " << v.to_string() << '\n';
  std::cout << violations.size() << " violation(s)\n";
  return kFailed;
}

struct TrainArgs {
  std::string data_path;
  std::string model_path;
  std::int32_t components = 8;
  std::int32_t depth = 1;
  std::int32_t branching = 1;
  double eta = 0.01;
  std::int64_t iterations = 500;
  std::uint64_t seed = 20240101;
  double init_scale = 0.01;
  double clamp_floor = 1e-8;
  std::string grad_scale = "mean";
  bool train_leaves = false;
  std::string out_model;
  std::string curve_path;
  std::string dynamics_path;
  std::string manifest_path;
  std::string out_dir;
};

int cmd_train(TrainArgs a, const std::vector<std::string>& argv) {
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    if (a.out_model.empty()) a.out_model = (dir / "model.json").string();
    if (a.curve_path.empty()) a.curve_path = (dir / "curve.csv").string();
    if (a.manifest_path.empty())
      a.manifest_path = (dir / "manifest.json").string();
  }
  const Dataset data = load_binary_csv(a.data_path);

  std::optional<LayerIndexMap> map;
  Spn spn = [&] {
    if (!a.model_path.empty()) {
      // Loaded models may carry their chain map; without one, train()
      // falls back to per-root-edge chains when recording dynamics.
      ParsedModel model = load_model(a.model_path);
      map = std::move(model.layer_map);
      return std::move(model.spn);
    }
    Rng rng(splitmix64(a.seed));
    Spn mixture = build_shallow_mixture(a.components, data.cols(), rng);
    DeepMixture deep = overparameterize(mixture, a.depth, a.branching);
    initialize_near_zero(deep.spn, a.init_scale, rng);
    map = std::move(deep.map);
    return std::move(deep.spn);
  }();

  TrainConfig cfg;
  cfg.eta = a.eta;
  cfg.iterations = a.iterations;
  cfg.seed = a.seed;
  cfg.init_scale = a.init_scale;
  cfg.clamp_floor = a.clamp_floor;
  cfg.train_leaves = a.train_leaves;
  cfg.record_dynamics = !a.dynamics_path.empty();
  cfg.gradient_scale = a.grad_scale == "total" ? GradientScale::kTotal
                                               : GradientScale::kMeanPerSample;

  const TrainTrace trace = train(spn, data, cfg, map ? &*map : nullptr);

  const double n = static_cast<double>(data.rows());
  std::cout << "llh/sample: " << trace.llh.front() / n << " -> "
            << trace.llh.back() / n << " over " << a.iterations
            << " iterations (" << trace.clamp_events << " clamp events, "
            << trace.wall_ms << " ms)\n";

  std::vector<ManifestEntry> outputs;
  if (!a.out_model.empty()) {
    save_model(a.out_model, spn, map ? &*map : nullptr);
    outputs.push_back({a.out_model, sha256_file(a.out_model)});
  }
  if (!a.curve_path.empty()) {
    ExperimentResult single;
    single.depths = {a.depth};
    single.mean_iterations_to_threshold = {0.0};
    ExperimentCell cell;
    cell.depth = a.depth;
    cell.run = 0;
    cell.seed = a.seed;
    cell.samples = data.rows();
    cell.trace = trace;
    single.cells.push_back(std::move(cell));
    write_curves_csv(a.curve_path, single);
    outputs.push_back({a.curve_path, sha256_file(a.curve_path)});
  }
  if (!a.dynamics_path.empty()) {
    if (!trace.dynamics)
      throw Error("train: dynamics were not recorded");
    write_dynamics_csv(a.dynamics_path, *trace.dynamics);
    outputs.push_back({a.dynamics_path, sha256_file(a.dynamics_path)});
  }
  if (!a.manifest_path.empty()) {
    RunManifest manifest;
    manifest.argv = argv;
    manifest.inputs.push_back({a.data_path, sha256_file(a.data_path)});
    if (!a.model_path.empty())
      manifest.inputs.push_back({a.model_path, sha256_file(a.model_path)});
    manifest.outputs = std::move(outputs);
    write_manifest(a.manifest_path, manifest);
  }
  return kOk;
}

struct ReproArgs {
  std::string data_path;
  std::string out_dir;
  ExperimentConfig cfg;
  std::int32_t synth_dims = 16;
  std::size_t synth_samples = 16181;
  bool synth_requested = false;
};

int cmd_repro(const ReproArgs& a, const std::vector<std::string>& argv) {
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);

  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;

  Dataset data = [&] {
    if (!a.data_path.empty()) {
      Dataset d = load_binary_csv(a.data_path);
      inputs.push_back({a.data_path, sha256_file(a.data_path)});
      return d;
    }
    // Stand-in corpus with the same shape as the benchmark table the
    // study targets; persisted next to the results for inspection.
    if (!a.synth_requested)
      std::cerr << "no --data given; sampling a synthetic stand-in ("
                << a.synth_samples << " x " << a.synth_dims << ")\n";
    Synthesis s = synthesize(a.cfg.components, a.synth_dims, a.synth_samples,
                             a.cfg.seed ^ 0xda7aull);
    const fs::path p = dir / "dataset.csv";
    write_binary_csv(s.data, p);
    outputs.push_back({p.string(), sha256_file(p)});
    return std::move(s.data);
  }();

  const ExperimentResult result = run_experiment(data, a.cfg);

  const fs::path curves = dir / "curves.csv";
  const fs::path summary = dir / "summary.json";
  const fs::path plot = dir / "curves.svg";
  write_curves_csv(curves, result);
  write_summary_json(summary, result, a.cfg);
  write_curves_svg(plot, result);
  outputs.push_back({curves.string(), sha256_file(curves)});
  outputs.push_back({summary.string(), sha256_file(summary)});
  outputs.push_back({plot.string(), sha256_file(plot)});

  RunManifest manifest;
  manifest.argv = argv;
  manifest.inputs = std::move(inputs);
  manifest.outputs = std::move(outputs);
  write_manifest(dir / "manifest.json", manifest);

  for (std::size_t i = 0; i < result.depths.size(); ++i) {
    std::cout << "L=" << result.depths[i]
              << ": mean iterations to threshold = "
              << result.mean_iterations_to_threshold[i] << '\n';
  }
  bool monotone = true;
  for (std::size_t i = 1; i < result.depths.size(); ++i)
    monotone = monotone && result.mean_iterations_to_threshold[i] <=
                               result.mean_iterations_to_threshold[i - 1];
  std::cout << (monotone ? "depth ordering: deeper converges no slower\n"
                         : "depth ordering: NOT monotone for this seed\n");
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckResult> results;
  if (suite == "gradients") {
    results = verify_gradients(seed);
  } else if (suite == "trees") {
    results = verify_trees(seed);
  } else if (suite == "transform") {
    results = verify_transform(seed);
  } else if (suite == "dynamics") {
    results = verify_dynamics(seed);
  } else {
    results = verify_all(seed);
  }
  std::size_t failed = 0;
  for (const CheckResult& r : results) {
    if (!r.passed) ++failed;
    std::cout << (r.passed ? "ok   " : "FAIL ") << r.name
              << "  residual=" << r.residual;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ')';
    std::cout << '\n';
  }
  std::cout << results.size() - failed << '/' << results.size()
            << " checks passed\n";
  return failed == 0 ? kOk : kFailed;
}

struct LinregArgs {
  int p = 2;
  double eta = 0.05;
  int iterations = 200;
  std::int32_t dims = 5;
  std::size_t samples = 48;
  std::uint64_t seed = 7;
  std::string out_path;
};

int cmd_linreg(const LinregArgs& a) {
  const LinregData data = make_linreg_fixture(a.samples, a.dims, a.seed);
  std::vector<double> w0(a.dims, 0.0);
  std::vector<double> w1_0(a.dims, 0.5);
  const LinregTrace trace =
      linreg_demo(data, a.p, a.eta, a.iterations, w0, w1_0, 0.8);
  const LinregStep& last = trace.steps.back();
  std::cout << "after " << a.iterations << " iterations (p=" << a.p
            << ", eta=" << a.eta << "):\n"
            << "  direct loss      " << last.loss_direct << '\n'
            << "  two-factor loss  " << last.loss_product << '\n'
            << "  max |identity residual| " << trace.max_identity_residual
            << "  (should scale as eta^2)\n";
  if (!a.out_path.empty()) write_linreg_csv(a.out_path, trace);
  return kOk;
}

struct SynthArgs {
  std::int32_t components = 8;
  std::int32_t dims = 16;
  std::size_t samples = 16181;
  std::uint64_t seed = 20240101;
  std::string out_path;
};

int cmd_synthesize(const SynthArgs& a) {
  const Synthesis s = synthesize(a.components, a.dims, a.samples, a.seed);
  write_binary_csv(s.data, a.out_path);
  std::cout << "wrote " << s.data.rows() << " x "
            << static_cast<int>(s.data.cols()) << " samples to " << a.out_path
            << '\n';
  return kOk;
}

int cmd_replay(const std::string& manifest_path) {
  const RunManifest manifest = read_manifest(manifest_path);
  if (manifest.argv.empty()) throw Error("replay: manifest has empty argv");
  std::cout << "replaying:";
  for (const std::string& a : manifest.argv) std::cout << ' ' << a;
  std::cout << '\n';

  std::vector<std::string> args(manifest.argv.begin() + 1,
                                manifest.argv.end());
  const int rc = run_cli(args);
  if (rc != kOk) {
    std::cout << "replayed command exited with " << rc << '\n';
    return rc;
  }
  std::size_t mismatched = 0;
  for (const ManifestEntry& e : manifest.outputs) {
    const std::string now = sha256_file(e.path);
    if (now != e.sha256) {
      ++mismatched;
      std::cout << "mismatch: " << e.path << "\n  recorded " << e.sha256
                << "\n  replayed " << now << '\n';
    }
  }
  if (mismatched == 0) {
    std::cout << manifest.outputs.size()
              << " output(s) reproduced byte for byte\n";
    return kOk;
  }
  return kFailed;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{
      "sum-product networks: likelihood training, depth transform, "
      "convergence measurements"};
  app.require_subcommand(1);

  // validate
  std::string model_path;
  CLI::App* validate =
      app.add_subcommand("validate", "check a model file's invariants");
  validate->add_option("model", model_path, "model JSON file")->required();

  // train
  TrainArgs ta;
  CLI::App* train_cmd =
      app.add_subcommand("train", "gradient-ascent likelihood training");
  train_cmd->add_option("--data", ta.data_path, "binary CSV dataset")
      ->required();
  train_cmd->add_option("--model", ta.model_path,
                        "existing model to continue training (skips the "
                        "build/deepen/initialise steps)");
  train_cmd->add_option("--components", ta.components, "mixture components")
      ->capture_default_str();
  train_cmd->add_option("--depth,--layers", ta.depth,
                        "sum layers on each root-to-component path")
      ->capture_default_str();
  train_cmd->add_option("--branching", ta.branching,
                        "grouping factor of the deepened root region")
      ->capture_default_str();
  train_cmd->add_option("--eta", ta.eta, "step size")->capture_default_str();
  train_cmd->add_option("--iterations,--iters", ta.iterations,
                        "gradient steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--seed", ta.seed, "rng seed")->capture_default_str();
  train_cmd->add_option("--init-scale", ta.init_scale,
                        "weights start uniform in (0, this]")
      ->capture_default_str();
  train_cmd->add_option("--clamp-floor", ta.clamp_floor,
                        "post-step weight floor")->capture_default_str();
  train_cmd->add_option("--grad-scale", ta.grad_scale,
                        "gradient scaling: mean or total")
      ->check(CLI::IsMember({"mean", "total"}))
      ->capture_default_str();
  train_cmd->add_flag("--train-leaves", ta.train_leaves,
                      "also ascend Bernoulli leaf probabilities");
  train_cmd->add_option("--out-model", ta.out_model, "write trained model");
  train_cmd->add_option("--curve", ta.curve_path, "write llh curve CSV");
  train_cmd->add_option("--dynamics", ta.dynamics_path,
                        "record and write per-component dynamics CSV");
  train_cmd->add_option("--manifest", ta.manifest_path,
                        "write a replayable run manifest");
  train_cmd->add_option("--out-dir", ta.out_dir,
                        "directory for the standard outputs (model.json, "
                        "curve.csv, manifest.json); explicit paths win");

  // repro-fig3
  ReproArgs ra;
  std::vector<std::int32_t> depths = {1, 2, 3};
  CLI::App* repro = app.add_subcommand(
      "repro-fig3",
      "depth sweep: same data, depths 1/2/3, two runs each; writes curves, "
      "summary, plot and manifest");
  CLI::Option* repro_data =
      repro->add_option("--data", ra.data_path,
                        "binary CSV dataset (omit to sample a synthetic "
                        "stand-in)");
  repro->add_flag("--synthesize", ra.synth_requested,
                  "sample the synthetic stand-in explicitly")
      ->excludes(repro_data);
  repro->add_option("--out-dir", ra.out_dir, "output directory")->required();
  repro->add_option("--components", ra.cfg.components, "mixture components")
      ->capture_default_str();
  repro->add_option("--depths,--layers", depths, "depths to sweep")
      ->capture_default_str();
  repro->add_option("--branching", ra.cfg.branching, "grouping factor")
      ->capture_default_str();
  repro->add_option("--runs", ra.cfg.runs, "repetitions per depth")
      ->capture_default_str();
  repro->add_option("--eta", ra.cfg.eta, "step size")->capture_default_str();
  repro->add_option("--iterations", ra.cfg.iterations, "gradient steps")
      ->capture_default_str();
  repro->add_option("--init-scale", ra.cfg.init_scale, "near-zero init scale")
      ->capture_default_str();
  repro->add_option("--seed", ra.cfg.seed, "base seed")->capture_default_str();
  repro->add_option("--threshold", ra.cfg.threshold_nats,
                    "nats/sample from own final defining convergence")
      ->capture_default_str();
  repro->add_option("--synthetic-dims", ra.synth_dims,
                    "variables of the synthetic stand-in")
      ->capture_default_str();
  repro->add_option("--synthetic-samples", ra.synth_samples,
                    "rows of the synthetic stand-in")
      ->capture_default_str();

  // verify
  std::string suite = "all";
  std::uint64_t verify_seed = 20240101;
  CLI::App* verify = app.add_subcommand(
      "verify", "numerical self-checks (gradients, trees, transform, "
                "dynamics)");
  verify->add_option("--suite", suite, "which suite")
      ->check(CLI::IsMember({"gradients", "trees", "transform", "dynamics",
                             "all"}))
      ->capture_default_str();
  verify->add_option("--seed", verify_seed, "rng seed")->capture_default_str();

  // linreg-demo
  LinregArgs la;
  CLI::App* linreg = app.add_subcommand(
      "linreg-demo",
      "the same acceleration effect on l_p linear regression");
  linreg->add_option("--p", la.p, "even loss exponent")->capture_default_str();
  linreg->add_option("--eta", la.eta, "step size")->capture_default_str();
  linreg->add_option("--iterations", la.iterations, "steps")
      ->capture_default_str();
  linreg->add_option("--dims", la.dims, "feature count")
      ->capture_default_str();
  linreg->add_option("--samples", la.samples, "sample count")
      ->capture_default_str();
  linreg->add_option("--seed", la.seed, "rng seed")->capture_default_str();
  linreg->add_option("--out", la.out_path, "write per-step CSV");

  // synthesize
  SynthArgs sa;
  CLI::App* synth = app.add_subcommand(
      "synthesize", "sample a dataset from a random mixture");
  synth->add_option("--components", sa.components, "mixture components")
      ->capture_default_str();
  synth->add_option("--dims", sa.dims, "variables")->capture_default_str();
  synth->add_option("--samples", sa.samples, "rows")->capture_default_str();
  synth->add_option("--seed", sa.seed, "rng seed")->capture_default_str();
  synth->add_option("--out,--emit", sa.out_path, "output CSV")->required();

  // replay
  std::string manifest_path;
  CLI::App* replay = app.add_subcommand(
      "replay", "re-run a manifest and check outputs are byte-identical");
  replay->add_option("manifest", manifest_path, "manifest JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  std::vector<std::string> argv_record;
  argv_record.push_back("sumflow");
  for (const std::string& a : args) argv_record.push_back(a);

  try {
    if (*validate) return cmd_validate(model_path);
    if (*train_cmd) return cmd_train(ta, argv_record);
    if (*repro) {
      ra.cfg.depths = depths;
      return cmd_repro(ra, argv_record);
    }
    if (*verify) return cmd_verify(suite, verify_seed);
    if (*linreg) return cmd_linreg(la);
    if (*synth) return cmd_synthesize(sa);
    if (*replay) return cmd_replay(manifest_path);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const NonFiniteError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kFailed;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  }
  return kBadInput;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}
