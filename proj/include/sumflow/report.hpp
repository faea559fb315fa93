#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sumflow/dynamics.hpp"
#include "sumflow/training.hpp"

namespace sumflow {

/// Convergence curves, one row per (depth, run, iteration):
/// L,run,iteration,llh_per_sample
void write_curves_csv(const std::filesystem::path& path,
                      const ExperimentResult& result);

/// Recorded per-component dynamics, one row per (iteration, component):
/// t,k,w_effective,grad_effective,rho,lambda,predicted_next,actual_next,
/// residual,rho_first_layer. residual = actual_next - predicted_next;
/// flagged (near-singular) components print nan for rho/lambda/predictions.
void write_dynamics_csv(const std::filesystem::path& path,
                        const DynamicsRecord& record);

/// Per-depth aggregates plus configuration echo, as a small JSON document.
void write_summary_json(const std::filesystem::path& path,
                        const ExperimentResult& result,
                        const ExperimentConfig& cfg);

/// Line chart of llh/sample against iteration, one polyline per (depth,
/// run). Self-contained SVG.
void write_curves_svg(const std::filesystem::path& path,
                      const ExperimentResult& result);

/// Steps of the regression demo as CSV:
/// t,loss_direct,loss_product,rho,lambda,max_identity_residual_so_far
void write_linreg_csv(const std::filesystem::path& path,
                      const LinregTrace& trace);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;    // as recorded, relative to the manifest's directory
  std::string sha256;
};

/// Everything needed to re-run a command and check the outputs: argv of
/// the producing invocation, input digests, output digests. Replaying
/// re-executes argv as recorded and compares fresh output digests against
/// the recorded ones, so paths should be absolute (or the replay must run
/// from the original working directory).
struct RunManifest {
  std::vector<std::string> argv;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
};

void write_manifest(const std::filesystem::path& path,
                    const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace sumflow
