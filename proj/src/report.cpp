#include "sumflow/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sumflow/error.hpp"
#include "sumflow/serialization.hpp"

namespace sumflow {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

void write_curves_csv(const std::filesystem::path& path,
                      const ExperimentResult& result) {
  std::ofstream out = open_out(path);
  out << "L,run,iteration,llh_per_sample\n";
  for (const ExperimentCell& cell : result.cells) {
    const double n = static_cast<double>(cell.samples);
    for (std::size_t t = 0; t < cell.trace.llh.size(); ++t) {
      out << cell.depth << ',' << cell.run << ',' << t << ','
          << format_double(cell.trace.llh[t] / n) << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

void write_dynamics_csv(const std::filesystem::path& path,
                        const DynamicsRecord& record) {
  std::ofstream out = open_out(path);
  out << "t,k,w_effective,grad_effective,rho,lambda,predicted_next,"
         "actual_next,residual,rho_first_layer\n";
  const std::vector<FirstOrderStep> coeffs = first_order_trajectory(record);
  for (std::size_t t = 0; t < record.steps.size(); ++t) {
    const DynamicsStep& step = record.steps[t];
    const FirstOrderStep& fo = coeffs[t];
    for (std::size_t k = 0; k < record.components; ++k) {
      out << t << ',' << k << ',' << format_double(step.effective_weight[k])
          << ',' << format_double(step.effective_grad[k]) << ',';
      if (fo.flagged[k]) {
        out << "nan,nan,nan," << format_double(step.actual_next[k])
            << ",nan,nan\n";
        continue;
      }
      out << format_double(fo.rho[k]) << ',' << format_double(fo.lambda[k])
          << ',' << format_double(fo.predicted_next[k]) << ','
          << format_double(step.actual_next[k]) << ','
          << format_double(step.actual_next[k] - fo.predicted_next[k]) << ','
          << format_double(fo.rho_first_layer[k]) << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

void write_summary_json(const std::filesystem::path& path,
                        const ExperimentResult& result,
                        const ExperimentConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["config"] = {{"components", cfg.components},
                   {"depths", cfg.depths},
                   {"branching", cfg.branching},
                   {"runs", cfg.runs},
                   {"eta", cfg.eta},
                   {"iterations", cfg.iterations},
                   {"init_scale", cfg.init_scale},
                   {"clamp_floor", cfg.clamp_floor},
                   {"seed", cfg.seed},
                   {"threshold_nats", cfg.threshold_nats}};
  nlohmann::ordered_json depths = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.depths.size(); ++i) {
    nlohmann::ordered_json d;
    d["L"] = result.depths[i];
    d["mean_iterations_to_threshold"] =
        result.mean_iterations_to_threshold[i];
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const ExperimentCell& cell : result.cells) {
      if (cell.depth != result.depths[i]) continue;
      // wall time deliberately left out: reports must be byte-identical
      // across replays of the same seed
      cells.push_back({{"run", cell.run},
                       {"seed", cell.seed},
                       {"iterations_to_threshold",
                        cell.iterations_to_threshold},
                       {"final_llh_per_sample", cell.final_llh_per_sample},
                       {"clamp_events", cell.trace.clamp_events}});
    }
    d["cells"] = std::move(cells);
    depths.push_back(std::move(d));
  }
  doc["depths"] = std::move(depths);
  if (!result.depths.empty()) {
    const double base = result.mean_iterations_to_threshold.front();
    nlohmann::ordered_json speedups = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < result.depths.size(); ++i) {
      speedups.push_back(
          {{"L", result.depths[i]},
           {"iterations_vs_first_depth",
            base > 0.0 ? result.mean_iterations_to_threshold[i] / base : 1.0}});
    }
    doc["speedups"] = std::move(speedups);
  }
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

namespace {

std::string svg_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void write_curves_svg(const std::filesystem::path& path,
                      const ExperimentResult& result) {
  const double width = 860, height = 540;
  const double ml = 70, mr = 170, mt = 30, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double lo = 0.0, hi = 1.0;
  std::size_t max_t = 1;
  bool first = true;
  for (const ExperimentCell& cell : result.cells) {
    const double n = static_cast<double>(cell.samples);
    max_t = std::max(max_t, cell.trace.llh.size());
    for (double v : cell.trace.llh) {
      const double y = v / n;
      if (!std::isfinite(y)) continue;
      if (first) {
        lo = hi = y;
        first = false;
      } else {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pad = 0.04 * (hi - lo);
  lo -= pad;
  hi += pad;

  const auto x_of = [&](double t) {
    return ml + pw * (t / static_cast<double>(max_t - 1));
  };
  const auto y_of = [&](double v) {
    return mt + ph * (1.0 - (v - lo) / (hi - lo));
  };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' '
      << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes + ticks
  svg << "<g stroke=\"#333\" stroke-width=\"1\">\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + ph << "\"/>\n</g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double tv = static_cast<double>(max_t - 1) * i / 5.0;
    const double vv = lo + (hi - lo) * i / 5.0;
    svg << "<text x=\"" << svg_coord(x_of(tv)) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\">" << static_cast<long>(tv)
        << "</text>\n";
    char vbuf[32];
    std::snprintf(vbuf, sizeof(vbuf), "%.2f", vv);
    svg << "<text x=\"" << ml - 8 << "\" y=\""
        << svg_coord(y_of(vv) + 4) << "\" text-anchor=\"end\">" << vbuf
        << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">iteration</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" transform=\"rotate(-90 18 " << mt + ph / 2
      << ")\" text-anchor=\"middle\">log-likelihood per sample</text>\n";
  svg << "</g>\n";

  for (const ExperimentCell& cell : result.cells) {
    const double n = static_cast<double>(cell.samples);
    const char* colour =
        kPalette[static_cast<std::size_t>(
                     std::find(result.depths.begin(), result.depths.end(),
                               cell.depth) -
                     result.depths.begin()) %
                 (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << colour
        << "\" stroke-width=\"1.5\" stroke-opacity=\""
        << (cell.run == 0 ? "0.95" : "0.55") << "\" points=\"";
    for (std::size_t t = 0; t < cell.trace.llh.size(); ++t) {
      const double y = cell.trace.llh[t] / n;
      if (!std::isfinite(y)) continue;
      svg << svg_coord(x_of(static_cast<double>(t))) << ','
          << svg_coord(y_of(y)) << ' ';
    }
    svg << "\"/>\n";
  }

  // legend: one swatch per depth
  double ly = mt + 10;
  svg << "<g font-family=\"sans-serif\" font-size=\"13\" fill=\"#333\">\n";
  for (std::size_t i = 0; i < result.depths.size(); ++i) {
    const char* colour = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<rect x=\"" << ml + pw + 16 << "\" y=\"" << ly - 10
        << "\" width=\"18\" height=\"4\" fill=\"" << colour << "\"/>\n"
        << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly - 4 << "\">L = "
        << result.depths[i] << " (" << svg_coord(
               result.mean_iterations_to_threshold[i])
        << " iters to converge)</text>\n";
    ly += 22;
  }
  svg << "</g>\n</svg>\n";

  std::ofstream out = open_out(path);
  out << svg.str();
  if (!out) throw Error("write failed: " + path.string());
}

void write_linreg_csv(const std::filesystem::path& path,
                      const LinregTrace& trace) {
  std::ofstream out = open_out(path);
  out << "t,loss_direct,loss_product,rho,lambda,max_identity_residual\n";
  double running = 0.0;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const LinregStep& s = trace.steps[t];
    for (double r : s.identity_residual)
      running = std::max(running, std::abs(r));
    out << t << ',' << format_double(s.loss_direct) << ','
        << format_double(s.loss_product) << ',' << format_double(s.rho) << ','
        << format_double(s.lambda) << ',' << format_double(running) << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for hashing: " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("sha256: context allocation failed");
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: init failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0 &&
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw Error("sha256: update failed");
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: final failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const RunManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["argv"] = manifest.argv;
  const auto entries = [](const std::vector<ManifestEntry>& list) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const ManifestEntry& e : list)
      arr.push_back({{"path", e.path}, {"sha256", e.sha256}});
    return arr;
  };
  doc["inputs"] = entries(manifest.inputs);
  doc["outputs"] = entries(manifest.outputs);
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("manifest: " + std::string(e.what()));
  }
  RunManifest out;
  for (const auto& a : doc.at("argv")) out.argv.push_back(a.get<std::string>());
  const auto read_entries = [](const nlohmann::json& arr) {
    std::vector<ManifestEntry> list;
    for (const auto& e : arr)
      list.push_back({e.at("path").get<std::string>(),
                      e.at("sha256").get<std::string>()});
    return list;
  };
  out.inputs = read_entries(doc.value("inputs", nlohmann::json::array()));
  out.outputs = read_entries(doc.value("outputs", nlohmann::json::array()));
  return out;
}

}  // namespace sumflow
