#include "sumflow/data_io.hpp"

#include <fstream>
#include <sstream>

namespace sumflow {

Dataset::Dataset(std::size_t rows, std::int32_t cols,
                 std::vector<std::uint8_t> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (cols_ <= 0) throw Error("dataset: need at least one column");
  if (values_.size() != rows_ * static_cast<std::size_t>(cols_))
    throw Error("dataset: value buffer does not match rows*cols");
  for (std::uint8_t v : values_) {
    if (v > 1) throw Error("dataset: values must be 0 or 1");
  }
}

Dataset parse_binary_csv(std::string_view text) {
  std::vector<std::uint8_t> values;
  std::int32_t cols = -1;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::size_t rows = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    // Delimiters: commas, spaces and tabs, runs collapsed. Copies of the
    // same public dataset disagree on which one they use.
    const auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t'; };
    std::int32_t field = 0;
    std::size_t i = 0;
    while (i < line.size()) {
      if (is_sep(line[i])) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end < line.size() && !is_sep(line[end])) ++end;
      std::string_view cell = line.substr(i, end - i);
      if (cell != "0" && cell != "1")
        throw ParseError("expected 0 or 1, got '" + std::string(cell) + "'",
                         line_no, i + 1);
      values.push_back(cell == "1" ? 1 : 0);
      ++field;
      i = end;
    }
    if (field > 0) {
      if (cols < 0) {
        cols = field;
      } else if (field != cols) {
        throw ParseError("row has " + std::to_string(field) +
                             " fields, expected " + std::to_string(cols),
                         line_no, 1);
      }
      ++rows;
    }
    if (eol == text.size()) break;
    pos = eol + 1;
  }
  if (rows == 0) throw ParseError("no data rows", line_no, 1);
  return Dataset(rows, cols, std::move(values));
}

Dataset load_binary_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_binary_csv(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line(), e.column());
  }
}

void write_binary_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  std::string line;
  for (std::size_t n = 0; n < data.rows(); ++n) {
    line.clear();
    for (std::int32_t d = 0; d < data.cols(); ++d) {
      if (d) line += ',';
      line += data.at(n, d) ? '1' : '0';
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error("write failed: " + path.string());
}

Synthesis synthesize(std::int32_t components, std::int32_t dims,
                     std::size_t samples, std::uint64_t seed) {
  if (components <= 0 || dims <= 0)
    throw Error("synthesize: components and dims must be positive");
  Rng rng(splitmix64(seed));
  MixtureParams params;
  params.weights.resize(components);
  double total = 0.0;
  for (double& w : params.weights) {
    w = rng.uniform(0.2, 1.0);  // bounded away from 0 so no component starves
    total += w;
  }
  for (double& w : params.weights) w /= total;
  params.leaf_p.resize(components);
  for (auto& row : params.leaf_p) {
    row.resize(dims);
    // Sparse indicator data with a per-component block of active variables,
    // the shape of survey-style binary tables: mostly zeros, strong
    // component structure.
    for (double& p : row)
      p = rng.bernoulli(0.35) ? rng.uniform(0.5, 0.95)
                              : rng.uniform(0.01, 0.15);
  }
  return synthesize(params, samples, seed);
}

Synthesis synthesize(const MixtureParams& params, std::size_t samples,
                     std::uint64_t seed) {
  if (params.weights.empty() || params.leaf_p.size() != params.weights.size())
    throw Error("synthesize: malformed mixture parameters");
  if (samples == 0) throw Error("synthesize: need at least one sample");
  const std::int32_t dims = static_cast<std::int32_t>(params.leaf_p[0].size());
  Rng rng(splitmix64(seed ^ 0x5deece66dull));
  std::vector<std::uint8_t> values;
  values.reserve(samples * static_cast<std::size_t>(dims));
  std::vector<double> cumulative(params.weights.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    acc += params.weights[k];
    cumulative[k] = acc;
  }
  for (std::size_t n = 0; n < samples; ++n) {
    const double u = rng.uniform() * acc;
    std::size_t k = 0;
    while (k + 1 < cumulative.size() && u >= cumulative[k]) ++k;
    const auto& p = params.leaf_p[k];
    if (static_cast<std::int32_t>(p.size()) != dims)
      throw Error("synthesize: ragged mixture parameters");
    for (std::int32_t d = 0; d < dims; ++d)
      values.push_back(rng.bernoulli(p[d]) ? 1 : 0);
  }
  return Synthesis{Dataset(samples, dims, std::move(values)),
                   params};
}

}  // namespace sumflow
