#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sumflow/error.hpp"
#include "sumflow/rng.hpp"

namespace sumflow {

/// Dense N x D matrix of binary observations, row major.
class Dataset {
 public:
  Dataset(std::size_t rows, std::int32_t cols,
          std::vector<std::uint8_t> values);

  std::size_t rows() const { return rows_; }
  std::int32_t cols() const { return cols_; }
  std::uint8_t at(std::size_t n, std::int32_t d) const {
    return values_[n * static_cast<std::size_t>(cols_) +
                   static_cast<std::size_t>(d)];
  }
  std::span<const std::uint8_t> row(std::size_t n) const {
    return {values_.data() + n * static_cast<std::size_t>(cols_),
            static_cast<std::size_t>(cols_)};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t rows_;
  std::int32_t cols_;
  std::vector<std::uint8_t> values_;
};

/// 0/1 values, one sample per line, no header; fields split on commas,
/// spaces or tabs (dataset mirrors disagree). Blank lines are ignored;
/// anything else is a ParseError with line/column position.
Dataset parse_binary_csv(std::string_view text);
Dataset load_binary_csv(const std::filesystem::path& path);
void write_binary_csv(const Dataset& data, const std::filesystem::path& path);

/// Ground-truth parameters of a Bernoulli mixture used for sampling.
struct MixtureParams {
  std::vector<double> weights;              // K, sums to 1
  std::vector<std::vector<double>> leaf_p;  // K x D
};

struct Synthesis {
  Dataset data;
  MixtureParams params;
};

/// Draw `samples` rows from a randomly parameterised K-component mixture,
/// shaped like sparse survey indicator tables: component probabilities
/// Dirichlet-flat (normalised uniforms); each leaf probability is either
/// "active" (uniform in [0.5, 0.95], probability 0.35) or near-zero
/// background (uniform in [0.01, 0.15]).
Synthesis synthesize(std::int32_t components, std::int32_t dims,
                     std::size_t samples, std::uint64_t seed);

/// Same, but from caller-provided parameters.
Synthesis synthesize(const MixtureParams& params, std::size_t samples,
                     std::uint64_t seed);

}  // namespace sumflow
