#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sumflow/data_io.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// State of one variable in a query.
enum class ObsValue : std::uint8_t { kZero = 0, kOne = 1, kMarginalized = 2 };

/// Complete query over all variables; marginalised entries integrate the
/// variable out (leaf contributes total mass 1).
class Assignment {
 public:
  explicit Assignment(std::vector<ObsValue> values)
      : values_(std::move(values)) {}
  static Assignment all_marginalized(std::int32_t num_variables) {
    return Assignment(std::vector<ObsValue>(
        static_cast<std::size_t>(num_variables), ObsValue::kMarginalized));
  }
  static Assignment from_row(std::span<const std::uint8_t> bits) {
    std::vector<ObsValue> v(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
      v[i] = bits[i] ? ObsValue::kOne : ObsValue::kZero;
    return Assignment(std::move(v));
  }

  ObsValue operator[](std::int32_t v) const {
    return values_[static_cast<std::size_t>(v)];
  }
  ObsValue& operator[](std::int32_t v) {
    return values_[static_cast<std::size_t>(v)];
  }
  std::int32_t size() const { return static_cast<std::int32_t>(values_.size()); }

 private:
  std::vector<ObsValue> values_;
};

/// log(sum_i exp(v_i)) with max shift; -inf entries are skipped, all -inf
/// (or empty) yields -inf.
double log_sum_exp(std::span<const double> values);

/// log of the mass a single leaf assigns to one observation state.
double leaf_log_mass(const LeafNode& leaf, ObsValue x);

/// Per-node log values of one bottom-up pass. Entries are only defined for
/// nodes reachable from the root.
struct EvalTrace {
  std::vector<double> log_values;
  double root_log_value = kNegInf;
};

/// Bottom-up log evaluation. Sum nodes skip zero-weight children inside
/// the log-sum-exp so that w=0 acts as exact absence; a node value of 0
/// becomes -inf, never a NaN. Pre: valid SPN (weights >= 0, acyclic).
EvalTrace log_value(const Spn& spn, const Assignment& x);

/// log f(*) where every variable is marginalised; this is the value an
/// unnormalised network divides by. -inf when all paths carry zero weight.
double log_partition(const Spn& spn);

/// Log likelihood of the model on data, normalising by the partition value:
/// sum_n log f(x_n) - N * log f(*).
struct LogLikelihood {
  double value = kNegInf;
  /// First sample with f(x) == 0, when that made the value -inf.
  std::optional<std::size_t> first_zero_sample;
  bool finite() const;
};

LogLikelihood log_likelihood(const Spn& spn, const Dataset& data);

/// Worker count controlled by SUMFLOW_THREADS (unset or invalid -> 1).
int configured_threads();

/// Number of chunks parallel_chunks() will split `count` items into under
/// the current thread setting; use it to presize per-chunk accumulators.
std::size_t chunk_count(std::size_t count);

/// Deterministic chunked map over [0, count): chunk_count(count) contiguous
/// pieces, run on up to configured_threads() threads. fn(chunk, begin, end)
/// must only write chunk-local state; combination is the caller's job, in
/// chunk order, so results are reproducible for a fixed thread setting.
void parallel_chunks(std::size_t count,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn);

}  // namespace sumflow
