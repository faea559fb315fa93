#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sumflow/data_io.hpp"
#include "sumflow/evaluation.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

/// log |df/dS_i| per node for one evaluated assignment (derivatives of the
/// root value w.r.t. each node's output). Everything is non-negative in an
/// SPN, so log space loses nothing. -inf where the derivative is zero;
/// unreachable nodes stay -inf.
struct NodeDerivatives {
  std::vector<double> log_derivs;
};

/// Reverse pass matching `trace`. Handles shared nodes (multiple parents
/// accumulate) and zero-valued product children without forming 0/0.
NodeDerivatives backprop(const Spn& spn, const EvalTrace& trace);

/// One value per sum edge, addressed by Spn::edge_index order.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(std::size_t edge_count) : values_(edge_count, 0.0) {}

  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }
  double at(const Spn& spn, EdgeRef e) const {
    return values_[spn.edge_index(e)];
  }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

 private:
  std::vector<double> values_;
};

/// Gradient of the data log likelihood (normalised by the partition value)
/// with respect to every sum weight:
///   d/dw LLH = sum_n C(x_n)/f(x_n) - N * C(*)/f(*)
/// where C is the weight's partial circuit derivative. Throws NonFiniteError
/// if some sample (or the partition) has zero mass.
GradientMap llh_gradients(const Spn& spn, const Dataset& data);

/// d LLH / d p for every Bernoulli leaf, indexed by node id (zero entries
/// for other nodes). The partition term vanishes: total leaf mass is 1
/// regardless of p.
std::vector<double> bernoulli_leaf_gradients(const Spn& spn,
                                             const Dataset& data);

enum class FdFlag : std::uint8_t {
  kCentral = 0,   // symmetric two-sided step
  kClamped = 1,   // lower point clamped at w=0, step shortened
};

struct FdResult {
  GradientMap grad;
  std::vector<FdFlag> flags;  // one per edge
};

/// Central finite differences of the same objective, Richardson-extrapolated
/// (symmetric quotients at h and h/2), step h = h_scale * max(1, |w|).
/// Near w=0 the lower evaluation point is clamped to 0 and a plain divided
/// difference over the true interval is used instead.
FdResult finite_difference_gradient(const Spn& spn, const Dataset& data,
                                    double h_scale = 1e-4);

/// Finite differences for Bernoulli leaf parameters (same stepping rule,
/// clamped into [0, 1]); zero entries for non-Bernoulli nodes.
std::vector<double> finite_difference_leaf_gradient(const Spn& spn,
                                                    const Dataset& data,
                                                    double h_scale = 1e-4);

}  // namespace sumflow
