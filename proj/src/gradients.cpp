#include "sumflow/gradients.hpp"

#include <algorithm>
#include <cmath>

namespace sumflow {

namespace {

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace

NodeDerivatives backprop(const Spn& spn, const EvalTrace& trace) {
  NodeDerivatives out;
  out.log_derivs.assign(spn.node_count(), kNegInf);
  out.log_derivs[spn.root()] = 0.0;

  auto topo = spn.topological_order();
  // Parents before children: walk the topological order backwards.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const NodeId id = *it;
    if (!spn.reachable(id) || spn.is_leaf(id)) continue;
    const double ld = out.log_derivs[id];
    if (ld == kNegInf) continue;

    if (spn.is_sum(id)) {
      const SumNode& s = spn.sum(id);
      for (std::size_t c = 0; c < s.children.size(); ++c) {
        if (s.weights[c] <= 0.0) continue;
        double& slot = out.log_derivs[s.children[c]];
        slot = log_add_exp(slot, ld + std::log(s.weights[c]));
      }
    } else {
      const ProductNode& p = spn.product(id);
      // d(prod)/d(child) = product of siblings. Track zero children by
      // count so the "all siblings" product is safe when one value is 0.
      double finite_sum = 0.0;
      int zero_count = 0;
      for (NodeId child : p.children) {
        const double lv = trace.log_values[child];
        if (lv == kNegInf) {
          ++zero_count;
        } else {
          finite_sum += lv;
        }
      }
      for (NodeId child : p.children) {
        const double lv = trace.log_values[child];
        double sibling_sum;
        if (lv == kNegInf) {
          sibling_sum = zero_count == 1 ? finite_sum : kNegInf;
        } else {
          sibling_sum = zero_count == 0 ? finite_sum - lv : kNegInf;
        }
        if (sibling_sum == kNegInf) continue;
        double& slot = out.log_derivs[child];
        slot = log_add_exp(slot, ld + sibling_sum);
      }
    }
  }
  return out;
}

namespace {

// Per-edge terms C_e(x) / f(x) of one assignment, added into `acc`.
void accumulate_edge_terms(const Spn& spn, const EvalTrace& trace,
                           const NodeDerivatives& derivs, double scale,
                           std::vector<double>& acc) {
  const double root = trace.root_log_value;
  for (std::size_t i = 0; i < spn.sum_edges().size(); ++i) {
    const EdgeRef e = spn.sum_edges()[i];
    if (!spn.reachable(e.node)) continue;
    const double ld = derivs.log_derivs[e.node];
    if (ld == kNegInf) continue;
    const double lv =
        trace.log_values[spn.sum(e.node).children[static_cast<std::size_t>(
            e.child)]];
    if (lv == kNegInf) continue;
    acc[i] += scale * std::exp(ld + lv - root);
  }
}

}  // namespace

GradientMap llh_gradients(const Spn& spn, const Dataset& data) {
  if (data.cols() != spn.num_variables())
    throw Error("llh_gradients: dataset arity does not match the network");
  const std::size_t edges = spn.sum_edge_count();
  const std::size_t n = data.rows();

  const std::size_t chunks = chunk_count(n);
  std::vector<std::vector<double>> chunk_acc(chunks,
                                             std::vector<double>(edges, 0.0));
  std::vector<std::ptrdiff_t> chunk_bad(chunks, -1);
  parallel_chunks(n, [&](std::size_t chunk, std::size_t begin,
                         std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const EvalTrace trace =
          log_value(spn, Assignment::from_row(data.row(i)));
      if (trace.root_log_value == kNegInf) {
        if (chunk_bad[chunk] < 0)
          chunk_bad[chunk] = static_cast<std::ptrdiff_t>(i);
        return;
      }
      const NodeDerivatives derivs = backprop(spn, trace);
      accumulate_edge_terms(spn, trace, derivs, 1.0, chunk_acc[chunk]);
    }
  });
  for (std::ptrdiff_t bad : chunk_bad) {
    if (bad >= 0)
      throw NonFiniteError("llh_gradients: sample has zero probability mass",
                           bad);
  }

  const Assignment marg = Assignment::all_marginalized(spn.num_variables());
  const EvalTrace z_trace = log_value(spn, marg);
  if (z_trace.root_log_value == kNegInf)
    throw NonFiniteError("llh_gradients: partition value is zero");
  const NodeDerivatives z_derivs = backprop(spn, z_trace);

  GradientMap grad(edges);
  for (const auto& acc : chunk_acc) {
    for (std::size_t i = 0; i < edges; ++i) grad[i] += acc[i];
  }
  std::vector<double> z_terms(edges, 0.0);
  accumulate_edge_terms(spn, z_trace, z_derivs, 1.0, z_terms);
  for (std::size_t i = 0; i < edges; ++i)
    grad[i] -= static_cast<double>(n) * z_terms[i];
  return grad;
}

std::vector<double> bernoulli_leaf_gradients(const Spn& spn,
                                             const Dataset& data) {
  if (data.cols() != spn.num_variables())
    throw Error("leaf_gradients: dataset arity does not match the network");
  std::vector<double> grad(spn.node_count(), 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const Assignment x = Assignment::from_row(data.row(i));
    const EvalTrace trace = log_value(spn, x);
    if (trace.root_log_value == kNegInf)
      throw NonFiniteError("leaf_gradients: sample has zero probability mass",
                           static_cast<std::ptrdiff_t>(i));
    const NodeDerivatives derivs = backprop(spn, trace);
    for (NodeId id = 0; id < spn.node_count(); ++id) {
      if (!spn.reachable(id) || !spn.is_leaf(id)) continue;
      const LeafNode& leaf = spn.leaf(id);
      if (!std::holds_alternative<Bernoulli>(leaf.dist)) continue;
      const double ld = derivs.log_derivs[id];
      if (ld == kNegInf) continue;
      // d leaf / d p is +1 when x=1, -1 when x=0; the marginalised leaf has
      // constant value 1, so the partition term is identically zero.
      const double sign = x[leaf.variable] == ObsValue::kOne ? 1.0 : -1.0;
      grad[id] += sign * std::exp(ld - trace.root_log_value);
    }
  }
  return grad;
}

namespace {

double llh_value_or_throw(const Spn& spn, const Dataset& data) {
  const LogLikelihood llh = log_likelihood(spn, data);
  if (!llh.finite())
    throw NonFiniteError(
        "finite differences: objective non-finite at evaluation point",
        llh.first_zero_sample ? static_cast<std::ptrdiff_t>(
                                    *llh.first_zero_sample)
                              : -1);
  return llh.value;
}

}  // namespace

FdResult finite_difference_gradient(const Spn& spn, const Dataset& data,
                                    double h_scale) {
  FdResult out;
  const std::size_t edges = spn.sum_edge_count();
  out.grad = GradientMap(edges);
  out.flags.assign(edges, FdFlag::kCentral);

  Spn work = spn;  // weights are mutated and restored edge by edge
  const auto at = [&](const EdgeRef e, double value) {
    work.set_weight(e, value);
    return llh_value_or_throw(work, data);
  };
  for (std::size_t i = 0; i < edges; ++i) {
    const EdgeRef e = spn.sum_edges()[i];
    const double w = spn.weight(e);
    const double h = h_scale * std::max(1.0, std::abs(w));
    if (w - h >= 0.0) {
      // Richardson extrapolation of two symmetric quotients kills the h^2
      // truncation term; the wider base step keeps the objective's own
      // rounding noise (~eps*|llh|/h) far below the quotient.
      const double wide = (at(e, w + h) - at(e, w - h)) / (2.0 * h);
      const double narrow = (at(e, w + 0.5 * h) - at(e, w - 0.5 * h)) / h;
      out.grad[i] = (4.0 * narrow - wide) / 3.0;
    } else {
      out.flags[i] = FdFlag::kClamped;
      const double f_hi = at(e, w + h);
      const double f_lo = at(e, 0.0);
      out.grad[i] = (f_hi - f_lo) / (w + h);
    }
    work.set_weight(e, w);
  }
  return out;
}

std::vector<double> finite_difference_leaf_gradient(const Spn& spn,
                                                    const Dataset& data,
                                                    double h_scale) {
  std::vector<double> grad(spn.node_count(), 0.0);
  Spn work = spn;
  for (NodeId id = 0; id < spn.node_count(); ++id) {
    if (!spn.is_leaf(id)) continue;
    const LeafNode& leaf = spn.leaf(id);
    const auto* b = std::get_if<Bernoulli>(&leaf.dist);
    if (!b) continue;
    const double p = b->p;
    const auto at = [&](double value) {
      work.set_leaf(id, Bernoulli{value});
      return llh_value_or_throw(work, data);
    };
    const double h = h_scale * std::max(1.0, std::abs(p));
    if (p - h >= 0.0 && p + h <= 1.0) {
      const double wide = (at(p + h) - at(p - h)) / (2.0 * h);
      const double narrow = (at(p + 0.5 * h) - at(p - 0.5 * h)) / h;
      grad[id] = (4.0 * narrow - wide) / 3.0;
    } else {
      const double lo = std::max(0.0, p - h);
      const double hi = std::min(1.0, p + h);
      grad[id] = (at(hi) - at(lo)) / (hi - lo);
    }
    work.set_leaf(id, Bernoulli{p});
  }
  return grad;
}

}  // namespace sumflow
