#include "sumflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace sumflow {

double log_sum_exp(std::span<const double> values) {
  double best = kNegInf;
  for (double v : values) best = std::max(best, v);
  if (best == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) {
    if (v != kNegInf) acc += std::exp(v - best);
  }
  return best + std::log(acc);
}

double leaf_log_mass(const LeafNode& leaf, ObsValue x) {
  if (x == ObsValue::kMarginalized) return 0.0;  // total mass of any leaf is 1
  if (const auto* b = std::get_if<Bernoulli>(&leaf.dist)) {
    return x == ObsValue::kOne ? std::log(b->p) : std::log1p(-b->p);
  }
  const auto& ind = std::get<Indicator>(leaf.dist);
  return (x == ObsValue::kOne) == (ind.value == 1) ? 0.0 : kNegInf;
}

EvalTrace log_value(const Spn& spn, const Assignment& x) {
  if (x.size() != spn.num_variables())
    throw Error("log_value: assignment arity does not match the network");
  EvalTrace trace;
  trace.log_values.assign(spn.node_count(),
                          std::numeric_limits<double>::quiet_NaN());
  std::vector<double> terms;
  for (NodeId id : spn.topological_order()) {
    if (!spn.reachable(id)) continue;
    double lv;
    if (spn.is_leaf(id)) {
      const LeafNode& leaf = spn.leaf(id);
      lv = leaf_log_mass(leaf, x[leaf.variable]);
    } else if (spn.is_product(id)) {
      lv = 0.0;
      for (NodeId child : spn.product(id).children)
        lv += trace.log_values[child];
    } else {
      const SumNode& s = spn.sum(id);
      terms.clear();
      for (std::size_t c = 0; c < s.children.size(); ++c) {
        const double w = s.weights[c];
        if (w > 0.0)
          terms.push_back(std::log(w) + trace.log_values[s.children[c]]);
      }
      lv = log_sum_exp(terms);
    }
    trace.log_values[id] = lv;
  }
  trace.root_log_value = trace.log_values[spn.root()];
  return trace;
}

double log_partition(const Spn& spn) {
  return log_value(spn, Assignment::all_marginalized(spn.num_variables()))
      .root_log_value;
}

bool LogLikelihood::finite() const { return std::isfinite(value); }

LogLikelihood log_likelihood(const Spn& spn, const Dataset& data) {
  if (data.cols() != spn.num_variables())
    throw Error("log_likelihood: dataset arity does not match the network");
  const double log_z = log_partition(spn);
  LogLikelihood out;
  if (log_z == kNegInf) {
    // Zero total mass: likelihood is undefined; surface it as -inf without
    // blaming any sample.
    out.value = kNegInf;
    return out;
  }

  const std::size_t n = data.rows();
  std::vector<double> chunk_sums(chunk_count(n), 0.0);
  std::vector<std::optional<std::size_t>> chunk_zero(chunk_sums.size());
  parallel_chunks(n, [&](std::size_t chunk, std::size_t begin,
                         std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double lv =
          log_value(spn, Assignment::from_row(data.row(i))).root_log_value;
      if (lv == kNegInf && !chunk_zero[chunk]) chunk_zero[chunk] = i;
      acc += lv;
    }
    chunk_sums[chunk] = acc;
  });

  double total = 0.0;
  for (double s : chunk_sums) total += s;
  for (const auto& z : chunk_zero) {
    if (z) {
      out.first_zero_sample = out.first_zero_sample
                                  ? std::min(*out.first_zero_sample, *z)
                                  : *z;
    }
  }
  out.value = total - static_cast<double>(n) * log_z;
  return out;
}

int configured_threads() {
  const char* env = std::getenv("SUMFLOW_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) return 1;
  return static_cast<int>(std::min<long>(v, 256));
}

std::size_t chunk_count(std::size_t count) {
  return std::min<std::size_t>(static_cast<std::size_t>(configured_threads()),
                               std::max<std::size_t>(count, 1));
}

void parallel_chunks(std::size_t count,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn) {
  const std::size_t threads = chunk_count(count);
  if (threads <= 1 || count == 0) {
    fn(0, 0, count);
    return;
  }
  const std::size_t per = (count + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t c = 0; c < threads; ++c) {
    const std::size_t begin = std::min(count, c * per);
    const std::size_t end = std::min(count, begin + per);
    pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sumflow
