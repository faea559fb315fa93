#include "sumflow/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "sumflow/error.hpp"

namespace sumflow {

FirstOrderStep first_order_step(const DynamicsStep& step, double eta,
                                double floor) {
  const std::size_t K = step.layer_weights.size();
  FirstOrderStep out;
  out.predicted_next.resize(K);
  out.rho.resize(K);
  out.lambda.resize(K);
  out.rho_first_layer.resize(K);
  out.flagged.assign(K, 0);

  std::vector<double> prefix, suffix;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& w = step.layer_weights[k];
    const auto& g = step.layer_grads[k];
    const std::size_t depth = w.size();

    bool singular = false;
    for (double wl : w) singular = singular || std::abs(wl) < floor;
    out.flagged[k] = singular ? 1 : 0;

    // prod_{m != l} w_m without dividing, via prefix/suffix products.
    prefix.assign(depth + 1, 1.0);
    suffix.assign(depth + 1, 1.0);
    for (std::size_t l = 0; l < depth; ++l) prefix[l + 1] = prefix[l] * w[l];
    for (std::size_t l = depth; l-- > 0;) suffix[l] = suffix[l + 1] * w[l];

    double increment = 0.0;
    for (std::size_t l = 0; l < depth; ++l)
      increment += g[l] * prefix[l] * suffix[l + 1];
    out.predicted_next[k] = step.effective_weight[k] + eta * increment;

    // All layers but the deepest act as the adaptive coefficients; with a
    // single layer this degenerates to rho = eta, lambda = 0 (plain ascent).
    const double head = prefix[depth - 1];  // prod_{l < depth-1} w_l
    out.rho[k] = eta * head * head;
    double lam = 0.0;
    for (std::size_t l = 0; l + 1 < depth; ++l) lam += g[l] / w[l];
    out.lambda[k] = eta * lam;
    out.rho_first_layer[k] = depth >= 2 ? eta * w[0] * w[0] : eta;
  }
  return out;
}

std::vector<FirstOrderStep> first_order_trajectory(
    const DynamicsRecord& record) {
  std::vector<FirstOrderStep> out;
  out.reserve(record.steps.size());
  for (const DynamicsStep& step : record.steps)
    out.push_back(first_order_step(step, record.eta));
  return out;
}

MomentumUnroll unroll_momentum(const DynamicsRecord& record) {
  const std::size_t T = record.steps.size();
  const std::size_t K = record.components;
  MomentumUnroll out;
  out.flagged.assign(K, 0);
  if (T == 0) return out;

  std::vector<FirstOrderStep> coeffs = first_order_trajectory(record);
  for (const FirstOrderStep& c : coeffs) {
    for (std::size_t k = 0; k < K; ++k)
      out.flagged[k] = out.flagged[k] || c.flagged[k];
  }

  // mu[t][tau][k] = rho(tau) * prod_{s=tau+1}^{t-1} (1 + lambda(s));
  // extended incrementally: mu[t+1][tau] = mu[t][tau] * (1 + lambda(t)),
  // mu[t+1][t] = rho(t).
  out.mu.resize(T + 1);
  out.reconstructed.assign(T + 1, std::vector<double>(K, 0.0));
  out.step_residual.assign(T + 1, 0.0);

  const std::vector<double>& w0 = record.steps[0].effective_weight;
  out.reconstructed[0] = w0;

  std::vector<double> lead(K, 1.0);  // prod_{s<t} (1 + lambda(s))
  for (std::size_t t = 0; t < T; ++t) {
    out.mu[t + 1].assign(t + 1, std::vector<double>(K, 0.0));
    for (std::size_t tau = 0; tau < t; ++tau) {
      for (std::size_t k = 0; k < K; ++k)
        out.mu[t + 1][tau][k] =
            out.mu[t][tau][k] * (1.0 + coeffs[t].lambda[k]);
    }
    for (std::size_t k = 0; k < K; ++k) out.mu[t + 1][t][k] = coeffs[t].rho[k];
    for (std::size_t k = 0; k < K; ++k)
      lead[k] *= 1.0 + coeffs[t].lambda[k];

    for (std::size_t k = 0; k < K; ++k) {
      double acc = lead[k] * w0[k];
      for (std::size_t tau = 0; tau <= t; ++tau)
        acc += out.mu[t + 1][tau][k] * record.steps[tau].effective_grad[k];
      out.reconstructed[t + 1][k] = acc;
    }
  }

  for (std::size_t t = 0; t <= T; ++t) {
    const std::vector<double>& actual =
        t < T ? record.steps[t].effective_weight
              : record.steps[T - 1].actual_next;
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (out.flagged[k]) continue;
      worst = std::max(worst, std::abs(out.reconstructed[t][k] - actual[k]));
      out.max_abs_weight = std::max(out.max_abs_weight, std::abs(actual[k]));
    }
    out.step_residual[t] = worst;
    out.max_residual = std::max(out.max_residual, worst);
  }
  return out;
}

LinregData make_linreg_fixture(std::size_t samples, std::int32_t dims,
                               std::uint64_t seed) {
  if (samples == 0 || dims <= 0) throw Error("linreg: empty fixture");
  Rng rng(splitmix64(seed ^ 0x11b7a5d1ull));
  LinregData data;
  data.x.assign(samples, std::vector<double>(dims, 0.0));
  data.y.assign(samples, 0.0);
  // Geometrically shrinking feature scales give the loss the skewed
  // curvature that makes plain gradient descent crawl.
  std::vector<double> scale(dims), planted(dims);
  for (std::int32_t d = 0; d < dims; ++d) {
    scale[d] = std::pow(0.5, d);
    planted[d] = (d % 2 == 0 ? 1.0 : -1.0) * (1.0 + d) /
                 static_cast<double>(dims);
  }
  for (std::size_t n = 0; n < samples; ++n) {
    double dot = 0.0;
    for (std::int32_t d = 0; d < dims; ++d) {
      data.x[n][d] = scale[d] * rng.uniform(-1.0, 1.0);
      dot += data.x[n][d] * planted[d];
    }
    data.y[n] = dot + 0.01 * rng.uniform(-1.0, 1.0);
  }
  return data;
}

namespace {

double linreg_loss(const LinregData& data, std::span<const double> w, int p) {
  double acc = 0.0;
  for (std::size_t n = 0; n < data.x.size(); ++n) {
    double r = -data.y[n];
    for (std::size_t d = 0; d < w.size(); ++d) r += data.x[n][d] * w[d];
    acc += std::pow(r, p) / p;
  }
  return acc / static_cast<double>(data.x.size());
}

// gradient of the mean l_p loss at w
std::vector<double> linreg_grad(const LinregData& data,
                                std::span<const double> w, int p) {
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t n = 0; n < data.x.size(); ++n) {
    double r = -data.y[n];
    for (std::size_t d = 0; d < w.size(); ++d) r += data.x[n][d] * w[d];
    const double f = std::pow(r, p - 1);
    for (std::size_t d = 0; d < w.size(); ++d) g[d] += f * data.x[n][d];
  }
  for (double& v : g) v /= static_cast<double>(data.x.size());
  return g;
}

}  // namespace

LinregTrace linreg_demo(const LinregData& data, int p, double eta,
                        int iterations, std::span<const double> w0,
                        std::span<const double> w1_0, double w2_0) {
  if (p < 2 || p % 2 != 0)
    throw Error("linreg: exponent p must be even and >= 2");
  if (iterations < 0) throw Error("linreg: negative iteration count");
  const std::size_t D = w0.size();
  if (w1_0.size() != D || data.x.empty() ||
      data.x[0].size() != D)
    throw Error("linreg: dimension mismatch");

  LinregTrace trace;
  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> w1(w1_0.begin(), w1_0.end());
  double w2 = w2_0;
  std::vector<double> carried_residual;  // belongs to the arriving state

  for (int t = 0; t <= iterations; ++t) {
    LinregStep step;
    step.w_direct = w;
    step.w1 = w1;
    step.w2 = w2;
    step.w_product.resize(D);
    for (std::size_t d = 0; d < D; ++d) step.w_product[d] = w1[d] * w2;
    step.loss_direct = linreg_loss(data, w, p);
    step.loss_product = linreg_loss(data, step.w_product, p);
    step.identity_residual = std::move(carried_residual);
    carried_residual.clear();

    const std::vector<double> g_prod = linreg_grad(data, step.w_product, p);
    double g_w2 = 0.0;
    for (std::size_t d = 0; d < D; ++d) g_w2 += g_prod[d] * w1[d];
    step.rho = eta * w2 * w2;
    step.lambda = std::abs(w2) < kSingularFloor ? 0.0 : eta * g_w2 / w2;

    trace.steps.push_back(std::move(step));
    if (t == iterations) break;

    const LinregStep& cur = trace.steps.back();
    // descent on both parameterisations
    const std::vector<double> g_direct = linreg_grad(data, w, p);
    for (std::size_t d = 0; d < D; ++d) w[d] -= eta * g_direct[d];
    for (std::size_t d = 0; d < D; ++d) w1[d] -= eta * g_prod[d] * w2;
    w2 -= eta * g_w2;

    // The exact one-step identity: the new product differs from
    //   old - rho * grad - lambda * old
    // by eta^2 * grad_w1 * grad_w2, coordinatewise.
    carried_residual.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
      const double linearised = cur.w_product[d] - cur.rho * g_prod[d] -
                                cur.lambda * cur.w_product[d];
      carried_residual[d] = w1[d] * w2 - linearised;
      trace.max_identity_residual =
          std::max(trace.max_identity_residual, std::abs(carried_residual[d]));
    }
  }
  return trace;
}

}  // namespace sumflow
