#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sumflow/overparam.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

/// Snapshot of one gradient-ascent iteration of an overparameterised
/// mixture, everything indexed by component. Weights and gradients are
/// taken before the step; `layer_grads` are the gradients actually applied
/// (already carrying the trainer's per-sample scaling, if any), so the
/// update was w[l] += eta * layer_grads[l] followed by clamping.
struct DynamicsStep {
  std::vector<std::vector<double>> layer_weights;  // [k][l], root first
  std::vector<std::vector<double>> layer_grads;    // [k][l]
  std::vector<double> effective_weight;            // [k] product over layers
  std::vector<double> effective_grad;              // [k] d objective / d w_eff
  std::vector<double> actual_next;                 // [k] effective after step
  std::vector<char> clamped;                       // [k] a chain edge clamped
};

struct DynamicsRecord {
  double eta = 0.0;
  std::size_t components = 0;
  std::vector<DynamicsStep> steps;
};

/// Degenerate layer weights below this magnitude make rho/lambda blow up;
/// such components are flagged and left out of aggregate statistics.
inline constexpr double kSingularFloor = 1e-12;

/// First-order expansion of one step of the deep system in terms of the
/// effective weight: dropping O(eta^2) terms, the product of the updated
/// layers obeys
///   w_eff' ~ w_eff + eta * sum_l grad_l * prod_{m != l} w_m
/// which splits into an adaptive-rate part rho * effective_grad and a
/// momentum-like part lambda * w_eff, where the chain rule ties layer
/// gradients to the effective gradient (grad_l = effective_grad *
/// prod_{m != l} w_m):
///   rho    = eta * (prod over all layers but the last)^2
///   lambda = eta * sum over all layers but the last of grad_l / w_l.
/// `rho_first_layer` is the two-layer textbook form eta * (w[0])^2, equal
/// to rho when there are exactly two layers.
struct FirstOrderStep {
  std::vector<double> predicted_next;   // [k]
  std::vector<double> rho;              // [k]
  std::vector<double> lambda;           // [k]
  std::vector<double> rho_first_layer;  // [k]
  std::vector<char> flagged;            // [k] singular layer weight
};

FirstOrderStep first_order_step(const DynamicsStep& step, double eta,
                                double floor = kSingularFloor);

/// Whole-record convenience: one FirstOrderStep per recorded iteration.
std::vector<FirstOrderStep> first_order_trajectory(
    const DynamicsRecord& record);

/// Closed-form reconstruction of the effective-weight trajectory from the
/// recorded rho/lambda/effective gradients:
///   mu(t, tau) = rho(tau) * prod_{s = tau+1}^{t-1} (1 + lambda(s))
///   w(t) ~ prod_{s < t} (1 + lambda(s)) * w(0) + sum_{tau < t} mu(t, tau) * grad(tau)
/// i.e. gradient ascent on the product acts like momentum with iteration
/// dependent coefficients. Residuals compare against the recorded actual
/// trajectory; flagged components are excluded from the maxima.
struct MomentumUnroll {
  std::vector<std::vector<double>> reconstructed;  // [t][k], t = 0..steps
  std::vector<std::vector<std::vector<double>>> mu;  // [t][tau][k], tau < t
  std::vector<double> step_residual;               // [t] max_k |recon-actual|
  double max_residual = 0.0;
  double max_abs_weight = 0.0;  // scale reference over the actual trajectory
  std::vector<char> flagged;    // [k] singular at some step
};

MomentumUnroll unroll_momentum(const DynamicsRecord& record);

/// --- Linear-regression companion ------------------------------------
/// The same acceleration story on l_p regression, small enough to check
/// by hand: loss(w) = mean over samples of (x.w - y)^p / p, maximised on
/// -loss (equivalently gradient descent). Overparameterising w = w1 * w2
/// with scalar w2 turns plain gradient descent into the adaptive-rate +
/// momentum scheme above with rho = eta * w2^2 and lambda = eta *
/// grad_w2 / w2; the second-order leftover per step is exactly
/// eta^2 * grad_w1 * grad_w2 (coordinatewise), which the demo records.

struct LinregData {
  std::vector<std::vector<double>> x;  // N x D
  std::vector<double> y;               // N
};

/// Deterministic ill-conditioned fixture: D features with geometrically
/// decaying scales, targets from a fixed planted weight vector plus small
/// deterministic pseudo-noise.
LinregData make_linreg_fixture(std::size_t samples, std::int32_t dims,
                               std::uint64_t seed);

struct LinregStep {
  std::vector<double> w_direct;     // plain gradient descent iterate
  std::vector<double> w_product;    // w1 * w2 of the two-factor iterate
  std::vector<double> w1;
  double w2 = 0.0;
  double loss_direct = 0.0;
  double loss_product = 0.0;
  double rho = 0.0;
  double lambda = 0.0;
  std::vector<double> identity_residual;  // per-coordinate, one step back
};

struct LinregTrace {
  std::vector<LinregStep> steps;  // index t = 0..iterations
  double max_identity_residual = 0.0;
};

/// Runs both parameterisations side by side from the same initial product
/// and records the per-step decomposition. p must be even and >= 2.
LinregTrace linreg_demo(const LinregData& data, int p, double eta,
                        int iterations, std::span<const double> w0,
                        std::span<const double> w1_0, double w2_0);

}  // namespace sumflow
