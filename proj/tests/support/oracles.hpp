#pragma once

// Test-side oracles: an independent reference evaluator for finite
// differences, adaptive quadrature, batch-means standard errors, and the
// enumerable transport toy problem. Everything here is deliberately written
// against the plainest possible formulas, not the library's fast paths.

#include <cmath>
#include <functional>
#include <vector>

#include "bpinn/network.hpp"
#include "bpinn/pde.hpp"

namespace testsupport {

// Plain-loop masked MLP evaluation, kept independent of the jet propagation
// it checks.
inline double ref_value(const bpinn::NetworkState& state, double t, double x) {
  const auto& arch = state.arch;
  std::vector<double> a = {t, x};
  for (int i = 1; i <= arch.depth(); ++i) {
    const int rows = arch.layer_sizes[i], cols = arch.layer_sizes[i - 1];
    const int off = arch.layer_offset(i);
    std::vector<double> z(rows);
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      const int bias_idx = off + rows * cols + r;
      if (state.mask[bias_idx]) acc = state.weights[bias_idx];
      for (int c = 0; c < cols; ++c) {
        const int widx = off + r * cols + c;
        if (state.mask[widx]) acc += state.weights[widx] * a[c];
      }
      z[r] = (arch.layer_activation(i) == bpinn::Activation::kTanh)
                 ? std::tanh(acc)
                 : acc;
    }
    a = std::move(z);
  }
  return a[0];
}

struct FdJet {
  double v = 0, dt = 0, dx = 0, dxx = 0;
};

// Central finite differences on the evaluation-only forward pass.
inline FdJet fd_jet(const bpinn::NetworkState& state, const bpinn::Point& p,
                    double h = 1e-4) {
  FdJet out;
  out.v = ref_value(state, p.t, p.x);
  out.dt = (ref_value(state, p.t + h, p.x) - ref_value(state, p.t - h, p.x)) /
           (2 * h);
  out.dx = (ref_value(state, p.t, p.x + h) - ref_value(state, p.t, p.x - h)) /
           (2 * h);
  out.dxx = (ref_value(state, p.t, p.x + h) - 2 * out.v +
             ref_value(state, p.t, p.x - h)) /
            (h * h);
  return out;
}

// |a - b| measured against max(1, |a|, |b|).
inline double mixed_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Adaptive Simpson quadrature.
namespace detail {
inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}
}  // namespace detail

inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-10, int depth = 40) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
}

// Batch-means standard error of a (possibly autocorrelated) chain mean.
inline double batch_means_se(const std::vector<double>& x, int batches = 50) {
  const std::size_t n = x.size();
  const std::size_t len = n / batches;
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) acc += x[i];
    means.push_back(acc / len);
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= means.size();
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu);
  var /= (means.size() - 1);
  return std::sqrt(var / means.size());
}

// Transport toy: u_t + theta u_x = f on (0,1)^2 with f chosen so that the
// linear field u*(t,x) = 0.3 t + 0.7 x + 0.1 solves it at theta* = 0.5.
// With a single-layer linear network the posterior has closed-form
// sufficient statistics, so it can be integrated exhaustively.
inline bpinn::PdeSpec transport_toy_spec() {
  bpinn::PdeSpec s;
  s.name = "transport_toy";
  s.t_lo = 0.0; s.t_hi = 1.0;
  s.x_lo = 0.0; s.x_hi = 1.0;
  s.d = 1;
  s.deriv_order = 1;
  s.h0 = bpinn::linear_jet_functional(0, 1, 0, 0);   // u_t
  s.h1 = {bpinn::linear_jet_functional(0, 0, 1, 0)}; // u_x
  const double f0 = 0.3 + 0.7 * 0.5;
  s.forcing = [f0](const bpinn::Point&) { return f0; };
  s.true_theta = Eigen::VectorXd::Constant(1, 0.5);
  s.has_analytic = true;
  s.analytic_jet = [](const Eigen::VectorXd&, const bpinn::Point& p) {
    return bpinn::Jet2{0.3 * p.t + 0.7 * p.x + 0.1, 0.3, 0.7, 0.0};
  };
  return s;
}

}  // namespace testsupport
