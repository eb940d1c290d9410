#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

#include "bpinn/prior.hpp"

namespace bpinn {

struct ConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sufficient statistics of the residual: Phi_W, Sigma_W, |fbar_W|^2 and the
// ridge-minimized residual J(u_W) = |fbar|^2 - Phi' Sigma^{-1} Phi.
struct ResidualSummary {
  Eigen::VectorXd phi;    // d
  Eigen::MatrixXd sigma;  // d x d, SPD (ridge on the diagonal)
  double fbar_sq = 0.0;
  double j_value = 0.0;
  Eigen::LLT<Eigen::MatrixXd> sigma_llt;

  Eigen::VectorXd theta_hat() const { return sigma_llt.solve(phi); }
  double log_det_sigma() const {
    const auto& L = sigma_llt.matrixLLT();
    double ld = 0.0;
    for (int i = 0; i < L.rows(); ++i) ld += std::log(L(i, i));
    return 2.0 * ld;
  }
};

// Effective residual strength: alpha1 scales the interior residual energy,
// so it folds into lambda wherever the theta-quadratic appears.
inline double lambda_eff(const PriorConfig& config) {
  return config.lambda * config.alpha1;
}

namespace detail {

template <typename PointAt, typename JetAt>
ResidualSummary residual_summary_core(int N, PointAt&& point_at,
                                      JetAt&& jet_at, const PdeSpec& spec,
                                      const PriorConfig& config) {
  const int d = spec.d;
  if (N < d) throw std::invalid_argument("need at least d collocation points");
  const double le = lambda_eff(config);
  if (le <= 0.0)
    throw std::invalid_argument("residual summary needs lambda*alpha1 > 0");

  ResidualSummary s;
  s.phi = Eigen::VectorXd::Zero(d);
  s.sigma = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd h1(d);
  double fbar_acc = 0.0;
  for (int k = 0; k < N; ++k) {
    const Jet2 jet = jet_at(k);
    const double fbar = spec.forcing(point_at(k)) - spec.h0.value(jet);
    for (int j = 0; j < d; ++j) h1[j] = spec.h1[j].value(jet);
    fbar_acc += fbar * fbar;
    s.phi.noalias() += fbar * h1;
    s.sigma.noalias() += h1 * h1.transpose();
  }
  const double w = spec.volume() / static_cast<double>(N);
  s.phi *= w;
  s.sigma *= w;
  s.fbar_sq = w * fbar_acc;
  s.sigma.diagonal().array() += config.rho / le;

  if (!s.sigma.allFinite()) throw ConditioningError("Sigma_W is not finite");
  s.sigma_llt.compute(s.sigma);
  if (s.sigma_llt.info() != Eigen::Success)
    throw ConditioningError("Sigma_W is numerically singular");
  s.j_value = s.fbar_sq - s.phi.dot(s.sigma_llt.solve(s.phi));
  return s;
}

template <typename JetAt>
ResidualSummary residual_summary_with(JetAt&& jet_at, const PdeSpec& spec,
                                      const CollocationSet& colloc,
                                      const PriorConfig& config) {
  return residual_summary_core(
      static_cast<int>(colloc.interior.size()),
      [&](int k) { return colloc.interior[k]; },
      [&](int k) { return jet_at(colloc.interior[k]); }, spec, config);
}

}  // namespace detail

inline ResidualSummary residual_summary(const NetworkState& state,
                                        const PdeSpec& spec,
                                        const CollocationSet& colloc,
                                        const PriorConfig& config) {
  return detail::residual_summary_with(
      [&](const Point& p) { return forward_jet(state, p); }, spec, colloc,
      config);
}

inline ResidualSummary residual_summary(
    const std::function<Jet2(const Point&)>& jet_fn, const PdeSpec& spec,
    const CollocationSet& colloc, const PriorConfig& config) {
  return detail::residual_summary_with(jet_fn, spec, colloc, config);
}

// Summary from jet planes already evaluated at the interior points.
inline ResidualSummary residual_summary_from_planes(
    const BatchJetForward& f, const PdeSpec& spec, const PriorConfig& config) {
  return detail::residual_summary_core(
      f.size(), [&](int k) { return f.point(k); },
      [&](int k) { return f.jet(k); }, spec, config);
}

// (1 / 2 sigma^2) sum_i (Y_i - u_W(s_i))^2
inline double data_misfit(const NetworkState& state, const DataSet& data) {
  double acc = 0.0;
  for (int i = 0; i < data.n; ++i) {
    const double r = data.y[i] - forward_value(state, data.sensors[i]);
    acc += r * r;
  }
  return acc / (2.0 * data.noise_sd * data.noise_sd);
}

inline double data_misfit_from_values(const Eigen::ArrayXd& values,
                                      const DataSet& data) {
  return (data.y.array() - values).square().sum() /
         (2.0 * data.noise_sd * data.noise_sd);
}

enum class TargetMode { kPinn, kNonPinn };

// Components of the collapsed W-target, kept separate so samplers can reuse
// and report them.
struct MarginalWParts {
  double log_prior = 0.0;
  double misfit = 0.0;
  double half_log_det = 0.0;   // (1/2) log det Sigma_W
  double residual_term = 0.0;  // (lambda_eff/2) J(u_W)
  double boundary_term = 0.0;  // (lambda alpha2 / 2) boundary misfit
  bool has_summary = false;
  ResidualSummary summary;

  // log of the theta-marginalized posterior density of (Lambda, W), up to a
  // constant independent of (Lambda, W).
  double log_target() const {
    return log_prior - misfit - half_log_det - residual_term - boundary_term;
  }
};

template <typename JetAt, typename ValueAt, typename DataValueAt>
MarginalWParts marginal_w_parts_with(JetAt&& jet_at, ValueAt&& value_at,
                                     DataValueAt&& data_value_at,
                                     const NetworkState& state,
                                     const PdeSpec& spec,
                                     const CollocationSet& colloc,
                                     const DataSet& data,
                                     const PriorConfig& config,
                                     TargetMode mode) {
  MarginalWParts parts;
  parts.log_prior = log_prior_w(state, config);
  double acc = 0.0;
  for (int i = 0; i < data.n; ++i) {
    const double r = data.y[i] - data_value_at(data.sensors[i], i);
    acc += r * r;
  }
  parts.misfit = acc / (2.0 * data.noise_sd * data.noise_sd);

  if (mode == TargetMode::kPinn && config.lambda > 0.0) {
    parts.summary = detail::residual_summary_with(jet_at, spec, colloc, config);
    parts.has_summary = true;
    parts.half_log_det = 0.5 * parts.summary.log_det_sigma();
    parts.residual_term = 0.5 * lambda_eff(config) * parts.summary.j_value;
    parts.boundary_term = 0.5 * config.lambda * config.alpha2 *
                          detail::boundary_misfit_sq(value_at, spec, colloc);
  }
  return parts;
}

inline MarginalWParts marginal_w_parts(const NetworkState& state,
                                       const PdeSpec& spec,
                                       const CollocationSet& colloc,
                                       const DataSet& data,
                                       const PriorConfig& config,
                                       TargetMode mode = TargetMode::kPinn) {
  return marginal_w_parts_with(
      [&](const Point& p) { return forward_jet(state, p); },
      [&](const Point& p) { return forward_value(state, p); },
      [&](const Point& p, int) { return forward_value(state, p); }, state,
      spec, colloc, data, config, mode);
}

// log Pi(W, Lambda | D) after integrating theta out in closed form; equals
// log_prior - misfit - (1/2) log det Sigma - (lambda/2) J - boundary terms,
// up to an additive constant.
inline double marginal_w_log_target(const NetworkState& state,
                                    const PdeSpec& spec,
                                    const CollocationSet& colloc,
                                    const DataSet& data,
                                    const PriorConfig& config,
                                    TargetMode mode = TargetMode::kPinn) {
  return marginal_w_parts(state, spec, colloc, data, config, mode).log_target();
}

}  // namespace bpinn
