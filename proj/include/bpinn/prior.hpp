#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "bpinn/batch.hpp"
#include "bpinn/pde.hpp"

namespace bpinn {

// Spike-and-slab prior on (Lambda, W), Gaussian ridge on theta, and the
// strength/weights of the PDE-residual energy.
struct PriorConfig {
  int q = 0;                   // parameter count
  double sparsity_u = 1.0;     // exponent in the inclusion probability
  double rho0 = 100.0;         // spike precision (> 1)
  double rho = 1.0;            // theta ridge precision
  double lambda = 0.0;         // PINN strength (0 disables the PDE energy)
  double alpha1 = 1.0;         // interior residual weight
  double alpha2 = 1.0;         // boundary misfit weight

  double inclusion_prob() const {
    return 1.0 / (1.0 + std::pow(static_cast<double>(q), sparsity_u + 1.0));
  }

  void validate() const {
    if (q <= 0) throw std::invalid_argument("prior q must be positive");
    if (sparsity_u < 1.0) throw std::invalid_argument("sparsity u must be >= 1");
    if (rho0 <= 1.0) throw std::invalid_argument("rho0 must exceed 1");
    if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
    if (lambda < 0.0 || alpha1 < 0.0 || alpha2 < 0.0)
      throw std::invalid_argument("lambda and alpha weights must be >= 0");
  }
};

// Lambda_j ~ Ber(pi_q) i.i.d.; W_j ~ N(0,1) on the slab, N(0,1/rho0) on the
// spike. The state keeps both; evaluation uses W .* Lambda.
inline NetworkState sample_prior(const PriorConfig& config,
                                 const NetworkArch& arch, std::uint64_t seed) {
  if (config.q != arch.param_count())
    throw std::invalid_argument("prior q does not match architecture");
  NetworkState s = make_state(arch);
  Rng rng(seed);
  const double pi_q = config.inclusion_prob();
  const double spike_sd = 1.0 / std::sqrt(config.rho0);
  for (int j = 0; j < config.q; ++j) {
    s.mask[j] = rng.bernoulli(pi_q) ? 1 : 0;
    s.weights[j] = rng.normal(0.0, s.mask[j] ? 1.0 : spike_sd);
  }
  return s;
}

// Log joint density of (Lambda, W) under the spike-and-slab prior, with no
// omitted terms.
inline double log_prior_w(const NetworkState& state,
                          const PriorConfig& config) {
  const double pi_q = config.inclusion_prob();
  const double log_pi = std::log(pi_q);
  const double log_1mpi = std::log1p(-pi_q);
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double log_rho0 = std::log(config.rho0);
  double lp = 0.0;
  for (int j = 0; j < state.param_count(); ++j) {
    const double w = state.weights[j];
    if (state.mask[j]) {
      lp += log_pi - 0.5 * (kLog2Pi + w * w);
    } else {
      lp += log_1mpi + 0.5 * (log_rho0 - kLog2Pi) -
            0.5 * config.rho0 * w * w;
    }
  }
  return lp;
}

namespace detail {

// Monte-Carlo estimate of the squared L2 norm of the residual over the
// interior: vol(Omega) * mean_k residual(s_k)^2.
template <typename JetAt>
double interior_residual_sq(JetAt&& jet_at, const Eigen::VectorXd& theta,
                            const PdeSpec& spec, const CollocationSet& colloc) {
  double acc = 0.0;
  for (const Point& p : colloc.interior) {
    const double r = spec.residual(jet_at(p), theta, p);
    acc += r * r;
  }
  return spec.volume() * acc / static_cast<double>(colloc.interior.size());
}

// Per-segment squared boundary misfits, each weighted by segment length.
template <typename ValueAt>
double boundary_misfit_sq(ValueAt&& value_at, const PdeSpec& spec,
                          const CollocationSet& colloc) {
  double total = 0.0;
  for (std::size_t s = 0; s < spec.boundary.size(); ++s) {
    const auto& seg = spec.boundary[s];
    double acc = 0.0;
    for (const Point& p : colloc.boundary[s]) {
      const double m = value_at(p) - seg.target(p);
      acc += m * m;
    }
    total += seg.length * acc / static_cast<double>(colloc.boundary[s].size());
  }
  return total;
}

}  // namespace detail

// PINN prior energy: (lambda/2)(alpha1 |residual|^2 + alpha2 |boundary|^2)
// + (rho/2)|theta|^2, with the L2 norms Monte-Carlo estimated over the
// collocation set.
template <typename JetAt, typename ValueAt>
double pinn_energy_with(JetAt&& jet_at, ValueAt&& value_at,
                        const Eigen::VectorXd& theta, const PdeSpec& spec,
                        const CollocationSet& colloc,
                        const PriorConfig& config) {
  if (colloc.interior.empty())
    throw std::invalid_argument("empty collocation set");
  double e = 0.5 * config.rho * theta.squaredNorm();
  if (config.lambda > 0.0) {
    const double interior =
        detail::interior_residual_sq(jet_at, theta, spec, colloc);
    const double bnd = detail::boundary_misfit_sq(value_at, spec, colloc);
    e += 0.5 * config.lambda * (config.alpha1 * interior + config.alpha2 * bnd);
  }
  return e;
}

inline double pinn_energy(const NetworkState& state,
                          const Eigen::VectorXd& theta, const PdeSpec& spec,
                          const CollocationSet& colloc,
                          const PriorConfig& config) {
  return pinn_energy_with(
      [&](const Point& p) { return forward_jet(state, p); },
      [&](const Point& p) { return forward_jet(state, p).v; }, theta, spec,
      colloc, config);
}

// Overload for function-backed states (e.g. the analytic solution).
inline double pinn_energy(
    const std::function<Jet2(const Point&)>& jet_fn,
    const Eigen::VectorXd& theta, const PdeSpec& spec,
    const CollocationSet& colloc, const PriorConfig& config) {
  return pinn_energy_with(jet_fn,
                          [&](const Point& p) { return jet_fn(p).v; }, theta,
                          spec, colloc, config);
}

}  // namespace bpinn
