#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bpinn/residual.hpp"

namespace bpinn {

struct DivergenceError : std::runtime_error {
  long iteration;
  DivergenceError(const std::string& what, long it)
      : std::runtime_error(what + " at iteration " + std::to_string(it)),
        iteration(it) {}
};

enum class WStepper {
  kSgld,   // plain Langevin step, shared step size
  kPSgld,  // RMSprop-preconditioned Langevin (adapting, then frozen)
};

struct ChainConfig {
  NetworkArch arch{{2, 64, 64, 64, 1}, Activation::kTanh};
  long iterations = 200000;
  long burn_in = 50000;
  int thin = 20;
  WStepper stepper = WStepper::kPSgld;
  double sgld_step = 0.0;  // <= 0 selects a mode-dependent default
  bool sgld_cyclical = false;
  long cycle_length = 5000;
  double psgld_beta = 0.999;  // EMA decay of the squared-gradient estimate
  double psgld_eps = 1e-5;
  long warm_start = 0;         // Adam steps toward the mode before sampling
  double warm_start_lr = 3e-3;
  int lambda_flips_per_iter = 2;
  long flip_warmup = -1;   // < 0 selects burn_in / 2
  long sgld_ramp = -1;     // linear step ramp length; < 0 selects burn_in / 5
  double minibatch_fraction = 1.0;
  bool init_mask_full = true;
  std::uint64_t seed = 0;
  TargetMode mode = TargetMode::kPinn;

  void validate() const {
    arch.validate();
    if (iterations <= 0) throw std::invalid_argument("iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations)
      throw std::invalid_argument("burn_in must lie in [0, iterations)");
    if (thin < 1) throw std::invalid_argument("thin must be >= 1");
    if (lambda_flips_per_iter < 0)
      throw std::invalid_argument("lambda flips must be >= 0");
    if (minibatch_fraction <= 0.0 || minibatch_fraction > 1.0)
      throw std::invalid_argument("minibatch fraction must be in (0, 1]");
  }

  long sample_count() const { return (iterations - burn_in) / thin; }

  // The data misfit has curvature of order n / sigma^2 per weight; plain
  // SGLD needs the inverse of that scale, the preconditioned step is
  // dimensionless.
  double effective_step(double sigma, long n) const {
    if (sgld_step > 0.0) return sgld_step;
    if (stepper == WStepper::kPSgld) return 5e-3;
    return 2.0 * sigma * sigma / static_cast<double>(n);
  }
};

// theta | W, D ~ N(Sigma_W^{-1} Phi_W, (1/lambda) Sigma_W^{-1})
struct ThetaConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

inline ThetaConditional theta_conditional(const ResidualSummary& summary,
                                          const PriorConfig& config) {
  ThetaConditional c;
  c.mean = summary.theta_hat();
  c.covariance =
      summary.sigma_llt.solve(Eigen::MatrixXd::Identity(
          summary.sigma.rows(), summary.sigma.cols())) /
      lambda_eff(config);
  return c;
}

// Exact draw from the Gaussian conditional of theta given W.
inline Eigen::VectorXd step_theta(const ResidualSummary& summary,
                                  const PriorConfig& config, Rng& rng) {
  const int d = static_cast<int>(summary.phi.size());
  Eigen::VectorXd z(d);
  for (int j = 0; j < d; ++j) z[j] = rng.normal();
  // Sigma = L L'; (1/lam) Sigma^{-1} = cov, so mean + L^{-T} z / sqrt(lam).
  Eigen::MatrixXd L = summary.sigma_llt.matrixL();
  Eigen::VectorXd dir =
      L.transpose().triangularView<Eigen::Upper>().solve(z) /
      std::sqrt(lambda_eff(config));
  return summary.theta_hat() + dir;
}

struct AcceptanceRates {
  double lambda = 0.0;  // Metropolis acceptance rate of the mask block
  double theta = 1.0;   // exact Gaussian draws
  double w = 1.0;       // SGLD block is never rejected
};

struct ChainOutput {
  Eigen::MatrixXd theta_samples;       // K x d
  std::vector<int> active_counts;      // K
  Eigen::VectorXd log_target_trace;    // K
  AcceptanceRates acceptance;
  bool diverged = false;
  long diverged_at = -1;
  std::string divergence_message;
};

// One Langevin move on the active coordinates plus an exact refresh of the
// spike coordinates from their conditional N(0, 1/rho0).
inline NetworkState step_w_sgld(const NetworkState& state,
                                const Eigen::VectorXd& grad_active, double h,
                                const PriorConfig& config, Rng& rng) {
  if (grad_active.size() != state.weights.size())
    throw std::invalid_argument("gradient size mismatch");
  NetworkState next = state;
  const double root_h = std::sqrt(h);
  const double spike_sd = 1.0 / std::sqrt(config.rho0);
  for (int j = 0; j < next.param_count(); ++j) {
    if (next.mask[j]) {
      next.weights[j] += 0.5 * h * grad_active[j] + root_h * rng.normal();
    } else {
      next.weights[j] = spike_sd * rng.normal();
    }
  }
  return next;
}

// Random-scan single-coordinate mask flips with prior-matched proposals,
// accepted with the exact ratio of the collapsed target times the proposal
// correction. `mlt` evaluates marginal_w_log_target for a candidate state.
template <typename MltFn>
NetworkState step_lambda(const NetworkState& state, MltFn&& mlt, int flips,
                         const PriorConfig& config, Rng& rng,
                         double* current_log_target = nullptr,
                         long* accepted_out = nullptr) {
  NetworkState cur = state;
  double cur_mlt =
      (current_log_target && std::isfinite(*current_log_target))
          ? *current_log_target
          : mlt(cur);
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double log_rho0 = std::log(config.rho0);
  auto log_comp = [&](bool slab, double w) {
    return slab ? -0.5 * (kLog2Pi + w * w)
                : 0.5 * (log_rho0 - kLog2Pi) - 0.5 * config.rho0 * w * w;
  };
  long accepted = 0;
  for (int f = 0; f < flips; ++f) {
    const int j = static_cast<int>(rng.index(cur.param_count()));
    NetworkState prop = cur;
    const bool new_slab = !cur.mask[j];
    prop.mask[j] = new_slab ? 1 : 0;
    prop.weights[j] = rng.normal(0.0, new_slab ? 1.0 : 1.0 / std::sqrt(config.rho0));
    const double prop_mlt = mlt(prop);
    const double log_ratio = prop_mlt - cur_mlt +
                             log_comp(cur.mask[j], cur.weights[j]) -
                             log_comp(new_slab, prop.weights[j]);
    if (std::log(rng.uniform()) < log_ratio) {
      cur = std::move(prop);
      cur_mlt = prop_mlt;
      ++accepted;
    }
  }
  if (current_log_target) *current_log_target = cur_mlt;
  if (accepted_out) *accepted_out += accepted;
  return cur;
}

// Metropolis-within-Gibbs chain over (Lambda, W, theta). The PINN mode
// targets the joint posterior with the PDE energy; the non-PINN mode runs the
// data-only W chain and recovers theta from the residual regression at each
// recorded sample.
//
// Sweep per iteration: exact theta refresh, collapsed mask flips (with a
// theta redraw whenever a flip is accepted, which keeps the partially
// collapsed scheme exact), then the Langevin W move given theta.
class ChainEngine {
 public:
  ChainEngine(const PdeSpec& spec, const DataSet& data,
              const CollocationSet& colloc, const PriorConfig& prior,
              const ChainConfig& chain)
      : spec_(spec),
        data_(data),
        colloc_(colloc),
        prior_(prior),
        chain_(chain),
        rng_(chain.seed),
        cur_(chain.arch, colloc, data),
        scratch_(chain.arch, colloc, data),
        grad_(Eigen::VectorXd::Zero(prior.q)),
        precond_v_(Eigen::VectorXd::Zero(prior.q)),
        seeds_(static_cast<int>(colloc.interior.size())) {
    chain_.validate();
    prior_.validate();
    if (prior_.q != chain_.arch.param_count())
      throw std::invalid_argument("prior q does not match chain architecture");
    state_ = make_state(chain_.arch);
    if (!chain_.init_mask_full) {
      NetworkState drawn =
          sample_prior(prior_, chain_.arch, splitmix64(chain_.seed ^ 1));
      state_.mask = drawn.mask;
    }
    init_weights(state_, rng_);
    theta_ = Eigen::VectorXd::Zero(spec_.d);
  }

  ChainOutput run() {
    const long K = chain_.sample_count();
    ChainOutput out;
    out.theta_samples.resize(K, spec_.d);
    out.active_counts.resize(K);
    out.log_target_trace.resize(K);

    const double h0 = chain_.effective_step(data_.noise_sd, data_.n);
    const long warmup = chain_.flip_warmup >= 0 ? chain_.flip_warmup
                                                : chain_.burn_in / 2;
    long recorded = 0;

    if (chain_.warm_start > 0) {
      try {
        warm_start();
      } catch (const NumericalOverflowError& e) {
        finalize_divergence(out, 0, 0, e.what());
        return out;
      } catch (const ConditioningError& e) {
        finalize_divergence(out, 0, 0, e.what());
        return out;
      } catch (const DivergenceError& e) {
        finalize_divergence(out, 0, 0, e.what());
        return out;
      }
    }

    for (long it = 1; it <= chain_.iterations; ++it) {
      try {
        cur_.forward(state_, pinn_mode());
        MarginalWParts parts = parts_for(cur_, state_);
        if (pinn_mode()) theta_ = step_theta(parts.summary, prior_, rng_);

        if (chain_.lambda_flips_per_iter > 0 && it > warmup) {
          if (flip_masks(parts) && pinn_mode())
            theta_ = step_theta(parts.summary, prior_, rng_);
        }

        const bool record = it > chain_.burn_in &&
                            (it - chain_.burn_in) % chain_.thin == 0 &&
                            recorded < K;
        if (record) {
          if (!pinn_mode()) theta_ = non_pinn_theta();
          out.theta_samples.row(recorded) = theta_.transpose();
          out.active_counts[recorded] = state_.active_count();
          out.log_target_trace[recorded] = parts.log_target();
          ++recorded;
        }

        sgld_update(step_size(h0, it), it);
      } catch (const NumericalOverflowError& e) {
        finalize_divergence(out, recorded, it, e.what());
        return out;
      } catch (const ConditioningError& e) {
        finalize_divergence(out, recorded, it, e.what());
        return out;
      } catch (const DivergenceError& e) {
        finalize_divergence(out, recorded, it, e.what());
        return out;
      }
    }
    out.acceptance.lambda = flip_rate();
    return out;
  }

  const NetworkState& state() const { return state_; }

 private:
  // Forward planes over the collocation interior, the sensors, and the
  // boundary segments, for one candidate state.
  struct EvalSet {
    BatchJetForward colloc;
    BatchValueForward data;
    std::vector<BatchValueForward> bnd;

    EvalSet(const NetworkArch& arch, const CollocationSet& c, const DataSet& d)
        : colloc(arch, c.interior), data(arch, d.sensors) {
      for (const auto& pts : c.boundary) bnd.emplace_back(arch, pts);
    }

    void forward(const NetworkState& s, bool pinn) {
      data.forward(s);
      if (pinn) {
        colloc.forward(s);
        for (auto& b : bnd) b.forward(s);
      }
    }
  };

  bool pinn_mode() const { return chain_.mode == TargetMode::kPinn; }

  double flip_rate() const {
    return flips_proposed_ > 0
               ? static_cast<double>(flips_accepted_) / flips_proposed_
               : 0.0;
  }

  MarginalWParts parts_for(const EvalSet& ev, const NetworkState& s) const {
    MarginalWParts parts;
    parts.log_prior = log_prior_w(s, prior_);
    parts.misfit = data_misfit_from_values(ev.data.values(), data_);
    if (pinn_mode() && prior_.lambda > 0.0) {
      parts.summary = residual_summary_from_planes(ev.colloc, spec_, prior_);
      parts.has_summary = true;
      parts.half_log_det = 0.5 * parts.summary.log_det_sigma();
      parts.residual_term = 0.5 * lambda_eff(prior_) * parts.summary.j_value;
      parts.boundary_term = 0.5 * prior_.lambda * prior_.alpha2 *
                            boundary_misfit_for(ev);
    }
    return parts;
  }

  double boundary_misfit_for(const EvalSet& ev) const {
    double total = 0.0;
    for (std::size_t s = 0; s < ev.bnd.size(); ++s) {
      const auto& seg = spec_.boundary[s];
      const auto& pts = colloc_.boundary[s];
      auto vals = ev.bnd[s].values();
      double acc = 0.0;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const double m = vals[static_cast<int>(k)] - seg.target(pts[k]);
        acc += m * m;
      }
      total += seg.length * acc / static_cast<double>(pts.size());
    }
    return total;
  }

  // Random-scan single-coordinate Metropolis flips against the collapsed
  // target. Proposals are evaluated in the scratch planes; an acceptance
  // swaps the plane sets, so the current planes always match `state_`.
  // Returns true when at least one proposal was accepted; `parts` tracks the
  // current state throughout.
  bool flip_masks(MarginalWParts& parts) {
    constexpr double kLog2Pi = 1.8378770664093454836;
    const double log_rho0 = std::log(prior_.rho0);
    auto log_comp = [&](bool slab, double w) {
      return slab ? -0.5 * (kLog2Pi + w * w)
                  : 0.5 * (log_rho0 - kLog2Pi) - 0.5 * prior_.rho0 * w * w;
    };
    const double spike_sd = 1.0 / std::sqrt(prior_.rho0);
    double cur_lt = parts.log_target();
    bool any = false;
    for (int f = 0; f < chain_.lambda_flips_per_iter; ++f) {
      ++flips_proposed_;
      const int j = static_cast<int>(rng_.index(prior_.q));
      const bool new_slab = !state_.mask[j];
      const double old_w = state_.weights[j];
      state_.mask[j] = new_slab ? 1 : 0;
      state_.weights[j] = rng_.normal(0.0, new_slab ? 1.0 : spike_sd);

      bool ok = true;
      MarginalWParts prop_parts;
      double prop_lt = -std::numeric_limits<double>::infinity();
      try {
        scratch_.forward(state_, pinn_mode());
        prop_parts = parts_for(scratch_, state_);
        prop_lt = prop_parts.log_target();
      } catch (const NumericalOverflowError&) {
        ok = false;
      } catch (const ConditioningError&) {
        ok = false;
      }
      const double log_ratio = prop_lt - cur_lt +
                               log_comp(!new_slab, old_w) -
                               log_comp(new_slab, state_.weights[j]);
      if (ok && std::log(rng_.uniform()) < log_ratio) {
        std::swap(cur_, scratch_);
        parts = prop_parts;
        cur_lt = prop_lt;
        any = true;
        ++flips_accepted_;
      } else {
        state_.mask[j] = new_slab ? 0 : 1;
        state_.weights[j] = old_w;
      }
    }
    return any;
  }

  // Optional cosine cycles plus a linear ramp over early burn-in; the ramp
  // keeps the first moves stable while gradients are still enormous.
  double step_size(double h0, long it) const {
    double h = h0;
    if (chain_.sgld_cyclical) {
      const long c = chain_.cycle_length;
      const double phase = static_cast<double>((it - 1) % c) / c;
      h = 0.5 * h0 * (std::cos(M_PI * phase) + 1.0) + 1e-3 * h0;
    }
    const long ramp =
        chain_.sgld_ramp >= 0 ? chain_.sgld_ramp : chain_.burn_in / 5;
    if (it < ramp) h *= static_cast<double>(it) / ramp;
    return h;
  }

  // Adam ascent on the joint log target (theta at its conditional mode),
  // used only to place the chain start near the posterior mode.
  void warm_start() {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(prior_.q);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(prior_.q);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (long w = 1; w <= chain_.warm_start; ++w) {
      cur_.forward(state_, pinn_mode());
      if (pinn_mode() && prior_.lambda > 0.0) {
        ResidualSummary sum =
            residual_summary_from_planes(cur_.colloc, spec_, prior_);
        theta_ = sum.theta_hat();
      }
      compute_joint_gradient(-w);
      const double c1 = 1.0 - std::pow(b1, w), c2 = 1.0 - std::pow(b2, w);
      for (int j = 0; j < prior_.q; ++j) {
        if (!state_.mask[j]) continue;
        m[j] = b1 * m[j] + (1.0 - b1) * grad_[j];
        v[j] = b2 * v[j] + (1.0 - b2) * grad_[j] * grad_[j];
        state_.weights[j] +=
            chain_.warm_start_lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      }
    }
  }

  // Gradient of the joint log target at (state, theta) via the current
  // planes.
  void compute_joint_gradient(long it) {
    grad_.setZero();

    {
      const double inv_var = 1.0 / (data_.noise_sd * data_.noise_sd);
      data_seeds_ = inv_var * (data_.y.array() - cur_.data.values());
      if (chain_.minibatch_fraction < 1.0) {
        const double frac = chain_.minibatch_fraction;
        for (int i = 0; i < data_seeds_.size(); ++i)
          data_seeds_[i] = rng_.bernoulli(frac) ? data_seeds_[i] / frac : 0.0;
      }
      cur_.data.backward(data_seeds_, grad_);
    }

    if (pinn_mode() && prior_.lambda > 0.0) {
      const int N = cur_.colloc.size();
      const double scale =
          lambda_eff(prior_) * spec_.volume() / static_cast<double>(N);
      for (int k = 0; k < N; ++k) {
        const Jet2 jet = cur_.colloc.jet(k);
        const Point p = cur_.colloc.point(k);
        const double r = spec_.residual(jet, theta_, p);
        Jet2 dr = -spec_.h0.grad(jet);
        for (int j = 0; j < spec_.d; ++j)
          dr -= theta_[j] * spec_.h1[j].grad(jet);
        const double c = -scale * r;
        seeds_.v[k] = c * dr.v;
        seeds_.dt[k] = c * dr.dt;
        seeds_.dx[k] = c * dr.dx;
        seeds_.dxx[k] = c * dr.dxx;
      }
      cur_.colloc.backward(seeds_, grad_);

      for (std::size_t s = 0; s < cur_.bnd.size(); ++s) {
        const auto& seg = spec_.boundary[s];
        const auto& pts = colloc_.boundary[s];
        const double bscale = prior_.lambda * prior_.alpha2 * seg.length /
                              static_cast<double>(pts.size());
        Eigen::ArrayXd bseeds(static_cast<int>(pts.size()));
        auto vals = cur_.bnd[s].values();
        for (std::size_t k = 0; k < pts.size(); ++k) {
          bseeds[static_cast<int>(k)] =
              -bscale * (vals[static_cast<int>(k)] - seg.target(pts[k]));
        }
        cur_.bnd[s].backward(bseeds, grad_);
      }
    }

    for (int j = 0; j < prior_.q; ++j)
      if (state_.mask[j]) grad_[j] -= state_.weights[j];

    if (!grad_.allFinite())
      throw DivergenceError("non-finite SGLD gradient", it);
  }

  // Langevin move on the active coordinates plus the exact spike refresh of
  // the inactive ones.
  void sgld_update(double h, long it) {
    compute_joint_gradient(it);
    const double spike_sd = 1.0 / std::sqrt(prior_.rho0);
    if (chain_.stepper == WStepper::kPSgld) {
      // Adapt the diagonal metric during the first three quarters of
      // burn-in, then freeze it; a Langevin step with a fixed diagonal
      // preconditioner leaves the target invariant.
      if (it <= 3 * chain_.burn_in / 4) {
        const double beta = chain_.psgld_beta;
        for (int j = 0; j < prior_.q; ++j) {
          if (!state_.mask[j]) continue;
          const double g2 = grad_[j] * grad_[j];
          precond_v_[j] =
              precond_v_[j] > 0.0 ? beta * precond_v_[j] + (1.0 - beta) * g2
                                  : g2;
        }
      }
      for (int j = 0; j < prior_.q; ++j) {
        if (state_.mask[j]) {
          const double m =
              1.0 / (std::sqrt(precond_v_[j]) + chain_.psgld_eps);
          state_.weights[j] +=
              0.5 * h * m * grad_[j] + std::sqrt(h * m) * rng_.normal();
        } else {
          state_.weights[j] = spike_sd * rng_.normal();
        }
      }
    } else {
      const double root_h = std::sqrt(h);
      for (int j = 0; j < prior_.q; ++j) {
        if (state_.mask[j]) {
          state_.weights[j] += 0.5 * h * grad_[j] + root_h * rng_.normal();
        } else {
          state_.weights[j] = spike_sd * rng_.normal();
        }
      }
    }
    if (!state_.weights.allFinite())
      throw DivergenceError("non-finite weights after SGLD step", it);
  }

  // Two-step recovery: theta | W ~ N(Sigma^{-1} Phi, (1/n) Sigma^{-1}).
  Eigen::VectorXd non_pinn_theta() {
    cur_.colloc.forward(state_);
    PriorConfig rec = prior_;
    rec.lambda = static_cast<double>(data_.n);
    rec.alpha1 = 1.0;
    ResidualSummary sum =
        residual_summary_from_planes(cur_.colloc, spec_, rec);
    return step_theta(sum, rec, rng_);
  }

  void finalize_divergence(ChainOutput& out, long recorded, long it,
                           const std::string& message) {
    out.diverged = true;
    out.diverged_at = it;
    out.divergence_message = message;
    out.acceptance.lambda = flip_rate();
    out.theta_samples.conservativeResize(recorded, spec_.d);
    out.active_counts.resize(recorded);
    out.log_target_trace.conservativeResize(recorded);
  }

  PdeSpec spec_;
  DataSet data_;
  CollocationSet colloc_;
  PriorConfig prior_;
  ChainConfig chain_;
  Rng rng_;
  EvalSet cur_;
  EvalSet scratch_;
  Eigen::VectorXd grad_;
  Eigen::VectorXd precond_v_;
  JetSeeds seeds_;
  Eigen::ArrayXd data_seeds_;
  NetworkState state_;
  Eigen::VectorXd theta_;
  long flips_proposed_ = 0;
  long flips_accepted_ = 0;
};

inline ChainOutput run_chain(const PdeSpec& spec, const DataSet& data,
                             const CollocationSet& colloc,
                             const PriorConfig& prior,
                             const ChainConfig& chain) {
  ChainEngine engine(spec, data, colloc, prior, chain);
  return engine.run();
}

// Population-convention mean and standard deviation of the theta samples.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> posterior_summary(
    const ChainOutput& out) {
  const long K = out.theta_samples.rows();
  if (K < 2) throw std::invalid_argument("need at least two samples");
  Eigen::VectorXd mu = out.theta_samples.colwise().mean();
  Eigen::VectorXd sd(out.theta_samples.cols());
  for (int j = 0; j < out.theta_samples.cols(); ++j) {
    const double m = mu[j];
    sd[j] = std::sqrt(
        (out.theta_samples.col(j).array() - m).square().sum() / K);
  }
  return {mu, sd};
}

}  // namespace bpinn
