#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bpinn/residual.hpp"

namespace bpinn {

struct GaussianSummary {
  double mean = 0.0;
  double sd = 1.0;

  double pdf(double x) const {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
  }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Inverse standard normal CDF: Acklam's rational approximation polished by
// one Halley step, good to ~1e-15 on (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("quantile needs p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// BvM limit for the theta-marginal: N(theta_star, 1/(n Sigma_star)) under the
// lambda = n convention, with Sigma_star = |H1 u_star|_2^2 + 1/n.
enum class SigmaStarMethod { kAnalytic, kMonteCarlo };

inline GaussianSummary bvm_target(const PdeSpec& spec, long n,
                                  SigmaStarMethod method,
                                  long mc_points = 100000,
                                  std::uint64_t seed = 20240901) {
  if (spec.d != 1)
    throw std::invalid_argument("bvm_target implemented for scalar theta");
  double sigma_star;
  if (method == SigmaStarMethod::kAnalytic) {
    if (spec.name != "heat")
      throw std::invalid_argument("no closed-form Sigma_star for this problem");
    sigma_star = M_PI * (1.0 - std::exp(-1.0)) / 2.0 + 1.0 / n;
  } else {
    if (!spec.has_analytic)
      throw UnsupportedProblemError("Monte-Carlo Sigma_star needs u_star");
    Rng rng(seed);
    double acc = 0.0;
    for (long k = 0; k < mc_points; ++k) {
      const Point p{rng.uniform(spec.t_lo, spec.t_hi),
                    rng.uniform(spec.x_lo, spec.x_hi)};
      const double h1 = spec.h1[0].value(spec.analytic_jet(spec.true_theta, p));
      acc += h1 * h1;
    }
    sigma_star = spec.volume() * acc / mc_points + 1.0 / n;
  }
  return {spec.true_theta[0], std::sqrt(1.0 / (n * sigma_star))};
}

// Squared 2-Wasserstein distance between two equal-size 1-d samples (sorted
// monotone coupling). Matches the squared-cost convention of the tables.
inline double w2_sq_empirical_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("sample sets must have equal size");
  if (a.size() < 2) throw std::invalid_argument("need at least two samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

// Same, against a Gaussian comparator realized by its quantiles at
// (i - 1/2)/K.
inline double w2_sq_empirical_1d(std::vector<double> a,
                                 const GaussianSummary& g) {
  if (a.size() < 2) throw std::invalid_argument("need at least two samples");
  std::sort(a.begin(), a.end());
  const std::size_t K = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    const double q = g.mean + g.sd * normal_quantile((i + 0.5) / K);
    const double d = a[i] - q;
    acc += d * d;
  }
  return acc / static_cast<double>(K);
}

// Closed form for 1-d Gaussians: (mu_a - mu_b)^2 + (sd_a - sd_b)^2.
inline double gaussian_w2_sq(const GaussianSummary& a,
                             const GaussianSummary& b) {
  const double dm = a.mean - b.mean, ds = a.sd - b.sd;
  return dm * dm + ds * ds;
}

inline double hellinger_sq(const GaussianSummary& a, const GaussianSummary& b) {
  const double s2 = a.sd * a.sd + b.sd * b.sd;
  const double dm = a.mean - b.mean;
  return 1.0 - std::sqrt(2.0 * a.sd * b.sd / s2) * std::exp(-dm * dm / (4.0 * s2));
}

inline double kl_divergence(const GaussianSummary& p, const GaussianSummary& q) {
  const double dm = p.mean - q.mean;
  return std::log(q.sd / p.sd) +
         (p.sd * p.sd + dm * dm) / (2.0 * q.sd * q.sd) - 0.5;
}

// H^2 <= TVD <= min(1, sqrt(KL(P||Q)/2), sqrt(KL(Q||P)/2)).
inline std::pair<double, double> tvd_sandwich(const GaussianSummary& a,
                                              const GaussianSummary& b) {
  const double lower = hellinger_sq(a, b);
  const double upper = std::min(
      {1.0, std::sqrt(std::max(0.0, kl_divergence(a, b)) / 2.0),
       std::sqrt(std::max(0.0, kl_divergence(b, a)) / 2.0)});
  return {lower, upper};
}

// sqrt((1/K) sum (theta_k - theta_star)^2)
inline double rmse_theta(const std::vector<double>& samples,
                         double theta_star) {
  if (samples.empty()) throw std::invalid_argument("need at least one sample");
  double acc = 0.0;
  for (double s : samples) acc += (s - theta_star) * (s - theta_star);
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

struct DiagnosticsReport {
  double rmse = 0.0;
  double w2_sq = 0.0;  // squared W2 between samples and the BvM target
  double hellinger_sq = 0.0;
  double kl_fwd = 0.0;
  double kl_rev = 0.0;
  double tvd_lower = 0.0;
  double tvd_upper = 0.0;
  GaussianSummary posterior;  // normal approximation of the sampled theta
  GaussianSummary target;     // BvM limit
};

inline DiagnosticsReport make_report(const std::vector<double>& samples,
                                     double theta_star,
                                     const GaussianSummary& target) {
  DiagnosticsReport r;
  r.target = target;
  r.rmse = rmse_theta(samples, theta_star);
  double mu = 0.0;
  for (double s : samples) mu += s;
  mu /= samples.size();
  double var = 0.0;
  for (double s : samples) var += (s - mu) * (s - mu);
  var /= samples.size();
  r.posterior = {mu, std::sqrt(var)};
  r.w2_sq = w2_sq_empirical_1d(samples, target);
  r.hellinger_sq = hellinger_sq(r.posterior, target);
  r.kl_fwd = kl_divergence(r.posterior, target);
  r.kl_rev = kl_divergence(target, r.posterior);
  auto [lo, hi] = tvd_sandwich(r.posterior, target);
  r.tvd_lower = lo;
  r.tvd_upper = hi;
  return r;
}

// Rate calculators for the sieve analysis: the sparsity s0 balancing
// approximation and statistical error, the resulting eps0 and contraction
// radius r, the Holder exponent kappa, and the theta-rate exponent.
struct RateInputs {
  double beta = 2.0;       // smoothness of u_star
  int m = 2;               // domain dimension
  int tau = 2;             // operator order (tau < beta unless degenerate)
  long n = 1000;           // sample size
  long q = 1000;           // model size
  double sparsity_u = 1.0;
  double sigma = 0.025;
  double c_approx = 1.0;   // prefactor of eps(s) = c s^{-beta/m}
  double envelope_b = 3.0;
  double v1 = 0.0;         // entropy constants; v1 <= 0 selects V1 = s0
  double v2 = 0.0;         // v2 <= 0 selects V2 = max(6b, q)

  void validate() const {
    if (beta <= 0 || m <= 0 || tau < 0 || n <= 0 || q <= 1 || sigma <= 0 ||
        c_approx <= 0 || envelope_b <= 0 || sparsity_u < 1.0)
      throw std::invalid_argument("rate inputs must be positive");
    if (tau > beta) throw std::invalid_argument("tau must not exceed beta");
  }
};

struct RateReport {
  bool feasible = false;
  long s0 = 0;
  double eps0 = 0.0;
  double r = 0.0;
  double kappa = 0.0;
  double theta_rate = 0.0;
};

inline double approx_error(const RateInputs& in, long s) {
  return in.c_approx * std::pow(static_cast<double>(s), -in.beta / in.m);
}

inline double statistical_error(const RateInputs& in, long s) {
  return in.sigma * std::sqrt(in.sparsity_u * s * std::log(double(in.q)) /
                              double(in.n));
}

inline RateReport rate_report(const RateInputs& in) {
  in.validate();
  RateReport out;
  out.kappa = 1.0 - double(in.tau) / in.beta;
  out.theta_rate =
      std::pow(double(in.n), -2.0 * (in.beta - in.tau) / (in.m + 2.0 * in.beta));
  for (long s = 2; s <= in.q; ++s) {
    if (approx_error(in, s) <= statistical_error(in, s)) {
      out.feasible = true;
      out.s0 = s;
      break;
    }
  }
  if (!out.feasible) return out;
  out.eps0 = approx_error(in, out.s0);
  const double V1 = in.v1 > 0 ? in.v1 : static_cast<double>(out.s0);
  const double V2 =
      in.v2 > 0 ? in.v2 : std::max(6.0 * in.envelope_b, double(in.q));
  out.r = 2.0 * (in.envelope_b + in.sigma) *
          std::sqrt(V1 * std::log(V2 * std::sqrt(double(in.n))) / double(in.n));
  return out;
}

// Chebyshev derivative at 1: T_d^{(k)}(1) = prod_{j=0}^{k-1} (d^2 - j^2)/(2j+1).
inline double chebyshev_deriv_at_one(int d, int k) {
  double v = 1.0;
  for (int j = 0; j < k; ++j)
    v *= (static_cast<double>(d) * d - static_cast<double>(j) * j) /
         (2.0 * j + 1.0);
  return v;
}

struct HolderBound {
  double bound = 0.0;
  double alpha_bar = 0.0;
};

// Derivative-stability bound: |D^k u - D^k v|_inf <= C M^{tau/beta}
// eps^{(beta-tau)/beta} with C = (beta/tau) T_{|beta|}^{(tau)}(1), where
// |beta| is the largest integer strictly below beta.
inline HolderBound holder_derivative_bound(double M, double eps, double beta,
                                           int tau) {
  if (!(M > 0) || !(eps > 0)) throw std::invalid_argument("need M, eps > 0");
  if (tau < 0 || tau >= beta)
    throw std::invalid_argument("need 0 <= tau < beta");
  if (tau == 0) return {eps, 0.0};
  const int fl = (std::floor(beta) == beta) ? static_cast<int>(beta) - 1
                                            : static_cast<int>(std::floor(beta));
  double fact = 1.0;
  for (int i = 2; i <= fl; ++i) fact *= i;
  const double C = (beta / tau) * chebyshev_deriv_at_one(fl, tau);
  HolderBound out;
  out.bound = C * std::pow(M, tau / beta) * std::pow(eps, (beta - tau) / beta);
  out.alpha_bar =
      std::pow(tau * eps * fact / (2.0 * M * (beta - tau)), 1.0 / beta);
  return out;
}

struct ErmFit {
  double theta_hat = 0.0;
  double l2_error = 0.0;
  bool multistart_flagged = false;
};

namespace detail {

template <typename Loss>
double golden_section(Loss&& loss, double lo, double hi, double tol) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = loss(c), fd = loss(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a);
      fc = loss(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a);
      fd = loss(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Constrained empirical risk minimization over the solution family
// theta -> u_theta: 1-d search for the least-squares theta, then the L2
// distance to u_star estimated by Monte Carlo.
inline ErmFit erm_fit(const PdeSpec& spec, const DataSet& data, double theta_lo,
                      double theta_hi, long mc_points = 100000,
                      std::uint64_t mc_seed = 77) {
  if (!spec.has_analytic)
    throw UnsupportedProblemError("erm_fit needs the analytic family");
  if (theta_hi < theta_lo) throw std::invalid_argument("empty theta box");
  auto loss = [&](double th) {
    Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, th);
    double acc = 0.0;
    for (int i = 0; i < data.n; ++i) {
      const double r = data.y[i] - spec.analytic_jet(theta, data.sensors[i]).v;
      acc += r * r;
    }
    return acc / data.n;
  };
  ErmFit out;
  if (theta_hi == theta_lo) {
    out.theta_hat = theta_lo;
  } else {
    const double tol = 1e-8;
    const double full = detail::golden_section(loss, theta_lo, theta_hi, tol);
    const double mid = 0.5 * (theta_lo + theta_hi);
    const double left = detail::golden_section(loss, theta_lo, mid, tol);
    const double right = detail::golden_section(loss, mid, theta_hi, tol);
    out.theta_hat = full;
    for (double cand : {left, right}) {
      if (loss(cand) < loss(out.theta_hat) - 1e-14) {
        out.theta_hat = cand;
        out.multistart_flagged = true;
      }
    }
  }
  Rng rng(mc_seed);
  Eigen::VectorXd th = Eigen::VectorXd::Constant(1, out.theta_hat);
  double acc = 0.0;
  for (long k = 0; k < mc_points; ++k) {
    const Point p{rng.uniform(spec.t_lo, spec.t_hi),
                  rng.uniform(spec.x_lo, spec.x_hi)};
    const double d =
        spec.analytic_jet(th, p).v - spec.analytic_jet(spec.true_theta, p).v;
    acc += d * d;
  }
  out.l2_error = std::sqrt(spec.volume() * acc / mc_points);
  return out;
}

}  // namespace bpinn
