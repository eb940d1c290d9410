#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpinn/network.hpp"

namespace bpinn {

// A differential-operator term evaluated on a jet, together with its partials
// with respect to the jet entries (needed for exact weight gradients).
struct JetFunctional {
  std::function<double(const Jet2&)> value;
  std::function<Jet2(const Jet2&)> grad;
};

inline JetFunctional linear_jet_functional(double cv, double cdt, double cdx,
                                           double cdxx) {
  JetFunctional f;
  f.value = [=](const Jet2& j) {
    return cv * j.v + cdt * j.dt + cdx * j.dx + cdxx * j.dxx;
  };
  f.grad = [=](const Jet2&) { return Jet2{cv, cdt, cdx, cdxx}; };
  return f;
}

// One piece of the boundary. Segments sharing a `group` are sampled with the
// same parameter draws, matching the shared boundary point sets of the
// Monte-Carlo loss.
struct BoundarySegment {
  std::string name;
  int group = 0;
  double length = 1.0;  // 1-d Lebesgue weight for the segment integral
  std::function<Point(double)> at;              // u in [0,1] -> point
  std::function<double(const Point&)> target;   // boundary data
};

// Parameter-linear problem: H0 u + theta' H1 u = f on an axis-aligned box,
// plus boundary conditions and (for test problems) the analytic solution
// family theta -> u_theta.
struct PdeSpec {
  std::string name;
  double t_lo = 0.0, t_hi = 1.0;
  double x_lo = 0.0, x_hi = 1.0;
  int d = 1;            // dimension of theta
  int deriv_order = 2;  // tau
  JetFunctional h0;
  std::vector<JetFunctional> h1;  // one functional per theta component
  std::function<double(const Point&)> forcing;
  std::vector<BoundarySegment> boundary;
  Eigen::VectorXd true_theta;
  bool has_analytic = false;
  std::function<Jet2(const Eigen::VectorXd&, const Point&)> analytic_jet;

  double volume() const { return (t_hi - t_lo) * (x_hi - x_lo); }

  int boundary_groups() const {
    int g = 0;
    for (const auto& s : boundary) g = std::max(g, s.group + 1);
    return g;
  }

  // f - H0 u - theta' H1 u at a point, from the jet of u there.
  double residual(const Jet2& jet, const Eigen::VectorXd& theta,
                  const Point& p) const {
    double r = forcing(p) - h0.value(jet);
    for (int j = 0; j < d; ++j) r -= theta[j] * h1[j].value(jet);
    return r;
  }
};

// Heat equation u_t - theta u_xx = 0 on (0,1) x (0,pi) with u(t,0)=u(t,pi)=0,
// u(0,x)=sin(x), true theta 0.5 and solution u_theta(t,x)=sin(x)exp(-theta t).
inline PdeSpec heat_spec() {
  PdeSpec s;
  s.name = "heat";
  s.t_lo = 0.0; s.t_hi = 1.0;
  s.x_lo = 0.0; s.x_hi = M_PI;
  s.d = 1;
  s.deriv_order = 2;
  s.h0 = linear_jet_functional(0, 1, 0, 0);        // u_t
  s.h1 = {linear_jet_functional(0, 0, 0, -1)};     // -u_xx
  s.forcing = [](const Point&) { return 0.0; };
  s.true_theta = Eigen::VectorXd::Constant(1, 0.5);

  BoundarySegment x0{"x=0", 0, 1.0,
                     [](double u) { return Point{u, 0.0}; },
                     [](const Point&) { return 0.0; }};
  BoundarySegment xpi{"x=pi", 0, 1.0,
                      [](double u) { return Point{u, M_PI}; },
                      [](const Point&) { return 0.0; }};
  BoundarySegment t0{"t=0", 1, M_PI,
                     [](double u) { return Point{0.0, u * M_PI}; },
                     [](const Point& p) { return std::sin(p.x); }};
  s.boundary = {x0, xpi, t0};

  s.has_analytic = true;
  s.analytic_jet = [](const Eigen::VectorXd& theta, const Point& p) {
    const double e = std::exp(-theta[0] * p.t);
    const double sx = std::sin(p.x);
    return Jet2{sx * e, -theta[0] * sx * e, std::cos(p.x) * e, -sx * e};
  };
  return s;
}

// Sensor locations and noisy observations of the true solution.
struct DataSet {
  std::vector<Point> sensors;
  Eigen::VectorXd y;
  double noise_sd = 0.0;
  int n = 0;
};

struct CollocationSet {
  std::vector<Point> interior;
  std::vector<std::vector<Point>> boundary;  // one list per segment
  int N = 0;
  int B = 0;
};

struct UnsupportedProblemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sensors on a near-square grid with half-cell offsets (no sensor touches the
// boundary); Y_i = u_star(s_i) + sigma eps_i.
inline DataSet generate_data(const PdeSpec& spec, int n, double sigma,
                             std::uint64_t seed) {
  if (!spec.has_analytic)
    throw UnsupportedProblemError("generate_data needs an analytic solution");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  DataSet data;
  data.n = n;
  data.noise_sd = sigma;
  data.sensors.reserve(n);
  const int rows = static_cast<int>(std::ceil(std::sqrt(double(n))));
  const int cols = static_cast<int>(std::ceil(double(n) / rows));
  for (int i = 0; i < rows && static_cast<int>(data.sensors.size()) < n; ++i) {
    for (int j = 0; j < cols && static_cast<int>(data.sensors.size()) < n; ++j) {
      const double t = spec.t_lo + (i + 0.5) / rows * (spec.t_hi - spec.t_lo);
      const double x = spec.x_lo + (j + 0.5) / cols * (spec.x_hi - spec.x_lo);
      data.sensors.push_back(Point{t, x});
    }
  }
  Rng rng(seed);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double u = spec.analytic_jet(spec.true_theta, data.sensors[i]).v;
    data.y[i] = u + sigma * rng.normal();
  }
  return data;
}

// N uniform interior points plus B parameter draws per boundary group,
// mapped through every segment of the group.
inline CollocationSet sample_collocation(const PdeSpec& spec, int N, int B,
                                         std::uint64_t seed) {
  if (N < 1 || B < 1) throw std::invalid_argument("N and B must be >= 1");
  CollocationSet c;
  c.N = N;
  c.B = B;
  Rng rng(seed);
  c.interior.reserve(N);
  for (int k = 0; k < N; ++k) {
    c.interior.push_back(Point{rng.uniform(spec.t_lo, spec.t_hi),
                               rng.uniform(spec.x_lo, spec.x_hi)});
  }
  std::vector<std::vector<double>> group_params(spec.boundary_groups());
  for (auto& g : group_params) {
    g.resize(B);
    for (int k = 0; k < B; ++k) g[k] = rng.uniform();
  }
  c.boundary.resize(spec.boundary.size());
  for (std::size_t s = 0; s < spec.boundary.size(); ++s) {
    const auto& seg = spec.boundary[s];
    c.boundary[s].reserve(B);
    for (int k = 0; k < B; ++k)
      c.boundary[s].push_back(seg.at(group_params[seg.group][k]));
  }
  return c;
}

inline void write_csv(const DataSet& data, std::ostream& os) {
  os << "t,x,y\n";
  char buf[96];
  for (int i = 0; i < data.n; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", data.sensors[i].t,
                  data.sensors[i].x, data.y[i]);
    os << buf;
  }
}

inline void write_csv(const CollocationSet& colloc, const PdeSpec& spec,
                      std::ostream& os) {
  os << "t,x,tag\n";
  char buf[96];
  for (const auto& p : colloc.interior) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,interior\n", p.t, p.x);
    os << buf;
  }
  for (std::size_t s = 0; s < colloc.boundary.size(); ++s) {
    for (const auto& p : colloc.boundary[s]) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%s\n", p.t, p.x,
                    spec.boundary[s].name.c_str());
      os << buf;
    }
  }
}

}  // namespace bpinn
