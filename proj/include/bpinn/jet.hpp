#pragma once

#include <cmath>
#include <stdexcept>

namespace bpinn {

// Second-order Taylor jet in two input coordinates (t, x): carries the value,
// the first derivatives d/dt and d/dx, and the pure second derivative d2/dx2.
// This is exactly the derivative set the parameter-linear PDE demos consume.
struct Jet2 {
  double v = 0.0;    // u
  double dt = 0.0;   // du/dt
  double dx = 0.0;   // du/dx
  double dxx = 0.0;  // d2u/dx2

  Jet2() = default;
  Jet2(double v_, double dt_, double dx_, double dxx_)
      : v(v_), dt(dt_), dx(dx_), dxx(dxx_) {}

  static Jet2 constant(double c) { return {c, 0.0, 0.0, 0.0}; }
  // Seeded input coordinates of a point (t, x).
  static Jet2 var_t(double t) { return {t, 1.0, 0.0, 0.0}; }
  static Jet2 var_x(double x) { return {x, 0.0, 1.0, 0.0}; }

  Jet2& operator+=(const Jet2& o) {
    v += o.v; dt += o.dt; dx += o.dx; dxx += o.dxx;
    return *this;
  }
  Jet2& operator-=(const Jet2& o) {
    v -= o.v; dt -= o.dt; dx -= o.dx; dxx -= o.dxx;
    return *this;
  }
  Jet2& operator*=(double c) {
    v *= c; dt *= c; dx *= c; dxx *= c;
    return *this;
  }
};

inline Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
inline Jet2 operator-(Jet2 a, const Jet2& b) { return a -= b; }
inline Jet2 operator*(Jet2 a, double c) { return a *= c; }
inline Jet2 operator*(double c, Jet2 a) { return a *= c; }
inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.dt, -a.dx, -a.dxx}; }

// Leibniz rule through second order in x; dt is first-order only.
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v * b.v;
  r.dt = a.dt * b.v + a.v * b.dt;
  r.dx = a.dx * b.v + a.v * b.dx;
  r.dxx = a.dxx * b.v + 2.0 * a.dx * b.dx + a.v * b.dxx;
  return r;
}

// Chain rule for a smooth scalar map g with derivatives g', g'' at a.v.
inline Jet2 apply_smooth(const Jet2& a, double g, double g1, double g2) {
  Jet2 r;
  r.v = g;
  r.dt = g1 * a.dt;
  r.dx = g1 * a.dx;
  r.dxx = g2 * a.dx * a.dx + g1 * a.dxx;
  return r;
}

inline Jet2 sin(const Jet2& a) {
  return apply_smooth(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v));
}
inline Jet2 cos(const Jet2& a) {
  return apply_smooth(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v));
}
inline Jet2 exp(const Jet2& a) {
  const double e = std::exp(a.v);
  return apply_smooth(a, e, e, e);
}
inline Jet2 tanh(const Jet2& a) {
  const double T = std::tanh(a.v);
  const double g1 = 1.0 - T * T;
  return apply_smooth(a, T, g1, -2.0 * T * g1);
}

// Activation functions with closed-form derivatives to third order; the
// third order is what the reverse pass over jet components needs.
enum class Activation { kTanh, kIdentity };

struct ActDerivs {
  double g = 0.0, g1 = 0.0, g2 = 0.0, g3 = 0.0;
};

inline ActDerivs activation_derivs(Activation act, double z) {
  switch (act) {
    case Activation::kTanh: {
      const double T = std::tanh(z);
      const double g1 = 1.0 - T * T;
      return {T, g1, -2.0 * T * g1, g1 * (6.0 * T * T - 2.0)};
    }
    case Activation::kIdentity:
      return {z, 1.0, 0.0, 0.0};
  }
  throw std::logic_error("unknown activation");
}

}  // namespace bpinn
