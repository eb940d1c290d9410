#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpinn/jet.hpp"
#include "bpinn/rng.hpp"

namespace bpinn {

struct Point {
  double t = 0.0;
  double x = 0.0;
};

// Fully connected architecture: layer_sizes = (p_0, ..., p_xi) with p_0 the
// domain dimension and p_xi = 1. Hidden layers use `activation`, the last
// layer is the identity.
struct NetworkArch {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kTanh;

  int depth() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }

  // q = sum_i p_i (1 + p_{i-1})
  int param_count() const {
    int q = 0;
    for (std::size_t i = 1; i < layer_sizes.size(); ++i)
      q += layer_sizes[i] * (1 + layer_sizes[i - 1]);
    return q;
  }

  // Flat offset of layer i's block (weights row-major, then bias), 1-based.
  int layer_offset(int i) const {
    int off = 0;
    for (int j = 1; j < i; ++j)
      off += layer_sizes[j] * (1 + layer_sizes[j - 1]);
    return off;
  }

  Activation layer_activation(int i) const {
    return i == depth() ? Activation::kIdentity : activation;
  }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw std::invalid_argument("arch needs at least one layer");
    for (int p : layer_sizes)
      if (p <= 0) throw std::invalid_argument("layer sizes must be positive");
    if (layer_sizes.back() != 1)
      throw std::invalid_argument("output dimension must be 1");
  }
};

// The sampled object: dense weights W, sparsity mask Lambda, architecture.
// Every evaluation uses the masked vector W .* Lambda.
struct NetworkState {
  NetworkArch arch;
  Eigen::VectorXd weights;        // length q
  std::vector<std::uint8_t> mask; // length q, 0/1

  int param_count() const { return static_cast<int>(weights.size()); }

  Eigen::VectorXd effective_weights() const {
    Eigen::VectorXd w = weights;
    for (int j = 0; j < w.size(); ++j)
      if (!mask[j]) w[j] = 0.0;
    return w;
  }

  int active_count() const {
    int c = 0;
    for (auto m : mask) c += m;
    return c;
  }
};

inline NetworkState make_state(const NetworkArch& arch) {
  arch.validate();
  NetworkState s;
  s.arch = arch;
  s.weights = Eigen::VectorXd::Zero(arch.param_count());
  s.mask.assign(arch.param_count(), 1);
  return s;
}

// Chain-start initialization: active weights N(0, 1/p_{i-1}) per layer.
inline void init_weights(NetworkState& state, Rng& rng) {
  const auto& ls = state.arch.layer_sizes;
  for (int i = 1; i <= state.arch.depth(); ++i) {
    const int off = state.arch.layer_offset(i);
    const int rows = ls[i], cols = ls[i - 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int k = 0; k < rows * cols; ++k)
      state.weights[off + k] = rng.normal(0.0, sd);
    for (int k = 0; k < rows; ++k) state.weights[off + rows * cols + k] = 0.0;
  }
}

struct NumericalOverflowError : std::runtime_error {
  explicit NumericalOverflowError(const std::string& what)
      : std::runtime_error(what) {}
};

namespace detail {
inline void check_finite_jet(const Jet2& j, int layer) {
  if (!(std::isfinite(j.v) && std::isfinite(j.dt) && std::isfinite(j.dx) &&
        std::isfinite(j.dxx))) {
    std::ostringstream os;
    os << "non-finite value in layer " << layer;
    throw NumericalOverflowError(os.str());
  }
}

inline void check_finite_layer(const std::vector<Jet2>& a, int layer) {
  for (const auto& j : a) check_finite_jet(j, layer);
}
}  // namespace detail

// Propagates second-order Taylor jets through every layer. Exact derivatives,
// one activation evaluation per unit.
inline Jet2 forward_jet(const NetworkState& state, const Point& p) {
  const auto& arch = state.arch;
  if (arch.input_dim() != 2)
    throw std::invalid_argument("forward_jet expects a 2-d (t,x) domain");
  const Eigen::VectorXd w = state.effective_weights();

  std::vector<Jet2> a = {Jet2::var_t(p.t), Jet2::var_x(p.x)};
  std::vector<Jet2> z;
  for (int i = 1; i <= arch.depth(); ++i) {
    const int rows = arch.layer_sizes[i], cols = arch.layer_sizes[i - 1];
    const int off = arch.layer_offset(i);
    const Activation act = arch.layer_activation(i);
    z.assign(rows, Jet2{});
    for (int r = 0; r < rows; ++r) {
      Jet2 acc = Jet2::constant(w[off + rows * cols + r]);
      for (int c = 0; c < cols; ++c) {
        const double wij = w[off + r * cols + c];
        acc.v += wij * a[c].v;
        acc.dt += wij * a[c].dt;
        acc.dx += wij * a[c].dx;
        acc.dxx += wij * a[c].dxx;
      }
      detail::check_finite_jet(acc, i);
      const ActDerivs g = activation_derivs(act, acc.v);
      z[r] = apply_smooth(acc, g.g, g.g1, g.g2);
    }
    detail::check_finite_layer(z, i);
    a.swap(z);
  }
  return a[0];
}

inline double forward_value(const NetworkState& state, const Point& p) {
  return forward_jet(state, p).v;
}

}  // namespace bpinn
