#pragma once

// Compares reverse-mode gradients with central differences for functions
// built from library ops.

#include <functional>
#include <random>
#include <vector>

#include "dinorade/ops.hpp"
#include "oracles.hpp"

namespace testing {

using dinorade::ag::Tensor;

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// Scalar probe L = sum(f(x) * w) with fixed random w, so every output
/// element contributes to the gradient.
struct Probe {
  std::function<Tensor(const Tensor&)> f;
  std::vector<double> w;

  double value(const dinorade::ag::Shape& shape, const std::vector<double>& x) const {
    dinorade::ag::NoGradGuard ng;
    const Tensor y = f(Tensor::from(shape, x));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
  }
};

/// Relative error between the analytic and finite-difference gradient of
/// sum(f(x) * w) with respect to x.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const dinorade::ag::Shape& shape,
                         const std::vector<double>& x, std::mt19937_64& rng, double h = 1e-6) {
  Probe probe{f, {}};
  {
    dinorade::ag::NoGradGuard ng;
    probe.w = random_values(rng, f(Tensor::from(shape, x)).size());
  }
  const Tensor leaf = Tensor::leaf(shape, x);
  const Tensor y = f(leaf);
  dinorade::ag::backward(y, probe.w);
  const std::vector<double> analytic = leaf.grad();
  const auto numeric = oracle::fd_gradient([&](const std::vector<double>& v) { return probe.value(shape, v); }, x, h);
  return oracle::rel_error(analytic, numeric);
}

}  // namespace testing
