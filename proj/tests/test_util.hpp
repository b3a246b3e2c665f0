#pragma once

#include <cmath>
#include <functional>

#include "sdseg/rng.hpp"
#include "sdseg/tensor.hpp"

// Shared oracle helpers. Everything here is intentionally independent of the
// library's analytic-gradient code paths: plain central differences and
// naive scalar-loop formulas.
namespace sdseg::testing {

template <typename T>
TensorT<T> random_tensor(std::vector<int64_t> shape, RngStream& rng, double lo = -2.0,
                         double hi = 2.0) {
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.next_uniform(lo, hi));
  return t;
}

inline ByteMask random_binary_mask(std::vector<int64_t> shape, RngStream& rng,
                                   double p_one = 0.5) {
  ByteMask m(std::move(shape));
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = rng.next_double() < p_one ? 1 : 0;
  return m;
}

inline ByteMask random_label_mask(std::vector<int64_t> shape, RngStream& rng) {
  ByteMask m(std::move(shape));
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = static_cast<uint8_t>(rng.next_below(3));
  return m;
}

// Central finite differences of f at x.
inline TensorT<double> finite_difference(
    const std::function<double(const TensorT<double>&)>& f, const TensorT<double>& x,
    double step = 1e-5) {
  TensorT<double> grad(x.shape());
  TensorT<double> probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Norm-ratio relative error between the analytic and numeric gradients.
inline double gradient_error(const TensorT<double>& analytic, const TensorT<double>& numeric) {
  double diff = 0.0, scale = 0.0;
  for (int64_t i = 0; i < analytic.numel(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    scale += analytic[i] * analytic[i] + numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / (std::sqrt(scale) + 1e-300);
}

}  // namespace sdseg::testing
