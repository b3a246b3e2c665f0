#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sdseg/layers.hpp"
#include "sdseg/tensor.hpp"

namespace sdseg {

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Adam with bias correction, element order fixed by the parameter list.
template <typename T>
class Adam {
 public:
  void attach(const std::vector<Param<T>*>& params) {
    m_.clear();
    v_.clear();
    for (const Param<T>* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
    t_ = 0;
  }

  void step(const std::vector<Param<T>*>& params, const AdamParams& hp) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params.size(); ++k) {
      Param<T>& p = *params[k];
      TensorT<T>& m = m_[k];
      TensorT<T>& v = v_[k];
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        const T g = p.grad[i];
        m[i] = static_cast<T>(hp.beta1 * m[i] + (1.0 - hp.beta1) * g);
        v[i] = static_cast<T>(hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g);
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p.value[i] -= static_cast<T>(hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps));
      }
    }
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  std::vector<TensorT<T>>& moments_m() { return m_; }
  std::vector<TensorT<T>>& moments_v() { return v_; }

 private:
  std::vector<TensorT<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace sdseg
