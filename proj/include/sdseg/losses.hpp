#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "sdseg/errors.hpp"
#include "sdseg/outputs.hpp"
#include "sdseg/tensor.hpp"

// Training objectives. Every loss returns its scalar value and, when a grad
// pointer is supplied, writes the analytic gradient w.r.t. its first argument
// (resized to match). All of them are verified against central finite
// differences in double precision by the test suite, so keep forward and
// backward in the same function when touching these.
namespace sdseg {

enum class CcmReduction { kSum, kMean };

struct LossWeights {
  double alpha = 0.1;  // BCE weight in the boundary compound loss
  double beta = 1.0;   // Dice weight in the boundary compound loss
  double tau = 1.0;    // Dice smooth term
  CcmReduction ccm_reduction = CcmReduction::kMean;
};

template <typename T>
struct LossBreakdown {
  T seg_teeth = 0;
  T seg_plaque = 0;
  T scm_teeth = 0;
  T scm_plaque = 0;
  T ccm = 0;
  T total = 0;
};

namespace detail {

// Accepts [C,H,W] as batch of one or [N,C,H,W].
template <typename T>
inline void split_batch_dims(const TensorT<T>& t, int expect_c, int64_t& n, int64_t& hw) {
  if (t.ndim() == 3 && t.dim(0) == expect_c) {
    n = 1;
    hw = t.dim(1) * t.dim(2);
  } else if (t.ndim() == 4 && t.dim(1) == expect_c) {
    n = t.dim(0);
    hw = t.dim(2) * t.dim(3);
  } else {
    throw std::invalid_argument("expected [" + std::to_string(expect_c) +
                                ",H,W] or [N," + std::to_string(expect_c) +
                                ",H,W] tensor, got " + t.shape_str());
  }
}

template <typename T>
inline void check_target_size(const TensorT<T>& logits, const ByteMask& target,
                              int64_t n, int64_t hw) {
  if (target.numel() != n * hw) {
    throw std::invalid_argument("target shape " + target.shape_str() +
                                " does not match logits " + logits.shape_str());
  }
}

template <typename T>
inline void require_finite(const TensorT<T>& t, const char* what) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(t[i]))) {
      throw NumericalError(std::string(what) + " contains a non-finite value");
    }
  }
}

}  // namespace detail

// Per-branch segmentation loss: pixel-mean categorical cross-entropy between
// softmax over the two channels {background, foreground} and the binary target.
template <typename T>
T seg_ce_loss(const TensorT<T>& mask_logits, const ByteMask& target,
              TensorT<T>* grad = nullptr) {
  int64_t n, hw;
  detail::split_batch_dims(mask_logits, 2, n, hw);
  detail::check_target_size(mask_logits, target, n, hw);
  detail::require_finite(mask_logits, "mask logits");

  if (grad) *grad = TensorT<T>(mask_logits.shape());
  const T* z = mask_logits.data();
  const uint8_t* y = target.data();
  const T inv_count = T(1) / static_cast<T>(n * hw);

  double sum = 0.0;
  for (int64_t b = 0; b < n; ++b) {
    const T* z0 = z + b * 2 * hw;      // background channel
    const T* z1 = z0 + hw;             // foreground channel
    const uint8_t* yb = y + b * hw;
    for (int64_t i = 0; i < hw; ++i) {
      T m = std::max(z0[i], z1[i]);
      T lse = m + std::log(std::exp(z0[i] - m) + std::exp(z1[i] - m));
      T zy = yb[i] ? z1[i] : z0[i];
      sum += static_cast<double>(lse - zy);
      if (grad) {
        T p1 = std::exp(z1[i] - lse);
        T p0 = std::exp(z0[i] - lse);
        T* g0 = grad->data() + b * 2 * hw;
        T* g1 = g0 + hw;
        g0[i] = (p0 - (yb[i] ? T(0) : T(1))) * inv_count;
        g1[i] = (p1 - (yb[i] ? T(1) : T(0))) * inv_count;
      }
    }
  }
  return static_cast<T>(sum) * inv_count;
}

// Pixel-mean binary cross-entropy on boundary logits, in the stable
// max(z,0) - z*y + log(1 + exp(-|z|)) form.
template <typename T>
T bce_loss(const TensorT<T>& logits, const ByteMask& target, TensorT<T>* grad = nullptr) {
  int64_t n, hw;
  if (logits.ndim() == 2) {
    n = 1;
    hw = logits.numel();
  } else {
    detail::split_batch_dims(logits, 1, n, hw);
  }
  detail::check_target_size(logits, target, n, hw);

  if (grad) *grad = TensorT<T>(logits.shape());
  const T* z = logits.data();
  const uint8_t* y = target.data();
  const int64_t count = n * hw;
  const T inv_count = T(1) / static_cast<T>(count);

  double sum = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    T zi = z[i];
    T yi = static_cast<T>(y[i]);
    sum += static_cast<double>(std::max(zi, T(0)) - zi * yi +
                               std::log1p(std::exp(-std::abs(zi))));
    if (grad) {
      T sig = T(1) / (T(1) + std::exp(-zi));
      (*grad)[i] = (sig - yi) * inv_count;
    }
  }
  return static_cast<T>(sum) * inv_count;
}

// Dice loss on probabilities: 1 - (2*sum(p*y) + tau) / (sum(p^2) + sum(y^2) + tau),
// sums taken over each sample's full map, batch-averaged.
template <typename T>
T dice_loss(const TensorT<T>& probs, const ByteMask& target, T tau,
            TensorT<T>* grad = nullptr) {
  if (tau <= T(0)) throw std::invalid_argument("dice smooth term must be positive");
  int64_t n, hw;
  if (probs.ndim() == 2) {
    n = 1;
    hw = probs.numel();
  } else {
    detail::split_batch_dims(probs, 1, n, hw);
  }
  detail::check_target_size(probs, target, n, hw);

  if (grad) *grad = TensorT<T>(probs.shape());
  const T inv_n = T(1) / static_cast<T>(n);

  double loss = 0.0;
  for (int64_t b = 0; b < n; ++b) {
    const T* p = probs.data() + b * hw;
    const uint8_t* y = target.data() + b * hw;
    double spy = 0.0, spp = 0.0, syy = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      spy += static_cast<double>(p[i]) * y[i];
      spp += static_cast<double>(p[i]) * p[i];
      syy += y[i];  // y is binary, y^2 == y
    }
    double num = 2.0 * spy + static_cast<double>(tau);
    double den = spp + syy + static_cast<double>(tau);
    loss += 1.0 - num / den;
    if (grad) {
      T* g = grad->data() + b * hw;
      for (int64_t i = 0; i < hw; ++i) {
        double d = (num * 2.0 * p[i] - 2.0 * y[i] * den) / (den * den);
        g[i] = static_cast<T>(d) * inv_n;
      }
    }
  }
  return static_cast<T>(loss) * inv_n;
}

// Structural constraint (boundary compound) loss on boundary logits:
// alpha * BCE(z, y) + beta * Dice(sigmoid(z), y, tau).
template <typename T>
T scm_loss(const TensorT<T>& boundary_logits, const ByteMask& target,
           const LossWeights& w, TensorT<T>* grad = nullptr) {
  TensorT<T> bce_grad, dice_grad;
  T bce = bce_loss(boundary_logits, target, grad ? &bce_grad : nullptr);

  TensorT<T> probs(boundary_logits.shape());
  for (int64_t i = 0; i < boundary_logits.numel(); ++i) {
    probs[i] = T(1) / (T(1) + std::exp(-boundary_logits[i]));
  }
  T dice = dice_loss(probs, target, static_cast<T>(w.tau), grad ? &dice_grad : nullptr);

  if (grad) {
    *grad = TensorT<T>(boundary_logits.shape());
    const T alpha = static_cast<T>(w.alpha);
    const T beta = static_cast<T>(w.beta);
    for (int64_t i = 0; i < grad->numel(); ++i) {
      T dsig = probs[i] * (T(1) - probs[i]);
      (*grad)[i] = alpha * bce_grad[i] + beta * dice_grad[i] * dsig;
    }
  }
  return static_cast<T>(w.alpha) * bce + static_cast<T>(w.beta) * dice;
}

// Contrastive constraint: cosine similarity between the two branches'
// pixel embeddings, summed or averaged over pixels. Embeddings are
// [P,D] or [N,P,D]; each row is L2-normalized inside the loss. Norms below
// 1e-12 get 1e-12 added so the division is always defined.
template <typename T>
T ccm_loss(const TensorT<T>& emb_p, const TensorT<T>& emb_t, CcmReduction reduction,
           TensorT<T>* grad_p = nullptr, TensorT<T>* grad_t = nullptr) {
  if (!emb_p.same_shape(emb_t)) {
    throw std::invalid_argument("embedding fields differ in shape: " +
                                emb_p.shape_str() + " vs " + emb_t.shape_str());
  }
  if (emb_p.ndim() != 2 && emb_p.ndim() != 3) {
    throw std::invalid_argument("expected [P,D] or [N,P,D] embeddings, got " +
                                emb_p.shape_str());
  }
  const int64_t n = emb_p.ndim() == 3 ? emb_p.dim(0) : 1;
  const int64_t pixels = emb_p.dim(emb_p.ndim() == 3 ? 1 : 0);
  const int64_t d = emb_p.dim(-1);
  constexpr double kNormFloor = 1e-12;

  if (grad_p) *grad_p = TensorT<T>(emb_p.shape());
  if (grad_t) *grad_t = TensorT<T>(emb_t.shape());
  const double pixel_scale = reduction == CcmReduction::kMean ? 1.0 / pixels : 1.0;
  const double out_scale = pixel_scale / n;

  double total = 0.0;
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t i = 0; i < pixels; ++i) {
      const T* u = emb_p.data() + (b * pixels + i) * d;
      const T* v = emb_t.data() + (b * pixels + i) * d;
      double uu = 0.0, vv = 0.0, uv = 0.0;
      for (int64_t k = 0; k < d; ++k) {
        uu += static_cast<double>(u[k]) * u[k];
        vv += static_cast<double>(v[k]) * v[k];
        uv += static_cast<double>(u[k]) * v[k];
      }
      double nu = std::sqrt(uu);
      double nv = std::sqrt(vv);
      if (nu < kNormFloor) nu += kNormFloor;
      if (nv < kNormFloor) nv += kNormFloor;
      double cos = uv / (nu * nv);
      total += cos;
      if (grad_p || grad_t) {
        T* gu = grad_p ? grad_p->data() + (b * pixels + i) * d : nullptr;
        T* gv = grad_t ? grad_t->data() + (b * pixels + i) * d : nullptr;
        for (int64_t k = 0; k < d; ++k) {
          if (gu) gu[k] = static_cast<T>((v[k] / (nu * nv) - cos * u[k] / (nu * nu)) * out_scale);
          if (gv) gv[k] = static_cast<T>((u[k] / (nu * nv) - cos * v[k] / (nv * nv)) * out_scale);
        }
      }
    }
  }
  return static_cast<T>(total * out_scale);
}

// 3-class pixel-mean cross-entropy for the single-decoder baseline.
template <typename T>
T seg_ce3_loss(const TensorT<T>& logits, const ByteMask& labels,
               TensorT<T>* grad = nullptr) {
  int64_t n, hw;
  detail::split_batch_dims(logits, 3, n, hw);
  detail::check_target_size(logits, labels, n, hw);
  detail::require_finite(logits, "label logits");

  if (grad) {
    *grad = TensorT<T>(logits.shape());
  }
  const T inv_count = T(1) / static_cast<T>(n * hw);
  double sum = 0.0;
  for (int64_t b = 0; b < n; ++b) {
    const T* z = logits.data() + b * 3 * hw;
    const uint8_t* y = labels.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) {
      T z0 = z[i], z1 = z[hw + i], z2 = z[2 * hw + i];
      T m = std::max(z0, std::max(z1, z2));
      T lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m) + std::exp(z2 - m));
      T zy = y[i] == 0 ? z0 : (y[i] == 1 ? z1 : z2);
      sum += static_cast<double>(lse - zy);
      if (grad) {
        T* g = grad->data() + b * 3 * hw;
        for (int c = 0; c < 3; ++c) {
          T zc = z[c * hw + i];
          g[c * hw + i] = (std::exp(zc - lse) - (y[i] == c ? T(1) : T(0))) * inv_count;
        }
      }
    }
  }
  return static_cast<T>(sum) * inv_count;
}

namespace detail {

template <typename T>
inline void require_finite_component(T value, const char* component) {
  if (!std::isfinite(static_cast<double>(value))) {
    throw NumericalError(std::string("loss component ") + component + " is not finite");
  }
}

}  // namespace detail

// The five-term total objective. Branch pairing is fixed: plaque branch vs
// plaque targets, teeth branch vs teeth targets. Disabled components
// contribute exact zeros; the breakdown always sums to `total` bit-exactly.
// Baseline mode (SD off) trains a single 3-class cross-entropy, reported in
// the seg_teeth slot so the decomposition identity still holds.
template <typename T>
LossBreakdown<T> total_loss(const ForwardResult<T>& out, const SupervisionBatch& sup,
                            const LossWeights& weights, const Ablation& ablation = {},
                            LossGrads<T>* grads = nullptr) {
  LossBreakdown<T> lb;
  if (out.baseline || !ablation.sd) {
    lb.seg_teeth = seg_ce3_loss(out.label3_logits, sup.labels,
                                grads ? &grads->label3 : nullptr);
    detail::require_finite_component(lb.seg_teeth, "seg (3-class baseline)");
    lb.total = lb.seg_teeth;
    return lb;
  }

  lb.seg_teeth = seg_ce_loss(out.teeth.mask_logits, sup.teeth_mask,
                             grads ? &grads->teeth_mask : nullptr);
  detail::require_finite_component(lb.seg_teeth, "seg_teeth");
  lb.seg_plaque = seg_ce_loss(out.plaque.mask_logits, sup.plaque_mask,
                              grads ? &grads->plaque_mask : nullptr);
  detail::require_finite_component(lb.seg_plaque, "seg_plaque");

  if (ablation.scm) {
    lb.scm_teeth = scm_loss(out.teeth.boundary_logits, sup.teeth_boundary, weights,
                            grads ? &grads->teeth_boundary : nullptr);
    detail::require_finite_component(lb.scm_teeth, "scm_teeth");
    lb.scm_plaque = scm_loss(out.plaque.boundary_logits, sup.plaque_boundary, weights,
                             grads ? &grads->plaque_boundary : nullptr);
    detail::require_finite_component(lb.scm_plaque, "scm_plaque");
  }
  if (ablation.ccm) {
    lb.ccm = ccm_loss(out.plaque.embeddings, out.teeth.embeddings, weights.ccm_reduction,
                      grads ? &grads->plaque_emb : nullptr,
                      grads ? &grads->teeth_emb : nullptr);
    detail::require_finite_component(lb.ccm, "ccm");
  }
  lb.total = lb.seg_teeth + lb.seg_plaque + lb.scm_teeth + lb.scm_plaque + lb.ccm;
  return lb;
}

}  // namespace sdseg
