#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sdseg/rng.hpp"
#include "sdseg/tensor.hpp"

// Building blocks of the network, each with an explicit backward pass.
// Convolutions run as im2col + GEMM per sample, which keeps batched and
// per-sample execution bit-identical and the reduction order fixed.
namespace sdseg {

template <typename T>
struct Param {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  void init_shape(std::vector<int64_t> shape) {
    value = TensorT<T>(shape);
    grad = TensorT<T>(std::move(shape));
  }
};

// 2D convolution, stride 1, square kernel (1 or 3), zero padding k/2 so the
// spatial size is preserved.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int ksize)
      : in_c_(in_channels), out_c_(out_channels), k_(ksize) {
    weight_.name = name + ".weight";
    weight_.init_shape({out_channels, static_cast<int64_t>(in_channels) * ksize * ksize});
    bias_.name = name + ".bias";
    bias_.init_shape({out_channels});
  }

  TensorT<T> forward(const TensorT<T>& x, bool keep_for_backward) {
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t hw = h * w;
    const int64_t krows = static_cast<int64_t>(in_c_) * k_ * k_;
    TensorT<T> y({n, out_c_, h, w});
    if (k_ > 1) cols_.resize(static_cast<size_t>(krows * hw));
    for (int64_t b = 0; b < n; ++b) {
      const T* xb = x.data() + b * in_c_ * hw;
      const T* src = xb;
      if (k_ > 1) {
        im2col(xb, h, w);
        src = cols_.data();
      }
      T* yb = y.data() + b * out_c_ * hw;
      gemm<T>(false, false, out_c_, hw, krows, T(1), weight_.value.data(), krows, src, hw,
              T(0), yb, hw);
      for (int64_t c = 0; c < out_c_; ++c) {
        const T bv = bias_.value[c];
        T* row = yb + c * hw;
        for (int64_t i = 0; i < hw; ++i) row[i] += bv;
      }
    }
    if (keep_for_backward) x_ = x;
    return y;
  }

  // Accumulates parameter gradients and returns grad w.r.t. the input.
  TensorT<T> backward(const TensorT<T>& dy) {
    const int64_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int64_t hw = h * w;
    const int64_t krows = static_cast<int64_t>(in_c_) * k_ * k_;
    TensorT<T> dx(x_.shape());
    if (k_ > 1) {
      cols_.resize(static_cast<size_t>(krows * hw));
      dcols_.resize(static_cast<size_t>(krows * hw));
    }
    for (int64_t b = 0; b < n; ++b) {
      const T* xb = x_.data() + b * in_c_ * hw;
      const T* dyb = dy.data() + b * out_c_ * hw;
      T* dxb = dx.data() + b * in_c_ * hw;

      const T* src = xb;
      if (k_ > 1) {
        im2col(xb, h, w);
        src = cols_.data();
      }
      // dW += dy * cols^T
      gemm<T>(false, true, out_c_, krows, hw, T(1), dyb, hw, src, hw, T(1),
              weight_.grad.data(), krows);
      for (int64_t c = 0; c < out_c_; ++c) {
        const T* row = dyb + c * hw;
        T acc = 0;
        for (int64_t i = 0; i < hw; ++i) acc += row[i];
        bias_.grad[c] += acc;
      }
      // dcols = W^T * dy, scattered back to dx
      if (k_ > 1) {
        gemm<T>(true, false, krows, hw, out_c_, T(1), weight_.value.data(), krows, dyb, hw,
                T(0), dcols_.data(), hw);
        col2im(dcols_.data(), dxb, h, w);
      } else {
        gemm<T>(true, false, in_c_, hw, out_c_, T(1), weight_.value.data(), in_c_, dyb, hw,
                T(0), dxb, hw);
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  int64_t fan_in() const { return static_cast<int64_t>(in_c_) * k_ * k_; }
  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

 private:
  void im2col(const T* x, int64_t h, int64_t w) const {
    const int64_t pad = k_ / 2;
    T* col = cols_.data();
    for (int64_t c = 0; c < in_c_; ++c) {
      const T* plane = x + c * h * w;
      for (int64_t ky = 0; ky < k_; ++ky) {
        for (int64_t kx = 0; kx < k_; ++kx) {
          for (int64_t y = 0; y < h; ++y) {
            const int64_t sy = y + ky - pad;
            T* dst = col;
            col += w;
            if (sy < 0 || sy >= h) {
              std::fill(dst, dst + w, T(0));
              continue;
            }
            const T* srow = plane + sy * w;
            const int64_t shift = kx - pad;  // source x = x + shift
            int64_t x0 = std::max<int64_t>(0, -shift);
            int64_t x1 = std::min<int64_t>(w, w - shift);
            if (x0 > 0) std::fill(dst, dst + x0, T(0));
            if (x1 > x0) std::copy(srow + x0 + shift, srow + x1 + shift, dst + x0);
            if (x1 < w) std::fill(dst + std::max(x0, x1), dst + w, T(0));
          }
        }
      }
    }
  }

  void col2im(const T* col, T* dx, int64_t h, int64_t w) const {
    const int64_t pad = k_ / 2;
    for (int64_t c = 0; c < in_c_; ++c) {
      T* plane = dx + c * h * w;
      for (int64_t ky = 0; ky < k_; ++ky) {
        for (int64_t kx = 0; kx < k_; ++kx) {
          for (int64_t y = 0; y < h; ++y) {
            const int64_t sy = y + ky - pad;
            const T* srow = col;
            col += w;
            if (sy < 0 || sy >= h) continue;
            T* drow = plane + sy * w;
            const int64_t shift = kx - pad;
            int64_t x0 = std::max<int64_t>(0, -shift);
            int64_t x1 = std::min<int64_t>(w, w - shift);
            for (int64_t x = x0; x < x1; ++x) drow[x + shift] += srow[x];
          }
        }
      }
    }
  }

  int in_c_ = 0, out_c_ = 0, k_ = 0;
  Param<T> weight_, bias_;
  TensorT<T> x_;
  mutable std::vector<T> cols_;
  mutable std::vector<T> dcols_;
};

// In-place ReLU keeping the activation mask for backward.
template <typename T>
class Relu {
 public:
  void forward(TensorT<T>& x, bool keep_for_backward) {
    if (keep_for_backward) mask_.assign(static_cast<size_t>(x.numel()), 0);
    for (int64_t i = 0; i < x.numel(); ++i) {
      if (x[i] > T(0)) {
        if (keep_for_backward) mask_[static_cast<size_t>(i)] = 1;
      } else {
        x[i] = T(0);
      }
    }
  }

  void backward(TensorT<T>& grad) const {
    for (int64_t i = 0; i < grad.numel(); ++i) {
      if (!mask_[static_cast<size_t>(i)]) grad[i] = T(0);
    }
  }

 private:
  std::vector<uint8_t> mask_;
};

// Two 3x3 convolutions, each followed by ReLU.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_channels, int out_channels)
      : conv1_(name + ".conv1", in_channels, out_channels, 3),
        conv2_(name + ".conv2", out_channels, out_channels, 3) {}

  TensorT<T> forward(const TensorT<T>& x, bool keep) {
    TensorT<T> y = conv1_.forward(x, keep);
    relu1_.forward(y, keep);
    y = conv2_.forward(y, keep);
    relu2_.forward(y, keep);
    return y;
  }

  TensorT<T> backward(TensorT<T> dy) {
    relu2_.backward(dy);
    TensorT<T> d1 = conv2_.backward(dy);
    relu1_.backward(d1);
    return conv1_.backward(d1);
  }

  void collect(std::vector<Param<T>*>& out) {
    conv1_.collect(out);
    conv2_.collect(out);
  }

 private:
  Conv2d<T> conv1_, conv2_;
  Relu<T> relu1_, relu2_;
};

// 2x2 max pooling with stride 2; ties resolve to the first element in scan
// order so pooling stays deterministic.
template <typename T>
class MaxPool2 {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool keep) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = h / 2, ow = w / 2;
    TensorT<T> y({n, c, oh, ow});
    if (keep) {
      in_shape_ = x.shape();
      argmax_.assign(static_cast<size_t>(y.numel()), 0);
    }
    int64_t oi = 0;
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t yy = 0; yy < oh; ++yy) {
          for (int64_t xx = 0; xx < ow; ++xx, ++oi) {
            T best = x.at(b, ch, yy * 2, xx * 2);
            uint8_t arg = 0;
            for (uint8_t idx = 1; idx < 4; ++idx) {
              T v = x.at(b, ch, yy * 2 + idx / 2, xx * 2 + idx % 2);
              if (v > best) {
                best = v;
                arg = idx;
              }
            }
            y[oi] = best;
            if (keep) argmax_[static_cast<size_t>(oi)] = arg;
          }
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) const {
    TensorT<T> dx(in_shape_);
    const int64_t n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    int64_t oi = 0;
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t yy = 0; yy < oh; ++yy) {
          for (int64_t xx = 0; xx < ow; ++xx, ++oi) {
            uint8_t arg = argmax_[static_cast<size_t>(oi)];
            dx.at(b, ch, yy * 2 + arg / 2, xx * 2 + arg % 2) += dy[oi];
          }
        }
      }
    }
    return dx;
  }

 private:
  std::vector<int64_t> in_shape_;
  std::vector<uint8_t> argmax_;
};

// x2 bilinear upsampling with half-pixel sample positions; backward is the
// exact adjoint.
template <typename T>
class BilinearUp2 {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool keep) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (keep) in_shape_ = x.shape();
    const int64_t oh = h * 2, ow = w * 2;
    build_axis(h, ys0_, ys1_, yt_);
    build_axis(w, xs0_, xs1_, xt_);
    TensorT<T> y({n, c, oh, ow});
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* plane = x.data() + (b * c + ch) * h * w;
        T* out = y.data() + (b * c + ch) * oh * ow;
        for (int64_t yy = 0; yy < oh; ++yy) {
          const T* r0 = plane + ys0_[yy] * w;
          const T* r1 = plane + ys1_[yy] * w;
          const T ty = yt_[yy];
          T* orow = out + yy * ow;
          for (int64_t xx = 0; xx < ow; ++xx) {
            const T tx = xt_[xx];
            T top = r0[xs0_[xx]] * (T(1) - tx) + r0[xs1_[xx]] * tx;
            T bot = r1[xs0_[xx]] * (T(1) - tx) + r1[xs1_[xx]] * tx;
            orow[xx] = top * (T(1) - ty) + bot * ty;
          }
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) const {
    TensorT<T> dx(in_shape_);
    const int64_t n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    const int64_t h = in_shape_[2], w = in_shape_[3];
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t ch = 0; ch < c; ++ch) {
        T* plane = dx.data() + (b * c + ch) * h * w;
        const T* g = dy.data() + (b * c + ch) * oh * ow;
        for (int64_t yy = 0; yy < oh; ++yy) {
          const T ty = yt_[yy];
          const T* grow = g + yy * ow;
          T* r0 = plane + ys0_[yy] * w;
          T* r1 = plane + ys1_[yy] * w;
          for (int64_t xx = 0; xx < ow; ++xx) {
            const T tx = xt_[xx];
            const T v = grow[xx];
            r0[xs0_[xx]] += v * (T(1) - ty) * (T(1) - tx);
            r0[xs1_[xx]] += v * (T(1) - ty) * tx;
            r1[xs0_[xx]] += v * ty * (T(1) - tx);
            r1[xs1_[xx]] += v * ty * tx;
          }
        }
      }
    }
    return dx;
  }

 private:
  static void build_axis(int64_t in, std::vector<int64_t>& s0, std::vector<int64_t>& s1,
                         std::vector<T>& t) {
    const int64_t out = in * 2;
    s0.resize(static_cast<size_t>(out));
    s1.resize(static_cast<size_t>(out));
    t.resize(static_cast<size_t>(out));
    for (int64_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
      double f = std::floor(src);
      double frac = src - f;
      int64_t i0 = static_cast<int64_t>(f);
      int64_t i1 = i0 + 1;
      if (i0 < 0) i0 = 0;
      if (i1 > in - 1) i1 = in - 1;
      if (i1 < 0) i1 = 0;
      if (i0 > in - 1) i0 = in - 1;
      s0[static_cast<size_t>(o)] = i0;
      s1[static_cast<size_t>(o)] = i1;
      t[static_cast<size_t>(o)] = static_cast<T>(frac);
    }
  }

  std::vector<int64_t> in_shape_;
  std::vector<int64_t> ys0_, ys1_, xs0_, xs1_;
  std::vector<T> yt_, xt_;
};

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  const int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  TensorT<T> y({n, ca + cb, h, w});
  const int64_t hw = h * w;
  for (int64_t bn = 0; bn < n; ++bn) {
    std::copy_n(a.data() + bn * ca * hw, ca * hw, y.data() + bn * (ca + cb) * hw);
    std::copy_n(b.data() + bn * cb * hw, cb * hw, y.data() + (bn * (ca + cb) + ca) * hw);
  }
  return y;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& y, int64_t ca) {
  const int64_t n = y.dim(0), c = y.dim(1), h = y.dim(2), w = y.dim(3);
  const int64_t cb = c - ca;
  TensorT<T> a({n, ca, h, w});
  TensorT<T> b({n, cb, h, w});
  const int64_t hw = h * w;
  for (int64_t bn = 0; bn < n; ++bn) {
    std::copy_n(y.data() + bn * c * hw, ca * hw, a.data() + bn * ca * hw);
    std::copy_n(y.data() + (bn * c + ca) * hw, cb * hw, b.data() + bn * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_into(TensorT<T>& dst, const TensorT<T>& src) {
  for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace sdseg
