#include "sdseg/infer.hpp"

#include <cmath>
#include <filesystem>

#include "sdseg/errors.hpp"
#include "sdseg/png_io.hpp"

namespace fs = std::filesystem;

namespace sdseg {

Tensor branch_foreground_prob(const Tensor& mask_logits) {
  const bool batched = mask_logits.ndim() == 4;
  if ((batched && mask_logits.dim(1) != 2) || (!batched && mask_logits.dim(0) != 2)) {
    throw std::invalid_argument("expected two-channel mask logits, got " +
                                mask_logits.shape_str());
  }
  const int64_t n = batched ? mask_logits.dim(0) : 1;
  const int64_t h = mask_logits.dim(batched ? 2 : 1);
  const int64_t w = mask_logits.dim(batched ? 3 : 2);
  const int64_t hw = h * w;

  Tensor prob(batched ? std::vector<int64_t>{n, h, w} : std::vector<int64_t>{h, w});
  for (int64_t b = 0; b < n; ++b) {
    const float* z0 = mask_logits.data() + b * 2 * hw;
    const float* z1 = z0 + hw;
    float* p = prob.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) {
      float m = std::max(z0[i], z1[i]);
      float e0 = std::exp(z0[i] - m);
      float e1 = std::exp(z1[i] - m);
      p[i] = e1 / (e0 + e1);
    }
  }
  return prob;
}

FusedPrediction fuse_branches(const Tensor& prob_teeth, const Tensor& prob_plaque) {
  if (!prob_teeth.same_shape(prob_plaque)) {
    throw std::invalid_argument("probability maps differ in shape");
  }
  FusedPrediction out;
  out.label = ByteMask(prob_teeth.shape());
  out.prob_teeth = prob_teeth;
  out.prob_plaque = prob_plaque;
  for (int64_t i = 0; i < prob_teeth.numel(); ++i) {
    float pt = prob_teeth[i];
    float pp = prob_plaque[i];
    if (std::max(pt, pp) < 0.5f) {
      out.label[i] = 0;
    } else {
      out.label[i] = pp >= pt ? 2 : 1;  // ties favor plaque
    }
  }
  return out;
}

std::vector<FusedPrediction> predict(SDNetF& model, const Tensor& images) {
  ForwardResult<float> result = model.forward(images, ForwardMode::kInference);
  if (result.baseline) return fused_from_label3(result.label3_logits);

  Tensor pt = branch_foreground_prob(result.teeth.mask_logits);
  Tensor pp = branch_foreground_prob(result.plaque.mask_logits);
  const int64_t n = images.dim(0);
  const int64_t h = images.dim(2), w = images.dim(3);
  std::vector<FusedPrediction> preds;
  preds.reserve(static_cast<size_t>(n));
  for (int64_t b = 0; b < n; ++b) {
    Tensor t({h, w}), p({h, w});
    std::copy_n(pt.data() + b * h * w, h * w, t.data());
    std::copy_n(pp.data() + b * h * w, h * w, p.data());
    preds.push_back(fuse_branches(t, p));
  }
  return preds;
}

std::vector<FusedPrediction> fused_from_label3(const Tensor& label3_logits) {
  const int64_t n = label3_logits.dim(0);
  const int64_t h = label3_logits.dim(2), w = label3_logits.dim(3);
  const int64_t hw = h * w;
  std::vector<FusedPrediction> preds;
  preds.reserve(static_cast<size_t>(n));
  for (int64_t b = 0; b < n; ++b) {
    FusedPrediction pred;
    pred.label = ByteMask({h, w});
    pred.prob_teeth = Tensor({h, w});
    pred.prob_plaque = Tensor({h, w});
    const float* z = label3_logits.data() + b * 3 * hw;
    for (int64_t i = 0; i < hw; ++i) {
      float z0 = z[i], z1 = z[hw + i], z2 = z[2 * hw + i];
      float m = std::max(z0, std::max(z1, z2));
      float e0 = std::exp(z0 - m), e1 = std::exp(z1 - m), e2 = std::exp(z2 - m);
      float sum = e0 + e1 + e2;
      pred.prob_teeth[i] = e1 / sum;
      pred.prob_plaque[i] = e2 / sum;
      uint8_t arg = 0;
      float best = z0;
      if (z1 > best) {
        best = z1;
        arg = 1;
      }
      if (z2 > best) arg = 2;
      pred.label[i] = arg;
    }
    preds.push_back(std::move(pred));
  }
  return preds;
}

ByteMask threshold_mask(const Tensor& prob, float threshold) {
  ByteMask out(prob.shape());
  for (int64_t i = 0; i < prob.numel(); ++i) out[i] = prob[i] >= threshold ? 1 : 0;
  return out;
}

void export_masks(const FusedPrediction& pred, const std::string& dir, const std::string& id,
                  bool prob_maps) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::exists(dir)) throw DataError(dir + ": cannot create output directory");
  write_gray8_png((fs::path(dir) / (id + ".png")).string(), pred.label);
  if (prob_maps) {
    auto quantize = [](const Tensor& p) {
      TensorT<uint16_t> q(p.shape());
      for (int64_t i = 0; i < p.numel(); ++i) {
        float v = std::min(1.0f, std::max(0.0f, p[i]));
        q[i] = static_cast<uint16_t>(std::lround(v * 65535.0f));
      }
      return q;
    };
    write_gray16_png((fs::path(dir) / (id + "_prob_teeth.png")).string(),
                     quantize(pred.prob_teeth));
    write_gray16_png((fs::path(dir) / (id + "_prob_plaque.png")).string(),
                     quantize(pred.prob_plaque));
  }
}

}  // namespace sdseg
