#pragma once

#include <string>
#include <vector>

#include "sdseg/model.hpp"
#include "sdseg/tensor.hpp"

namespace sdseg {

// Single 3-class prediction assembled from the two branch probabilities.
struct FusedPrediction {
  ByteMask label;      // [H,W] in {0,1,2}
  Tensor prob_teeth;   // [H,W] in [0,1]
  Tensor prob_plaque;  // [H,W] in [0,1]
};

// Softmax over the two mask channels; returns the foreground channel.
// Accepts [2,H,W] or [N,2,H,W] and returns [H,W] / [N,H,W].
Tensor branch_foreground_prob(const Tensor& mask_logits);

// Per-pixel fusion: background when both probabilities are below 0.5,
// otherwise the larger one; exact ties at or above 0.5 go to plaque.
FusedPrediction fuse_branches(const Tensor& prob_teeth, const Tensor& prob_plaque);

// Full inference path; boundary and projection heads are never evaluated.
std::vector<FusedPrediction> predict(SDNetF& model, const Tensor& images);

// Baseline (3-class head) counterpart: argmax label, softmax channels as probs.
std::vector<FusedPrediction> fused_from_label3(const Tensor& label3_logits);

// Writes `<id>.png` (3-class label mask) and optionally
// `<id>_prob_{teeth,plaque}.png` (16-bit) into dir.
void export_masks(const FusedPrediction& pred, const std::string& dir, const std::string& id,
                  bool prob_maps = false);

ByteMask threshold_mask(const Tensor& prob, float threshold = 0.5f);

}  // namespace sdseg
