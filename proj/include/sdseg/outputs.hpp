#pragma once

#include "sdseg/tensor.hpp"

namespace sdseg {

// Which training components are active. SD off collapses the network to the
// single-decoder 3-class baseline; CCM/SCM gate the constraint heads and
// their loss terms.
struct Ablation {
  bool sd = true;
  bool ccm = true;
  bool scm = true;

  bool operator==(const Ablation&) const = default;
};

// Outputs of one decoder branch. boundary_logits / embeddings are empty when
// the corresponding head is disabled or skipped (inference).
template <typename T>
struct BranchOutputs {
  TensorT<T> mask_logits;      // [N,2,H,W], channel 0 background / 1 foreground
  TensorT<T> boundary_logits;  // [N,1,H,W]
  TensorT<T> embeddings;       // [N,P,D], pre-normalization
};

template <typename T>
struct ForwardResult {
  BranchOutputs<T> teeth;
  BranchOutputs<T> plaque;
  TensorT<T> label3_logits;  // [N,3,H,W], baseline path only
  bool baseline = false;
};

// Gradients w.r.t. every network output; empty tensors mean "no contribution".
template <typename T>
struct LossGrads {
  TensorT<T> teeth_mask;
  TensorT<T> plaque_mask;
  TensorT<T> teeth_boundary;
  TensorT<T> plaque_boundary;
  TensorT<T> teeth_emb;
  TensorT<T> plaque_emb;
  TensorT<T> label3;
};

// Batch of supervision targets matching a [N,3,H,W] image batch.
struct SupervisionBatch {
  ByteMask labels;           // [N,H,W] values {0,1,2}
  ByteMask teeth_mask;       // [N,H,W] binary
  ByteMask plaque_mask;      // [N,H,W] binary
  ByteMask teeth_boundary;   // [N,H,W] binary
  ByteMask plaque_boundary;  // [N,H,W] binary
};

}  // namespace sdseg
