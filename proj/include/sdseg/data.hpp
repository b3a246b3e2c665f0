#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdseg/rng.hpp"
#include "sdseg/tensor.hpp"

namespace sdseg {

enum class BoundaryOp { kNeighbor, kCanny };

inline const char* to_string(BoundaryOp op) {
  return op == BoundaryOp::kNeighbor ? "neighbor" : "canny";
}

// Binary masks Y_t / Y_p plus their one-pixel boundary maps. Invariants
// (checked on load): the two masks are disjoint, each boundary is a subset
// of its mask, and all four share the image dimensions.
struct SupervisionPack {
  ByteMask teeth_mask;
  ByteMask plaque_mask;
  ByteMask teeth_boundary;
  ByteMask plaque_boundary;
};

struct SampleRecord {
  std::string id;
  Tensor image;  // [3,H,W] in [0,1]
  SupervisionPack supervision;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct LoadOptions {
  BoundaryOp boundary_op = BoundaryOp::kNeighbor;
  bool use_precomputed_boundaries = true;  // <split>/boundaries/{teeth,plaque}/ when present
};

// Y_t(x)=1 iff label==1, Y_p(x)=1 iff label==2.
std::pair<ByteMask, ByteMask> separate_channels(const ByteMask& label_mask);

// Inner boundary: pixels of the mask with a zero 4-neighbor or on the border.
ByteMask extract_boundary(const ByteMask& mask);

// Canny-based alternative (OpenCV, thresholds 100/200 on the 0-255 mask),
// intersected with the mask so boundary ⊆ mask still holds.
ByteMask extract_boundary_canny(const ByteMask& mask);

ByteMask extract_boundary(const ByteMask& mask, BoundaryOp op);

SupervisionPack derive_supervision(const ByteMask& label_mask,
                                   BoundaryOp op = BoundaryOp::kNeighbor);

// Recombine binary masks into the 3-class label map (inverse of separate_channels).
ByteMask recombine_labels(const ByteMask& teeth, const ByteMask& plaque);

// Loads `<root>/<split>/images/*.png` with matching `masks/*.png`, resizing
// to input_size (bilinear for images, nearest for masks) when a sample is not
// natively that size. Records come back in lexicographic id order.
std::vector<SampleRecord> load_dataset(const std::string& root, const std::string& split_name,
                                       int input_size, const LoadOptions& options = {});

// Ids per split, without decoding pixels.
std::vector<std::string> list_split_ids(const std::string& root, const std::string& split_name);

SampleRecord augment_flip(const SampleRecord& record, bool horizontal, bool vertical);

// Per-(seed, id, epoch) flip decisions; independent of worker count and
// iteration order.
SampleRecord augment_for_step(const SampleRecord& record, uint64_t seed, int64_t epoch);

// Loads one RGB image as [3,H,W] in [0,1], bilinear-resized to input_size.
Tensor load_image(const std::string& path, int input_size);

// Splits ids 8:1:1 (train/val/test) deterministically; exposed for dataset
// preparation tooling.
DatasetSplit split_ids(std::vector<std::string> ids, uint64_t seed);

}  // namespace sdseg
