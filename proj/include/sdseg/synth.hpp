#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdseg/data.hpp"
#include "sdseg/tensor.hpp"

namespace sdseg {

// Deterministic synthetic oral-image lookalikes: an elliptical "tooth" on a
// dark background with zero or more stained "plaque" blobs on top. Used by
// the smoke/overfit presets and the test suite when no real dataset is
// available.
struct SynthSample {
  std::string id;
  Tensor image;    // [3,H,W] in [0,1]
  ByteMask label;  // [H,W] in {0,1,2}
};

SynthSample make_synthetic_sample(int size, uint64_t seed, int index);

std::vector<SynthSample> make_synthetic_samples(int size, uint64_t seed, int count);

// Materializes train/val/test splits under root (counts 8:1:1 of `count`,
// minimum one sample per split). Images land in images/, label masks in
// masks/.
void write_synthetic_dataset(const std::string& root, int size, uint64_t seed, int count);

}  // namespace sdseg
