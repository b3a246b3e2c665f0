#pragma once

#include <cstdint>
#include <string>

#include "sdseg/tensor.hpp"

namespace sdseg {

// Minimal PNG codec for supervision data. Masks are 8-bit single-channel
// PNGs whose pixel values are the class indices; a palette chunk, when
// present, is ignored and the raw indices are returned (general image
// decoding goes through OpenCV in the data module instead).
ByteMask read_index_png(const std::string& path);
void write_gray8_png(const std::string& path, const ByteMask& mask);

// 16-bit grayscale, used for probability-map export.
TensorT<uint16_t> read_gray16_png(const std::string& path);
void write_gray16_png(const std::string& path, const TensorT<uint16_t>& image);

}  // namespace sdseg
