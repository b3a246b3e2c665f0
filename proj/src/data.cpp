#include "sdseg/data.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sdseg/errors.hpp"
#include "sdseg/png_io.hpp"

namespace fs = std::filesystem;

namespace sdseg {

namespace {

constexpr uint8_t kMaxLabel = 2;

void validate_label_values(const ByteMask& mask, const std::string& source) {
  for (int64_t i = 0; i < mask.numel(); ++i) {
    if (mask[i] > kMaxLabel) {
      throw DataError(source + ": mask contains value " + std::to_string(int(mask[i])) +
                      " outside {0,1,2} at pixel " + std::to_string(i));
    }
  }
}

ByteMask resize_nearest(const ByteMask& mask, int size) {
  if (mask.dim(0) == size && mask.dim(1) == size) return mask;
  cv::Mat src(static_cast<int>(mask.dim(0)), static_cast<int>(mask.dim(1)), CV_8UC1,
              const_cast<uint8_t*>(mask.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
  ByteMask out({size, size});
  for (int y = 0; y < size; ++y) {
    std::copy_n(dst.ptr<uint8_t>(y), size, out.data() + static_cast<int64_t>(y) * size);
  }
  return out;
}

void check_binary(const ByteMask& mask, const std::string& source) {
  for (int64_t i = 0; i < mask.numel(); ++i) {
    if (mask[i] > 1) {
      throw DataError(source + ": expected binary mask, found value " +
                      std::to_string(int(mask[i])));
    }
  }
}

void check_supervision_invariants(const SupervisionPack& sup, const std::string& id) {
  const auto& t = sup.teeth_mask;
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (t[i] && sup.plaque_mask[i]) {
      throw DataError(id + ": teeth and plaque masks overlap at pixel " + std::to_string(i));
    }
    if (sup.teeth_boundary[i] && !t[i]) {
      throw DataError(id + ": teeth boundary escapes the teeth mask at pixel " +
                      std::to_string(i));
    }
    if (sup.plaque_boundary[i] && !sup.plaque_mask[i]) {
      throw DataError(id + ": plaque boundary escapes the plaque mask at pixel " +
                      std::to_string(i));
    }
  }
}

Tensor flip_image(const Tensor& img, bool horizontal, bool vertical) {
  Tensor out(img.shape());
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t y = 0; y < h; ++y) {
      int64_t sy = vertical ? h - 1 - y : y;
      for (int64_t x = 0; x < w; ++x) {
        int64_t sx = horizontal ? w - 1 - x : x;
        out.at(ch, y, x) = img.at(ch, sy, sx);
      }
    }
  }
  return out;
}

ByteMask flip_mask(const ByteMask& mask, bool horizontal, bool vertical) {
  ByteMask out(mask.shape());
  const int64_t h = mask.dim(0), w = mask.dim(1);
  for (int64_t y = 0; y < h; ++y) {
    int64_t sy = vertical ? h - 1 - y : y;
    for (int64_t x = 0; x < w; ++x) {
      int64_t sx = horizontal ? w - 1 - x : x;
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace

std::pair<ByteMask, ByteMask> separate_channels(const ByteMask& label_mask) {
  ByteMask teeth(label_mask.shape());
  ByteMask plaque(label_mask.shape());
  for (int64_t i = 0; i < label_mask.numel(); ++i) {
    teeth[i] = label_mask[i] == 1 ? 1 : 0;
    plaque[i] = label_mask[i] == 2 ? 1 : 0;
  }
  return {std::move(teeth), std::move(plaque)};
}

ByteMask recombine_labels(const ByteMask& teeth, const ByteMask& plaque) {
  ByteMask out(teeth.shape());
  for (int64_t i = 0; i < teeth.numel(); ++i) {
    out[i] = plaque[i] ? 2 : (teeth[i] ? 1 : 0);
  }
  return out;
}

ByteMask extract_boundary(const ByteMask& mask) {
  const int64_t h = mask.dim(0), w = mask.dim(1);
  ByteMask out(mask.shape());
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                  !mask.at(y - 1, x) || !mask.at(y + 1, x) ||
                  !mask.at(y, x - 1) || !mask.at(y, x + 1);
      out.at(y, x) = edge ? 1 : 0;
    }
  }
  return out;
}

ByteMask extract_boundary_canny(const ByteMask& mask) {
  const int h = static_cast<int>(mask.dim(0));
  const int w = static_cast<int>(mask.dim(1));
  cv::Mat src(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) src.at<uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  }
  cv::Mat edges;
  cv::Canny(src, edges, 100.0, 200.0);
  ByteMask out(mask.shape());
  // Canny can localize on either side of the step; keep only in-mask pixels
  // so boundary ⊆ mask is preserved.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(y, x) = (edges.at<uint8_t>(y, x) && mask.at(y, x)) ? 1 : 0;
    }
  }
  return out;
}

ByteMask extract_boundary(const ByteMask& mask, BoundaryOp op) {
  return op == BoundaryOp::kNeighbor ? extract_boundary(mask) : extract_boundary_canny(mask);
}

SupervisionPack derive_supervision(const ByteMask& label_mask, BoundaryOp op) {
  auto [teeth, plaque] = separate_channels(label_mask);
  SupervisionPack sup;
  sup.teeth_boundary = extract_boundary(teeth, op);
  sup.plaque_boundary = extract_boundary(plaque, op);
  sup.teeth_mask = std::move(teeth);
  sup.plaque_mask = std::move(plaque);
  return sup;
}

Tensor load_image(const std::string& path, int input_size) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError(path + ": cannot decode image");
  if (bgr.rows != input_size || bgr.cols != input_size) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(input_size, input_size), 0, 0, cv::INTER_LINEAR);
    bgr = resized;
  }
  Tensor img({3, input_size, input_size});
  for (int y = 0; y < input_size; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < input_size; ++x) {
      img.at(0, y, x) = static_cast<float>(row[x][2]) / 255.0f;  // R
      img.at(1, y, x) = static_cast<float>(row[x][1]) / 255.0f;  // G
      img.at(2, y, x) = static_cast<float>(row[x][0]) / 255.0f;  // B
    }
  }
  return img;
}

std::vector<std::string> list_split_ids(const std::string& root, const std::string& split_name) {
  fs::path images_dir = fs::path(root) / split_name / "images";
  if (!fs::exists(images_dir)) {
    throw DataError("missing split directory: " + images_dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<SampleRecord> load_dataset(const std::string& root, const std::string& split_name,
                                       int input_size, const LoadOptions& options) {
  if (input_size <= 0) throw std::invalid_argument("input_size must be positive");
  const fs::path split_dir = fs::path(root) / split_name;
  std::vector<std::string> ids = list_split_ids(root, split_name);

  std::vector<SampleRecord> records;
  records.reserve(ids.size());
  for (const std::string& id : ids) {
    const fs::path image_path = split_dir / "images" / (id + ".png");
    const fs::path mask_path = split_dir / "masks" / (id + ".png");
    if (!fs::exists(mask_path)) {
      throw DataError("missing mask for image stem '" + id + "' (expected " +
                      mask_path.string() + ")");
    }

    cv::Mat probe = cv::imread(image_path.string(), cv::IMREAD_COLOR);
    if (probe.empty()) throw DataError(image_path.string() + ": cannot decode image");
    ByteMask raw_mask = read_index_png(mask_path.string());
    validate_label_values(raw_mask, mask_path.string());
    if (probe.rows != raw_mask.dim(0) || probe.cols != raw_mask.dim(1)) {
      throw DataError(id + ": image is " + std::to_string(probe.cols) + "x" +
                      std::to_string(probe.rows) + " but mask is " +
                      std::to_string(raw_mask.dim(1)) + "x" + std::to_string(raw_mask.dim(0)));
    }

    SampleRecord rec;
    rec.id = id;
    rec.image = load_image(image_path.string(), input_size);
    ByteMask label = resize_nearest(raw_mask, input_size);

    bool have_precomputed = false;
    if (options.use_precomputed_boundaries) {
      const fs::path tb = split_dir / "boundaries" / "teeth" / (id + ".png");
      const fs::path pb = split_dir / "boundaries" / "plaque" / (id + ".png");
      if (fs::exists(tb) && fs::exists(pb)) {
        auto [teeth, plaque] = separate_channels(label);
        ByteMask teeth_b = resize_nearest(read_index_png(tb.string()), input_size);
        ByteMask plaque_b = resize_nearest(read_index_png(pb.string()), input_size);
        check_binary(teeth_b, tb.string());
        check_binary(plaque_b, pb.string());
        rec.supervision = SupervisionPack{std::move(teeth), std::move(plaque),
                                          std::move(teeth_b), std::move(plaque_b)};
        have_precomputed = true;
      }
    }
    if (!have_precomputed) {
      rec.supervision = derive_supervision(label, options.boundary_op);
    }
    check_supervision_invariants(rec.supervision, id);
    records.push_back(std::move(rec));
  }
  return records;
}

SampleRecord augment_flip(const SampleRecord& record, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return record;
  SampleRecord out;
  out.id = record.id;
  out.image = flip_image(record.image, horizontal, vertical);
  out.supervision.teeth_mask = flip_mask(record.supervision.teeth_mask, horizontal, vertical);
  out.supervision.plaque_mask = flip_mask(record.supervision.plaque_mask, horizontal, vertical);
  out.supervision.teeth_boundary =
      flip_mask(record.supervision.teeth_boundary, horizontal, vertical);
  out.supervision.plaque_boundary =
      flip_mask(record.supervision.plaque_boundary, horizontal, vertical);
  return out;
}

SampleRecord augment_for_step(const SampleRecord& record, uint64_t seed, int64_t epoch) {
  RngStream rng(seed, hash_str(record.id), static_cast<uint64_t>(epoch));
  bool horizontal = rng.next_double() < 0.5;
  bool vertical = rng.next_double() < 0.5;
  return augment_flip(record, horizontal, vertical);
}

DatasetSplit split_ids(std::vector<std::string> ids, uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  RngStream rng(seed, hash_str("dataset-split"));
  for (size_t i = ids.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(ids[i - 1], ids[j]);
  }
  DatasetSplit split;
  const size_t n = ids.size();
  const size_t n_train = n * 8 / 10;
  const size_t n_val = n / 10;
  for (size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      split.train.push_back(ids[i]);
    } else if (i < n_train + n_val) {
      split.val.push_back(ids[i]);
    } else {
      split.test.push_back(ids[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace sdseg
