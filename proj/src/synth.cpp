#include "sdseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <opencv2/imgcodecs.hpp>

#include "sdseg/errors.hpp"
#include "sdseg/png_io.hpp"
#include "sdseg/rng.hpp"

namespace fs = std::filesystem;

namespace sdseg {

namespace {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    double dx = (x - cx) / rx;
    double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

}  // namespace

SynthSample make_synthetic_sample(int size, uint64_t seed, int index) {
  RngStream rng(seed, hash_str("synthetic-sample"), static_cast<uint64_t>(index));

  const double s = static_cast<double>(size);
  Ellipse tooth{s * rng.next_uniform(0.40, 0.60), s * rng.next_uniform(0.40, 0.60),
                s * rng.next_uniform(0.22, 0.34), s * rng.next_uniform(0.26, 0.38)};

  const int n_blobs = static_cast<int>(rng.next_below(4));  // 0..3 plaque blobs
  std::vector<Ellipse> blobs;
  for (int b = 0; b < n_blobs; ++b) {
    double ang = rng.next_uniform(0.0, 6.2831853);
    double rad = rng.next_uniform(0.0, 0.7);
    blobs.push_back(Ellipse{tooth.cx + std::cos(ang) * rad * tooth.rx,
                            tooth.cy + std::sin(ang) * rad * tooth.ry,
                            s * rng.next_uniform(0.05, 0.13),
                            s * rng.next_uniform(0.05, 0.13)});
  }

  SynthSample sample;
  sample.id = "synth-" + std::string(index < 10 ? "000" : index < 100 ? "00" : index < 1000 ? "0" : "") +
              std::to_string(index);
  sample.image = Tensor({3, size, size});
  sample.label = ByteMask({size, size});

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double noise = rng.next_uniform(-0.02, 0.02);
      uint8_t cls = 0;
      double r = 0.10, g = 0.12, b = 0.16;  // dark oral background
      if (tooth.contains(x, y)) {
        cls = 1;
        r = 0.82;
        g = 0.80;
        b = 0.72;  // enamel
        for (const auto& blob : blobs) {
          if (blob.contains(x, y)) {
            cls = 2;
            r = 0.78;
            g = 0.15;
            b = 0.35;  // stained plaque
            break;
          }
        }
      }
      sample.label.at(y, x) = cls;
      sample.image.at(0, y, x) = static_cast<float>(std::clamp(r + noise, 0.0, 1.0));
      sample.image.at(1, y, x) = static_cast<float>(std::clamp(g + noise, 0.0, 1.0));
      sample.image.at(2, y, x) = static_cast<float>(std::clamp(b + noise, 0.0, 1.0));
    }
  }
  return sample;
}

std::vector<SynthSample> make_synthetic_samples(int size, uint64_t seed, int count) {
  std::vector<SynthSample> samples;
  samples.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) samples.push_back(make_synthetic_sample(size, seed, i));
  return samples;
}

void write_synthetic_dataset(const std::string& root, int size, uint64_t seed, int count) {
  if (count < 3) throw UsageError("synthetic dataset needs at least 3 samples");
  int n_val = std::max(1, count / 10);
  int n_test = std::max(1, count / 10);
  int n_train = count - n_val - n_test;

  auto write_split = [&](const std::string& split, int begin, int end) {
    fs::path dir = fs::path(root) / split;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    for (int i = begin; i < end; ++i) {
      SynthSample sample = make_synthetic_sample(size, seed, i);
      cv::Mat bgr(size, size, CV_8UC3);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          auto to_byte = [](float v) {
            return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
          };
          bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(to_byte(sample.image.at(2, y, x)),
                                              to_byte(sample.image.at(1, y, x)),
                                              to_byte(sample.image.at(0, y, x)));
        }
      }
      cv::imwrite((dir / "images" / (sample.id + ".png")).string(), bgr);
      write_gray8_png((dir / "masks" / (sample.id + ".png")).string(), sample.label);
    }
  };
  write_split("train", 0, n_train);
  write_split("val", n_train, n_train + n_val);
  write_split("test", n_train + n_val, count);
}

}  // namespace sdseg
