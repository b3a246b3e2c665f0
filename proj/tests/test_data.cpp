#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sdseg/data.hpp"
#include "sdseg/errors.hpp"
#include "sdseg/png_io.hpp"
#include "sdseg/synth.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace sdseg;
using sdseg::testing::random_binary_mask;
using sdseg::testing::random_label_mask;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sdseg-test-" + std::to_string(RngStream(::getpid()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Brute-force boundary oracle: enumerate 4-neighborhoods.
ByteMask boundary_oracle(const ByteMask& mask) {
  const int64_t h = mask.dim(0), w = mask.dim(1);
  ByteMask out(mask.shape());
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      int zero_or_border = 0;
      const int64_t dy[] = {-1, 1, 0, 0};
      const int64_t dx[] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        int64_t ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w || !mask.at(ny, nx)) ++zero_or_border;
      }
      out.at(y, x) = zero_or_border > 0;
    }
  }
  return out;
}

ByteMask flip_mask_oracle(const ByteMask& m, bool hor, bool ver) {
  ByteMask out(m.shape());
  const int64_t h = m.dim(0), w = m.dim(1);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      out.at(y, x) = m.at(ver ? h - 1 - y : y, hor ? w - 1 - x : x);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("separate_channels definition") {
  SUBCASE("all-zero mask gives empty channels") {
    ByteMask label({4, 4});
    auto [teeth, plaque] = separate_channels(label);
    for (int64_t i = 0; i < 16; ++i) {
      CHECK(teeth[i] == 0);
      CHECK(plaque[i] == 0);
    }
  }
  SUBCASE("2x2 example") {
    ByteMask label({2, 2});
    label[0] = 1;
    label[1] = 2;
    label[2] = 0;
    label[3] = 1;
    auto [teeth, plaque] = separate_channels(label);
    CHECK(teeth[0] == 1);
    CHECK(teeth[1] == 0);
    CHECK(teeth[2] == 0);
    CHECK(teeth[3] == 1);
    CHECK(plaque[0] == 0);
    CHECK(plaque[1] == 1);
    CHECK(plaque[2] == 0);
    CHECK(plaque[3] == 0);
  }
  SUBCASE("counts partition the pixel grid") {
    RngStream rng(5);
    ByteMask label = random_label_mask({16, 16}, rng);
    auto [teeth, plaque] = separate_channels(label);
    int64_t nt = 0, np = 0, nb = 0;
    for (int64_t i = 0; i < 256; ++i) {
      nt += teeth[i];
      np += plaque[i];
      nb += (label[i] == 0);
    }
    CHECK(nt + np + nb == 256);
  }
  SUBCASE("recombination reconstructs the label mask exactly") {
    RngStream rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      ByteMask label = random_label_mask({16, 16}, rng);
      auto [teeth, plaque] = separate_channels(label);
      CHECK(recombine_labels(teeth, plaque) == label);
    }
  }
}

TEST_CASE("extract_boundary definition") {
  SUBCASE("empty mask gives empty boundary") {
    ByteMask m({5, 5});
    ByteMask b = extract_boundary(m);
    for (int64_t i = 0; i < 25; ++i) CHECK(b[i] == 0);
  }
  SUBCASE("single set pixel is its own boundary") {
    ByteMask m({5, 5});
    m.at(2, 2) = 1;
    CHECK(extract_boundary(m) == m);
  }
  SUBCASE("3x3 filled square in 5x5: 8 perimeter pixels, center unset") {
    ByteMask m({5, 5});
    for (int64_t y = 1; y <= 3; ++y) {
      for (int64_t x = 1; x <= 3; ++x) m.at(y, x) = 1;
    }
    ByteMask b = extract_boundary(m);
    int64_t set = 0;
    for (int64_t i = 0; i < 25; ++i) set += b[i];
    CHECK(set == 8);
    CHECK(b.at(2, 2) == 0);
    CHECK(b == boundary_oracle(m));
  }
  SUBCASE("mask touching the border counts the border as outside") {
    ByteMask m = ByteMask::full({4, 4}, 1);
    ByteMask b = extract_boundary(m);
    CHECK(b.at(0, 0) == 1);
    CHECK(b.at(1, 1) == 0);
    CHECK(b == boundary_oracle(m));
  }
}

TEST_CASE("boundary properties on random masks") {
  RngStream rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    ByteMask m = random_binary_mask({16, 16}, rng, 0.4);
    ByteMask b = extract_boundary(m);
    CHECK(b == boundary_oracle(m));
    const int64_t h = 16, w = 16;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        if (!b.at(y, x)) continue;
        CHECK(m.at(y, x) == 1);  // boundary subset of mask
        bool touches = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                       !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) ||
                       !m.at(y, x + 1);
        CHECK(touches);
      }
    }
  }
}

TEST_CASE("flip commutes with boundary extraction") {
  RngStream rng(88);
  for (int trial = 0; trial < 100; ++trial) {
    ByteMask m = random_binary_mask({16, 16}, rng, 0.4);
    for (auto [hor, ver] : {std::pair{true, false}, {false, true}, {true, true}}) {
      ByteMask flipped_then_boundary = extract_boundary(flip_mask_oracle(m, hor, ver));
      ByteMask boundary_then_flipped = flip_mask_oracle(extract_boundary(m), hor, ver);
      CHECK(flipped_then_boundary == boundary_then_flipped);
    }
  }
}

TEST_CASE("canny boundary stays inside the mask") {
  RngStream rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    ByteMask m = random_binary_mask({32, 32}, rng, 0.45);
    ByteMask b = extract_boundary_canny(m);
    for (int64_t i = 0; i < b.numel(); ++i) {
      if (b[i]) CHECK(m[i] == 1);
    }
  }
}

TEST_CASE("augment_flip involution and identity") {
  SynthSample s = make_synthetic_sample(32, 42, 0);
  SampleRecord rec;
  rec.id = s.id;
  rec.image = s.image;
  rec.supervision = derive_supervision(s.label);

  SUBCASE("no-flip returns the record unchanged") {
    SampleRecord same = augment_flip(rec, false, false);
    CHECK(same.image == rec.image);
    CHECK(same.supervision.teeth_mask == rec.supervision.teeth_mask);
  }
  SUBCASE("flipping twice returns the original bit-exactly") {
    for (auto [hor, ver] : {std::pair{true, false}, {false, true}, {true, true}}) {
      SampleRecord twice = augment_flip(augment_flip(rec, hor, ver), hor, ver);
      CHECK(twice.image == rec.image);
      CHECK(twice.supervision.teeth_mask == rec.supervision.teeth_mask);
      CHECK(twice.supervision.plaque_mask == rec.supervision.plaque_mask);
      CHECK(twice.supervision.teeth_boundary == rec.supervision.teeth_boundary);
      CHECK(twice.supervision.plaque_boundary == rec.supervision.plaque_boundary);
    }
  }
  SUBCASE("all four supervision maps flip identically with the image") {
    SampleRecord flipped = augment_flip(rec, true, true);
    CHECK(flipped.supervision.teeth_mask ==
          flip_mask_oracle(rec.supervision.teeth_mask, true, true));
    CHECK(flipped.supervision.plaque_boundary ==
          flip_mask_oracle(rec.supervision.plaque_boundary, true, true));
  }
  SUBCASE("augment_for_step depends only on (seed, id, epoch)") {
    SampleRecord a = augment_for_step(rec, 5, 3);
    SampleRecord b = augment_for_step(rec, 5, 3);
    CHECK(a.image == b.image);
  }
}

TEST_CASE("index PNG round trip preserves raw values") {
  TempDir tmp;
  RngStream rng(31);
  ByteMask mask = random_label_mask({19, 23}, rng);
  const std::string path = (tmp.path / "m.png").string();
  write_gray8_png(path, mask);
  CHECK(read_index_png(path) == mask);
}

TEST_CASE("load_dataset") {
  TempDir tmp;
  const std::string root = tmp.path.string();
  write_synthetic_dataset(root, 32, 7, 12);  // 10 train, 1 val, 1 test

  SUBCASE("loads matched pairs in lexicographic id order") {
    auto records = load_dataset(root, "train", 32);
    CHECK(records.size() == 10);
    for (size_t i = 1; i < records.size(); ++i) {
      CHECK(records[i - 1].id < records[i].id);
    }
    for (const auto& rec : records) {
      CHECK(rec.image.shape() == std::vector<int64_t>{3, 32, 32});
      // supervision invariants: disjoint masks, boundaries inside masks
      for (int64_t i = 0; i < 32 * 32; ++i) {
        CHECK(!(rec.supervision.teeth_mask[i] && rec.supervision.plaque_mask[i]));
        if (rec.supervision.teeth_boundary[i]) CHECK(rec.supervision.teeth_mask[i]);
        if (rec.supervision.plaque_boundary[i]) CHECK(rec.supervision.plaque_mask[i]);
      }
    }
  }
  SUBCASE("empty split directory gives an empty sequence") {
    fs::create_directories(tmp.path / "empty" / "images");
    fs::create_directories(tmp.path / "empty" / "masks");
    CHECK(load_dataset(root, "empty", 32).empty());
  }
  SUBCASE("missing mask names the stem") {
    fs::remove(tmp.path / "train" / "masks" / "synth-0003.png");
    CHECK_THROWS_WITH_AS(load_dataset(root, "train", 32), doctest::Contains("synth-0003"),
                         DataError);
  }
  SUBCASE("mask value outside {0,1,2} names the file") {
    ByteMask bad({32, 32});
    bad[5] = 3;
    write_gray8_png((tmp.path / "train" / "masks" / "synth-0001.png").string(), bad);
    CHECK_THROWS_WITH_AS(load_dataset(root, "train", 32), doctest::Contains("synth-0001"),
                         DataError);
  }
  SUBCASE("image/mask size mismatch is a hard error") {
    ByteMask small({16, 16});
    write_gray8_png((tmp.path / "train" / "masks" / "synth-0002.png").string(), small);
    CHECK_THROWS_WITH_AS(load_dataset(root, "train", 32), doctest::Contains("synth-0002"),
                         DataError);
  }
  SUBCASE("resizing to a different input size keeps labels valid") {
    auto records = load_dataset(root, "train", 16);
    CHECK(records[0].image.shape() == std::vector<int64_t>{3, 16, 16});
    CHECK(records[0].supervision.teeth_mask.dim(0) == 16);
  }
  SUBCASE("precomputed boundaries are picked up") {
    // write boundary trees for the val split, then check byte-equal behavior
    auto records = load_dataset(root, "val", 32);
    const auto& rec = records[0];
    fs::create_directories(tmp.path / "val" / "boundaries" / "teeth");
    fs::create_directories(tmp.path / "val" / "boundaries" / "plaque");
    write_gray8_png((tmp.path / "val" / "boundaries" / "teeth" / (rec.id + ".png")).string(),
                    rec.supervision.teeth_boundary);
    write_gray8_png((tmp.path / "val" / "boundaries" / "plaque" / (rec.id + ".png")).string(),
                    rec.supervision.plaque_boundary);
    auto reloaded = load_dataset(root, "val", 32);
    CHECK(reloaded[0].supervision.teeth_boundary == rec.supervision.teeth_boundary);
    CHECK(reloaded[0].supervision.plaque_boundary == rec.supervision.plaque_boundary);
  }
  SUBCASE("missing split directory is an error") {
    CHECK_THROWS_AS(load_dataset(root, "nope", 32), DataError);
  }
}

TEST_CASE("split_ids partitions 8:1:1") {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("img-" + std::to_string(1000 + i));
  DatasetSplit split = split_ids(ids, 3);
  CHECK(split.train.size() == 80);
  CHECK(split.val.size() == 10);
  CHECK(split.test.size() == 10);
  std::set<std::string> all;
  all.insert(split.train.begin(), split.train.end());
  all.insert(split.val.begin(), split.val.end());
  all.insert(split.test.begin(), split.test.end());
  CHECK(all.size() == 100);  // pairwise disjoint, union is everything
}

TEST_CASE("synthetic samples are deterministic and well-formed") {
  SynthSample a = make_synthetic_sample(64, 11, 4);
  SynthSample b = make_synthetic_sample(64, 11, 4);
  CHECK(a.image == b.image);
  CHECK(a.label == b.label);
  bool has_teeth = false;
  for (int64_t i = 0; i < a.label.numel(); ++i) {
    CHECK(a.label[i] <= 2);
    has_teeth |= a.label[i] == 1;
  }
  CHECK(has_teeth);
  for (int64_t i = 0; i < a.image.numel(); ++i) {
    CHECK(a.image[i] >= 0.0f);
    CHECK(a.image[i] <= 1.0f);
  }
}
