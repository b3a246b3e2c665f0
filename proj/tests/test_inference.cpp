#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdseg/data.hpp"
#include "sdseg/infer.hpp"
#include "sdseg/png_io.hpp"
#include "sdseg/report.hpp"
#include "sdseg/synth.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace sdseg;
using sdseg::testing::random_tensor;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sdseg-infer-" + std::to_string(RngStream(::getpid()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.input_size = 16;
  cfg.encoder_channels = {4, 6, 8, 10, 16};
  cfg.embedding_dim = 3;
  return cfg;
}

}  // namespace

TEST_CASE("branch_foreground_prob") {
  SUBCASE("equal logits give 0.5 everywhere") {
    Tensor logits({2, 3, 3});
    Tensor p = branch_foreground_prob(logits);
    for (int64_t i = 0; i < p.numel(); ++i) CHECK(p[i] == 0.5f);
  }
  SUBCASE("foreground logit +20 saturates to ~1") {
    Tensor logits({2, 2, 2});
    for (int64_t i = 0; i < 4; ++i) logits[4 + i] = 20.0f;
    Tensor p = branch_foreground_prob(logits);
    for (int64_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("matches a scalar softmax oracle on random input") {
    RngStream rng(4);
    Tensor logits = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor p = branch_foreground_prob(logits);
    for (int64_t i = 0; i < 16; ++i) {
      double z0 = logits[i], z1 = logits[16 + i];
      double expected = std::exp(z1) / (std::exp(z0) + std::exp(z1));
      CHECK(p[i] == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("fuse_branches rule") {
  Tensor pt({2, 2}), pp({2, 2});
  SUBCASE("all probabilities zero give background") {
    FusedPrediction f = fuse_branches(pt, pp);
    for (int64_t i = 0; i < 4; ++i) CHECK(f.label[i] == 0);
  }
  SUBCASE("teeth wins when larger and above threshold") {
    pt[0] = 0.9f;
    pp[0] = 0.2f;
    CHECK(fuse_branches(pt, pp).label[0] == 1);
  }
  SUBCASE("plaque wins ties at or above 0.5") {
    pt[0] = 0.7f;
    pp[0] = 0.7f;
    CHECK(fuse_branches(pt, pp).label[0] == 2);
  }
  SUBCASE("below-threshold maxima stay background") {
    pt[0] = 0.49f;
    pp[0] = 0.48f;
    CHECK(fuse_branches(pt, pp).label[0] == 0);
  }
  SUBCASE("per-branch masks derived from the fused map are subsets of the thresholded probs") {
    RngStream rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor a = random_tensor<float>({8, 8}, rng, 0.0, 1.0);
      Tensor b = random_tensor<float>({8, 8}, rng, 0.0, 1.0);
      FusedPrediction f = fuse_branches(a, b);
      for (int64_t i = 0; i < 64; ++i) {
        CHECK(f.label[i] <= 2);
        if (f.label[i] == 1) CHECK(a[i] >= 0.5f);
        if (f.label[i] == 2) CHECK(b[i] >= 0.5f);
        if (std::max(a[i], b[i]) < 0.5f) CHECK(f.label[i] == 0);
      }
    }
  }
}

TEST_CASE("predict is deterministic, in-range, and ignores constraint heads") {
  SDNetF model(tiny_config());
  model.init_weights(21);
  RngStream rng(22);
  Tensor images = random_tensor<float>({2, 3, 16, 16}, rng, 0.0, 1.0);

  std::vector<FusedPrediction> first = predict(model, images);
  std::vector<FusedPrediction> second = predict(model, images);
  REQUIRE(first.size() == 2);

  SUBCASE("deterministic for fixed weights") {
    for (size_t i = 0; i < first.size(); ++i) {
      CHECK(first[i].label == second[i].label);
      CHECK(first[i].prob_teeth == second[i].prob_teeth);
    }
  }
  SUBCASE("labels stay in {0,1,2} and respect the fusion rule") {
    for (const auto& f : first) {
      for (int64_t i = 0; i < f.label.numel(); ++i) {
        CHECK(f.label[i] <= 2);
        if (f.label[i] == 1) CHECK(f.prob_teeth[i] >= 0.5f);
        if (f.label[i] == 2) CHECK(f.prob_plaque[i] >= 0.5f);
      }
    }
  }
  SUBCASE("zeroing boundary and projection weights leaves predictions unchanged") {
    for (Param<float>* p : model.params()) {
      if (p->name.find(".boundary_head.") != std::string::npos ||
          p->name.find(".proj.") != std::string::npos) {
        p->value.fill(1234.5f);  // would corrupt outputs if ever used
      }
    }
    std::vector<FusedPrediction> after = predict(model, images);
    for (size_t i = 0; i < first.size(); ++i) {
      CHECK(first[i].label == after[i].label);
      CHECK(first[i].prob_teeth == after[i].prob_teeth);
      CHECK(first[i].prob_plaque == after[i].prob_plaque);
    }
  }
}

TEST_CASE("export_masks round trips") {
  TempDir tmp;
  RngStream rng(31);
  FusedPrediction pred;
  pred.label = ByteMask({16, 16});
  for (int64_t i = 0; i < 256; ++i) pred.label[i] = static_cast<uint8_t>(rng.next_below(3));
  pred.prob_teeth = random_tensor<float>({16, 16}, rng, 0.0, 1.0);
  pred.prob_plaque = random_tensor<float>({16, 16}, rng, 0.0, 1.0);

  SUBCASE("label mask reloads exactly and is decodable as a dataset mask") {
    export_masks(pred, tmp.path.string(), "sample", false);
    ByteMask reloaded = read_index_png((tmp.path / "sample.png").string());
    CHECK(reloaded == pred.label);
  }
  SUBCASE("probability maps round trip within 16-bit quantization") {
    export_masks(pred, tmp.path.string(), "sample", true);
    TensorT<uint16_t> q = read_gray16_png((tmp.path / "sample_prob_teeth.png").string());
    for (int64_t i = 0; i < q.numel(); ++i) {
      double back = static_cast<double>(q[i]) / 65535.0;
      CHECK(std::abs(back - pred.prob_teeth[i]) <= 0.5 / 65535.0 + 1e-9);
    }
  }
  SUBCASE("unwritable path is an error") {
    std::ofstream blocker(tmp.path / "file");
    blocker << "x";
    blocker.close();
    CHECK_THROWS_AS(export_masks(pred, (tmp.path / "file" / "sub").string(), "sample", false),
                    DataError);
  }
}

TEST_CASE("fused_from_label3 takes the argmax") {
  Tensor logits({1, 3, 1, 2});
  // pixel 0: background wins; pixel 1: plaque wins
  logits.at(0, 0, 0, 0) = 3.0f;
  logits.at(0, 1, 0, 0) = 1.0f;
  logits.at(0, 2, 0, 0) = 0.0f;
  logits.at(0, 0, 0, 1) = 0.0f;
  logits.at(0, 1, 0, 1) = 1.0f;
  logits.at(0, 2, 0, 1) = 4.0f;
  auto preds = fused_from_label3(logits);
  REQUIRE(preds.size() == 1);
  CHECK(preds[0].label[0] == 0);
  CHECK(preds[0].label[1] == 2);
  CHECK(preds[0].prob_plaque[1] > 0.9f);
}

TEST_CASE("evaluate_records produces a coherent report on synthetic data") {
  TempDir tmp;
  const std::string root = (tmp.path / "data").string();
  write_synthetic_dataset(root, 32, 5, 12);
  auto records = load_dataset(root, "train", 32);

  ModelConfig cfg = tiny_config();
  cfg.input_size = 32;
  SDNetF model(cfg);
  model.init_weights(77);

  for (EvalMode mode : {EvalMode::kFused, EvalMode::kBranch}) {
    EvalOptions options;
    options.mode = mode;
    options.batch_size = 4;
    EvalReport report = evaluate_records(model, records, options);
    CHECK(report.per_image.size() == records.size());
    CHECK(report.miou_teeth >= 0.0);
    CHECK(report.miou_teeth <= 1.0);
    CHECK(report.pr_percent >= 0.0);
    CHECK(report.pr_percent <= 1.0);
    for (const auto& m : report.per_image) {
      CHECK(m.pr_gt >= 0.0);
      CHECK(m.pr_gt <= 1.0);
    }
  }
}

TEST_CASE("clinician CSV ingestion") {
  TempDir tmp;
  const std::string path = (tmp.path / "cli.csv").string();
  {
    std::ofstream out(path);
    out << "id,pr\n";
    out << "a,0.25\n";
    out << "# comment line\n";
    out << "b,0\n";
  }
  auto m = read_clinician_csv(path);
  CHECK(m.size() == 2);
  CHECK(m.at("a") == 0.25);
  CHECK(m.at("b") == 0.0);

  SUBCASE("out-of-range PR is rejected") {
    std::ofstream out(path, std::ios::trunc);
    out << "a,1.5\n";
    out.close();
    CHECK_THROWS_AS(read_clinician_csv(path), DataError);
  }
}
