#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdseg/tensor.hpp"

namespace sdseg {

// Per-category, per-image confusion counts; the four sum to H*W.
struct ConfusionCounts {
  int64_t true_positive = 0;
  int64_t false_positive = 0;
  int64_t false_negative = 0;
  int64_t true_negative = 0;

  int64_t total() const {
    return true_positive + false_positive + false_negative + true_negative;
  }
};

enum class MiouAggregation { kImageMean, kMicro };

struct PerImageMetrics {
  std::string id;
  double iou_teeth = 0, iou_plaque = 0;
  double dice_teeth = 0, dice_plaque = 0;
  double pr_gt = 0, pr_pred = 0;
};

struct EvalReport {
  std::vector<PerImageMetrics> per_image;
  double miou_teeth = 0, miou_plaque = 0;
  double dice_teeth = 0, dice_plaque = 0;
  double pr_percent = 0;
  std::optional<double> clinician_pr_percent;
  MiouAggregation aggregation = MiouAggregation::kImageMean;
};

ConfusionCounts confusion_counts(const ByteMask& pred, const ByteMask& gt);

// |pred ∧ gt| / |pred ∨ gt|; 1.0 when both maps are empty.
double category_iou(const ByteMask& pred, const ByteMask& gt);
double iou_from_counts(const ConfusionCounts& c);

// 2|pred ∧ gt| / (|pred| + |gt|); 1.0 when both maps are empty.
double category_dice(const ByteMask& pred, const ByteMask& gt);
double dice_from_counts(const ConfusionCounts& c);

// Plaque pixels over plaque-plus-teeth pixels of a 3-class label map;
// 0 when the image has no foreground at all.
double pixel_ratio(const ByteMask& label);

// Fraction of pairs with |PR_gt - PR_other| <= threshold (inclusive).
double pr_accuracy(const std::vector<std::pair<double, double>>& pairs,
                   double threshold = 0.05);

// Aggregates the above over matched (id, predicted label) / ground-truth
// pairs. Ids must align one-to-one; clinician estimates, when given, add the
// clinician PR% column.
EvalReport build_report(const std::vector<std::pair<std::string, ByteMask>>& predictions,
                        const std::vector<std::pair<std::string, ByteMask>>& ground_truth,
                        const std::map<std::string, double>* clinician_estimates = nullptr,
                        MiouAggregation aggregation = MiouAggregation::kImageMean);

// Same report from per-category binary masks; lets branch-mode evaluation
// score each category independently (the masks may overlap).
struct CategoryMasks {
  ByteMask teeth;
  ByteMask plaque;
};

EvalReport build_report_masks(
    const std::vector<std::pair<std::string, CategoryMasks>>& predictions,
    const std::vector<std::pair<std::string, CategoryMasks>>& ground_truth,
    const std::map<std::string, double>* clinician_estimates = nullptr,
    MiouAggregation aggregation = MiouAggregation::kImageMean);

// PR from independent binary masks: |plaque| / (|teeth| + |plaque|), 0 when
// there is no foreground. Matches pixel_ratio on disjoint masks.
double pixel_ratio_masks(const ByteMask& teeth, const ByteMask& plaque);

}  // namespace sdseg
