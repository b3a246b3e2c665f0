#include "sdseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdseg/errors.hpp"

namespace sdseg {

namespace {

void check_same_shape(const ByteMask& a, const ByteMask& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("mask shapes differ: " + a.shape_str() + " vs " +
                                b.shape_str());
  }
}

ByteMask category_mask(const ByteMask& label, uint8_t category) {
  ByteMask out(label.shape());
  for (int64_t i = 0; i < label.numel(); ++i) out[i] = label[i] == category ? 1 : 0;
  return out;
}

}  // namespace

ConfusionCounts confusion_counts(const ByteMask& pred, const ByteMask& gt) {
  check_same_shape(pred, gt);
  ConfusionCounts c;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    bool p = pred[i] != 0;
    bool g = gt[i] != 0;
    if (p && g) {
      ++c.true_positive;
    } else if (p && !g) {
      ++c.false_positive;
    } else if (!p && g) {
      ++c.false_negative;
    } else {
      ++c.true_negative;
    }
  }
  return c;
}

double iou_from_counts(const ConfusionCounts& c) {
  int64_t uni = c.true_positive + c.false_positive + c.false_negative;
  if (uni == 0) return 1.0;  // both maps empty: vacuous agreement
  return static_cast<double>(c.true_positive) / static_cast<double>(uni);
}

double dice_from_counts(const ConfusionCounts& c) {
  int64_t den = 2 * c.true_positive + c.false_positive + c.false_negative;
  if (den == 0) return 1.0;
  return 2.0 * static_cast<double>(c.true_positive) / static_cast<double>(den);
}

double category_iou(const ByteMask& pred, const ByteMask& gt) {
  return iou_from_counts(confusion_counts(pred, gt));
}

double category_dice(const ByteMask& pred, const ByteMask& gt) {
  return dice_from_counts(confusion_counts(pred, gt));
}

double pixel_ratio(const ByteMask& label) {
  int64_t teeth = 0, plaque = 0;
  for (int64_t i = 0; i < label.numel(); ++i) {
    if (label[i] == 1) ++teeth;
    else if (label[i] == 2) ++plaque;
  }
  int64_t fg = teeth + plaque;
  if (fg == 0) return 0.0;
  return static_cast<double>(plaque) / static_cast<double>(fg);
}

double pr_accuracy(const std::vector<std::pair<double, double>>& pairs, double threshold) {
  if (pairs.empty()) throw std::invalid_argument("pr_accuracy requires at least one pair");
  int64_t ok = 0;
  for (const auto& [pr_gt, pr_other] : pairs) {
    if (std::abs(pr_gt - pr_other) <= threshold) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

double pixel_ratio_masks(const ByteMask& teeth, const ByteMask& plaque) {
  int64_t nt = 0, np = 0;
  for (int64_t i = 0; i < teeth.numel(); ++i) nt += teeth[i] ? 1 : 0;
  for (int64_t i = 0; i < plaque.numel(); ++i) np += plaque[i] ? 1 : 0;
  if (nt + np == 0) return 0.0;
  return static_cast<double>(np) / static_cast<double>(nt + np);
}

EvalReport build_report_masks(
    const std::vector<std::pair<std::string, CategoryMasks>>& predictions,
    const std::vector<std::pair<std::string, CategoryMasks>>& ground_truth,
    const std::map<std::string, double>* clinician_estimates,
    MiouAggregation aggregation) {
  if (predictions.empty()) throw std::invalid_argument("empty prediction set");
  if (predictions.size() != ground_truth.size()) {
    throw DataError("prediction/ground-truth count mismatch: " +
                    std::to_string(predictions.size()) + " vs " +
                    std::to_string(ground_truth.size()));
  }

  std::map<std::string, const CategoryMasks*> gt_by_id;
  for (const auto& [id, masks] : ground_truth) gt_by_id[id] = &masks;
  std::string unmatched;
  for (const auto& [id, masks] : predictions) {
    if (!gt_by_id.count(id)) unmatched += (unmatched.empty() ? "" : ", ") + id;
  }
  if (!unmatched.empty()) {
    throw DataError("predictions without ground truth: " + unmatched);
  }

  EvalReport report;
  report.aggregation = aggregation;
  ConfusionCounts micro_teeth, micro_plaque;
  std::vector<std::pair<double, double>> pr_pairs;
  std::vector<std::pair<double, double>> pr_cli_pairs;

  for (const auto& [id, pred] : predictions) {
    const CategoryMasks& gt = *gt_by_id.at(id);
    check_same_shape(pred.teeth, gt.teeth);
    check_same_shape(pred.plaque, gt.plaque);

    ConfusionCounts ct = confusion_counts(pred.teeth, gt.teeth);
    ConfusionCounts cp = confusion_counts(pred.plaque, gt.plaque);
    micro_teeth.true_positive += ct.true_positive;
    micro_teeth.false_positive += ct.false_positive;
    micro_teeth.false_negative += ct.false_negative;
    micro_teeth.true_negative += ct.true_negative;
    micro_plaque.true_positive += cp.true_positive;
    micro_plaque.false_positive += cp.false_positive;
    micro_plaque.false_negative += cp.false_negative;
    micro_plaque.true_negative += cp.true_negative;

    PerImageMetrics m;
    m.id = id;
    m.iou_teeth = iou_from_counts(ct);
    m.iou_plaque = iou_from_counts(cp);
    m.dice_teeth = dice_from_counts(ct);
    m.dice_plaque = dice_from_counts(cp);
    m.pr_gt = pixel_ratio_masks(gt.teeth, gt.plaque);
    m.pr_pred = pixel_ratio_masks(pred.teeth, pred.plaque);
    report.per_image.push_back(m);

    pr_pairs.emplace_back(m.pr_gt, m.pr_pred);
    if (clinician_estimates) {
      auto it = clinician_estimates->find(id);
      if (it != clinician_estimates->end()) {
        pr_cli_pairs.emplace_back(m.pr_gt, it->second);
      }
    }
  }

  if (aggregation == MiouAggregation::kImageMean) {
    double st = 0, sp = 0, dt = 0, dp = 0;
    for (const auto& m : report.per_image) {
      st += m.iou_teeth;
      sp += m.iou_plaque;
      dt += m.dice_teeth;
      dp += m.dice_plaque;
    }
    double n = static_cast<double>(report.per_image.size());
    report.miou_teeth = st / n;
    report.miou_plaque = sp / n;
    report.dice_teeth = dt / n;
    report.dice_plaque = dp / n;
  } else {
    report.miou_teeth = iou_from_counts(micro_teeth);
    report.miou_plaque = iou_from_counts(micro_plaque);
    report.dice_teeth = dice_from_counts(micro_teeth);
    report.dice_plaque = dice_from_counts(micro_plaque);
  }
  report.pr_percent = pr_accuracy(pr_pairs);
  if (!pr_cli_pairs.empty()) {
    report.clinician_pr_percent = pr_accuracy(pr_cli_pairs);
  }
  return report;
}

EvalReport build_report(const std::vector<std::pair<std::string, ByteMask>>& predictions,
                        const std::vector<std::pair<std::string, ByteMask>>& ground_truth,
                        const std::map<std::string, double>* clinician_estimates,
                        MiouAggregation aggregation) {
  auto to_masks = [](const std::vector<std::pair<std::string, ByteMask>>& labels) {
    std::vector<std::pair<std::string, CategoryMasks>> out;
    out.reserve(labels.size());
    for (const auto& [id, label] : labels) {
      out.emplace_back(id, CategoryMasks{category_mask(label, 1), category_mask(label, 2)});
    }
    return out;
  };
  return build_report_masks(to_masks(predictions), to_masks(ground_truth),
                            clinician_estimates, aggregation);
}

}  // namespace sdseg

