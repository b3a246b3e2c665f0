#include "sdseg/report.hpp"

#include <fstream>
#include <sstream>

#include "sdseg/errors.hpp"
#include "sdseg/infer.hpp"

using nlohmann::json;

namespace sdseg {

EvalReport evaluate_records(SDNetF& model, const std::vector<SampleRecord>& records,
                            const EvalOptions& options,
                            const std::map<std::string, double>* clinician) {
  if (records.empty()) throw std::invalid_argument("no records to evaluate");
  const int64_t hw = records[0].image.dim(1);

  std::vector<std::pair<std::string, CategoryMasks>> preds;
  std::vector<std::pair<std::string, CategoryMasks>> gts;
  preds.reserve(records.size());
  gts.reserve(records.size());

  for (size_t begin = 0; begin < records.size(); begin += options.batch_size) {
    const size_t end = std::min(records.size(), begin + options.batch_size);
    const int64_t n = static_cast<int64_t>(end - begin);
    Tensor images({n, 3, hw, hw});
    for (int64_t b = 0; b < n; ++b) {
      const Tensor& img = records[begin + b].image;
      std::copy_n(img.data(), img.numel(), images.data() + b * img.numel());
    }
    std::vector<FusedPrediction> fused = predict(model, images);
    for (int64_t b = 0; b < n; ++b) {
      const SampleRecord& rec = records[begin + b];
      CategoryMasks pred_masks;
      if (options.mode == EvalMode::kFused) {
        const ByteMask& label = fused[b].label;
        pred_masks.teeth = ByteMask(label.shape());
        pred_masks.plaque = ByteMask(label.shape());
        for (int64_t i = 0; i < label.numel(); ++i) {
          pred_masks.teeth[i] = label[i] == 1 ? 1 : 0;
          pred_masks.plaque[i] = label[i] == 2 ? 1 : 0;
        }
      } else {
        pred_masks.teeth = threshold_mask(fused[b].prob_teeth);
        pred_masks.plaque = threshold_mask(fused[b].prob_plaque);
      }
      preds.emplace_back(rec.id, std::move(pred_masks));
      gts.emplace_back(rec.id, CategoryMasks{rec.supervision.teeth_mask,
                                             rec.supervision.plaque_mask});
    }
  }
  return build_report_masks(preds, gts, clinician, options.aggregation);
}

void write_report_json(const EvalReport& report, const std::string& path, const json& context) {
  json j;
  j["context"] = context;
  j["aggregation"] =
      report.aggregation == MiouAggregation::kImageMean ? "image_mean" : "micro";
  j["aggregate"] = {{"miou_teeth", report.miou_teeth},
                    {"miou_plaque", report.miou_plaque},
                    {"dice_teeth", report.dice_teeth},
                    {"dice_plaque", report.dice_plaque},
                    {"pr_percent", report.pr_percent}};
  if (report.clinician_pr_percent) {
    j["aggregate"]["clinician_pr_percent"] = *report.clinician_pr_percent;
  }
  j["per_image"] = json::array();
  for (const auto& m : report.per_image) {
    j["per_image"].push_back({{"id", m.id},
                              {"iou_teeth", m.iou_teeth},
                              {"iou_plaque", m.iou_plaque},
                              {"dice_teeth", m.dice_teeth},
                              {"dice_plaque", m.dice_plaque},
                              {"pr_gt", m.pr_gt},
                              {"pr_pred", m.pr_pred}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path + ": cannot write report");
  out << j.dump(2) << "\n";
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path + ": cannot write report");
  out << "id,iou_teeth,iou_plaque,dice_teeth,dice_plaque,pr_gt,pr_pred\n";
  char line[256];
  for (const auto& m : report.per_image) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.id.c_str(),
                  m.iou_teeth, m.iou_plaque, m.dice_teeth, m.dice_plaque, m.pr_gt, m.pr_pred);
    out << line;
  }
  std::snprintf(line, sizeof(line), "aggregate,%.6f,%.6f,%.6f,%.6f,,\n", report.miou_teeth,
                report.miou_plaque, report.dice_teeth, report.dice_plaque);
  out << line;
  std::snprintf(line, sizeof(line), "pr_percent,%.6f,,,,,\n", report.pr_percent);
  out << line;
  if (report.clinician_pr_percent) {
    std::snprintf(line, sizeof(line), "clinician_pr_percent,%.6f,,,,,\n",
                  *report.clinician_pr_percent);
    out << line;
  }
}

std::map<std::string, double> read_clinician_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open clinician CSV");
  std::map<std::string, double> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id, pr_str;
    if (!std::getline(ss, id, ',') || !std::getline(ss, pr_str)) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 'id,pr'");
    }
    if (line_no == 1 && id == "id") continue;  // header
    double pr;
    try {
      pr = std::stod(pr_str);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad PR value '" + pr_str + "'");
    }
    if (pr < 0.0 || pr > 1.0) {
      throw DataError(path + ":" + std::to_string(line_no) + ": PR must be in [0,1]");
    }
    out[id] = pr;
  }
  return out;
}

}  // namespace sdseg
