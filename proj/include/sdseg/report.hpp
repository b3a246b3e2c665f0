#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdseg/data.hpp"
#include "sdseg/metrics.hpp"
#include "sdseg/model.hpp"

namespace sdseg {

enum class EvalMode { kFused, kBranch };

struct EvalOptions {
  EvalMode mode = EvalMode::kFused;
  MiouAggregation aggregation = MiouAggregation::kImageMean;
  int batch_size = 16;
};

// Runs inference over the records and scores against their supervision.
// Fused mode evaluates the 3-class fused label; branch mode thresholds each
// branch's foreground probability at 0.5 independently.
EvalReport evaluate_records(SDNetF& model, const std::vector<SampleRecord>& records,
                            const EvalOptions& options = {},
                            const std::map<std::string, double>* clinician = nullptr);

void write_report_json(const EvalReport& report, const std::string& path,
                       const nlohmann::json& context = nlohmann::json::object());
void write_report_csv(const EvalReport& report, const std::string& path);

// CSV `id,pr` with PR in [0,1]; `#` lines and an `id,pr` header are skipped.
std::map<std::string, double> read_clinician_csv(const std::string& path);

}  // namespace sdseg
