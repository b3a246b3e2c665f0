#pragma once

#include <string>

#include "sdseg/metrics.hpp"

namespace sdseg {

// Static PNG figures emitted beside the evaluation CSV.
void plot_dice_per_image(const EvalReport& report, const std::string& path);
void plot_pr_scatter(const EvalReport& report, const std::string& path);

}  // namespace sdseg
