#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shiftbench/analyzer.hpp"

namespace shiftbench {

// Grid of panels: one row per scenario, one column per experiment. Each
// panel plots replica means per shift set with the inverse-logit of the
// fitted line; panels without data are crossed out as unavailable.
std::string render_report_svg(const std::vector<RunRecord>& records, const std::vector<RegressionFit>& fits,
                              const std::string& metric = "auc");

void render_report(const std::filesystem::path& results_csv, const std::filesystem::path& coefficients_csv,
                   const std::filesystem::path& out_path, const std::string& metric = "auc");

}  // namespace shiftbench
