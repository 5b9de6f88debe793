#pragma once

#include "vspeed/eval.hpp"

#include "json.hpp"

#include <string>

namespace vspeed::report {

nlohmann::json to_json(const eval::MetricsBlock& m);
eval::MetricsBlock metrics_from_json(const nlohmann::json& j);

/// Both blocks, the label-error summary and a before/after delta block.
nlohmann::json combined_report(const eval::ExperimentReport& r);

/// Per-vehicle RMSE before/after with an unweighted Average row.
std::string rmse_table_csv(const eval::MetricsBlock& before, const eval::MetricsBlock& after);

/// Per-vehicle class-offset percentages before/after with an Average row.
std::string class_table_csv(const eval::MetricsBlock& before, const eval::MetricsBlock& after);

/// Detection-offset histograms (before and after overlaid), bins centered
/// on multiples of the bin width.
std::string offset_histogram_svg(const eval::MetricsBlock& before, const eval::MetricsBlock& after);

/// Two-class histogram of MA maxima (vehicle vs noise) with the band between
/// the largest noise maximum and the smallest vehicle maximum shaded.
std::string maxima_histogram_svg(const eval::MetricsBlock& m);

}  // namespace vspeed::report
