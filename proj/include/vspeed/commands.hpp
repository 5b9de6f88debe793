#pragma once

#include "vspeed/config.hpp"
#include "vspeed/pipeline.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace vspeed::commands {

/// Dataset layout (written by cmd_synth, read by cmd_run):
///   <root>/clips/*.wav, <root>/noise/*.wav,
///   <root>/labels_true.csv, <root>/labels_noisy.csv  (noise clips have has_vehicle = 0)
/// Run outputs in <out>: predictions_<set>.csv, metrics_<set>.json,
/// labels_corrected.csv; cmd_report adds report.json, table_rmse.csv,
/// table_classes.csv, offsets_histogram.svg, ma_maxima_histogram.svg.

struct SynthSummary {
    std::size_t clips = 0;
    std::size_t noise_clips = 0;
};

struct RunFiles {
    std::filesystem::path predictions;
    std::filesystem::path metrics;
};

/// Label file for a label set name: noisy|true from the dataset root,
/// corrected from the output directory.
std::filesystem::path labels_path(const config::ExperimentConfig& cfg, const std::string& label_set);

SynthSummary cmd_synth(const config::ExperimentConfig& cfg, std::ostream& log);

RunFiles cmd_run(const config::ExperimentConfig& cfg, const std::string& label_set, std::ostream& log);

/// Median-corrects the labels of `label_set` from predictions_<label_set>.csv.
std::filesystem::path cmd_correct(const config::ExperimentConfig& cfg, const std::string& label_set, std::ostream& log);

void cmd_report(const std::filesystem::path& before, const std::filesystem::path& after,
                const std::filesystem::path& out_dir, std::ostream& log);

std::string predictions_csv(const pipeline::RunResult& run);

/// (clip, predicted t_CPA) for every vehicle row of a predictions CSV.
std::vector<std::pair<std::string, double>> read_predictions(const std::filesystem::path& path);

}  // namespace vspeed::commands
