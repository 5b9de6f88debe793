#pragma once

#include "vspeed/dsp.hpp"
#include "vspeed/eval.hpp"
#include "vspeed/features.hpp"
#include "vspeed/nn.hpp"
#include "vspeed/svr.hpp"
#include "vspeed/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vspeed::pipeline {

struct DetectionRule {
    double threshold = 2.0;  // MA magnitude
};

struct ThresholdCalibration {
    DetectionRule rule;
    double gap = 0.0;          // min(vehicle) - max(noise)
    std::size_t errors = 0;    // misclassified maxima at the chosen threshold
};

/// Leave-one-vehicle-out plan: one fold per vehicle, repeated with fresh
/// train/validation splits and network initializations.
struct CvPlan {
    int repetitions = 20;
    double val_fraction = 0.2;
    std::uint64_t seed = 7;
};

struct PipelineConfig {
    int sample_rate = 44100;
    dsp::StftConfig stft;
    dsp::MelConfig mel;
    features::MaParams ma;
    features::FeatureConfig features;
    std::vector<std::size_t> hidden{200, 50, 10};
    nn::TrainConfig train;                // seed is replaced per job
    std::size_t train_frame_step = 1;     // every k-th frame of a clip becomes a DNN pair
    svr::SvrConfig svr;
    bool svr_grid_search = false;
    std::vector<svr::GridPoint> svr_grid = svr::default_grid();
    std::size_t svr_window = 73;
    DetectionRule detection;
    CvPlan plan;
    unsigned threads = 0;  // 0: VSPEED_THREADS or hardware concurrency
    eval::SpeedClassScheme classes;
    double offset_bin_width = 0.025;

    std::vector<std::size_t> layer_sizes() const;
};

struct ClipFeatures {
    std::string clip;
    dsp::LogMelSpectrogram lms;
};

struct PreparedDataset {
    std::vector<ClipFeatures> clips;                // vehicle recordings
    std::vector<ClipFeatures> noise;                // recordings without a vehicle
    std::vector<features::RecordingLabel> truth;    // physical labels when known (synthetic data)
};

struct TestRecord {
    int repetition = 0;
    int fold = 0;
    std::size_t clip_index = 0;
    std::string clip;
    std::string vehicle;
    features::MaProfile profile;  // predicted
    double label_t_cpa = 0.0;
    double pred_t_cpa = 0.0;
    double ma_max = 0.0;
    bool detected = false;
    double true_speed = 0.0;
    double est_speed = 0.0;
};

struct NoiseRecord {
    int repetition = 0;
    int fold = 0;
    std::size_t noise_index = 0;
    std::string clip;
    double ma_max = 0.0;
};

struct FoldAudit {
    int repetition = 0;
    int fold = 0;
    std::string test_vehicle;
    std::vector<std::string> train_vehicles;
    std::vector<std::string> val_vehicles;
    std::size_t train_clips = 0;
    std::size_t val_clips = 0;
    std::size_t train_pairs = 0;
    int best_epoch = -1;
    double final_train_loss = 0.0;
    svr::GridPoint svr_point;
};

struct RunResult {
    std::vector<TestRecord> tests;
    std::vector<NoiseRecord> noise;
    std::vector<FoldAudit> folds;
};

struct ExperimentOutcome {
    RunResult before;
    RunResult after;
    std::vector<features::RecordingLabel> corrected_labels;
    eval::ExperimentReport report;
};

/// Log-mel spectrograms of every clip of a synthetic dataset.
PreparedDataset prepare(const synth::SynthDataset& ds, const PipelineConfig& cfg);

/// Reads the WAV files named in `labels` (paths relative to `root`).
PreparedDataset prepare_directory(const std::filesystem::path& root,
                                  const std::vector<features::RecordingLabel>& labels, const PipelineConfig& cfg);

/// Argmax of the profile (ties to the earliest frame); its time when the
/// maximum reaches the threshold.
std::optional<double> detect(const features::MaProfile& profile, const DetectionRule& rule);

std::size_t argmax_frame(std::span<const double> values);

/// `width` values centered on `center`, edge-clamped.
std::vector<double> select_window(std::span<const double> profile, std::size_t center, std::size_t width = 73);

RunResult run_cv(const PreparedDataset& data, const std::vector<features::RecordingLabel>& labels,
                 const PipelineConfig& cfg);

/// Per clip, the median of its test-phase t_CPA predictions.
std::vector<features::RecordingLabel> correct_labels(const std::vector<features::RecordingLabel>& labels,
                                                     const RunResult& results);

/// Same as above from (clip, predicted t_CPA) pairs.
std::vector<features::RecordingLabel> correct_labels(const std::vector<features::RecordingLabel>& labels,
                                                     std::span<const std::pair<std::string, double>> predictions);

double median(std::vector<double> values);

ThresholdCalibration calibrate_threshold(std::span<const double> vehicle_maxima, std::span<const double> noise_maxima);

eval::MetricsBlock summarize(const RunResult& run, const std::string& label_set,
                             const std::vector<features::RecordingLabel>& labels,
                             const std::vector<features::RecordingLabel>& truth, const PipelineConfig& cfg);

/// Baseline run on `labels`, median correction from its test predictions,
/// then a second run on the corrected labels.
ExperimentOutcome full_experiment(const PreparedDataset& data, const std::vector<features::RecordingLabel>& labels,
                                  const PipelineConfig& cfg);

}  // namespace vspeed::pipeline
