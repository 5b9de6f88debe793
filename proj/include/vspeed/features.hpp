#pragma once

#include "vspeed/dsp.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vspeed::features {

/// Modified attenuation parameters. The vertical scale alpha is tied to the
/// speed itself (alpha = v), so it has no field here.
struct MaParams {
    double beta = 0.05;
    double d_cpa = 1.5;  // meters
};

/// MA values on the STFT frame grid.
struct MaProfile {
    std::vector<double> values;
    std::vector<double> frame_times;  // seconds

    std::size_t size() const { return values.size(); }
};

struct RecordingLabel {
    std::string clip;  // path relative to the dataset root
    std::string vehicle_id;
    double speed_kmh = 0.0;
    double t_cpa = 0.0;  // seconds
    bool has_vehicle = true;
};

struct FeatureConfig {
    std::size_t q_frames = 25;
    std::size_t stride = 3;
    std::size_t n_mel = 40;

    std::size_t m_inputs() const { return q_frames * n_mel; }
};

/// Float pairs for the regressor: one feature row per frame.
struct TrainingPairs {
    RowMatrixF features;
    std::vector<float> targets;
    std::vector<std::size_t> frames;  // source frame of each row

    std::size_t size() const { return targets.size(); }
};

double kmh_to_ms(double speed_kmh);

/// eta(t) = v / (beta v^2 (t_cpa - t)^2 + d_cpa^2), v in m/s.
double ma_value(double speed_kmh, double t_cpa, double t, const MaParams& params = {});

std::vector<double> frame_times(std::size_t n_frames, std::size_t hop, int sample_rate);

MaProfile ma_profile(double speed_kmh, double t_cpa, const MaParams& params,
                     const std::vector<double>& frame_times);

/// Index of the frame whose time is nearest `t` (ties go to the earlier frame).
std::size_t nearest_frame(double t, std::size_t hop, int sample_rate, std::size_t n_frames);

/// LMS rows feeding the window centered at `frame`, edge-clamped.
std::vector<std::size_t> window_rows(std::size_t frame, std::size_t n_frames, const FeatureConfig& cfg);

/// Writes the q_frames x n_mel window for `frame` into `out` (row-major, length m_inputs).
void fill_window(const dsp::LogMelSpectrogram& lms, std::size_t frame, const FeatureConfig& cfg,
                 std::span<float> out);

/// One (window, target) pair per frame.
TrainingPairs extract_pairs(const dsp::LogMelSpectrogram& lms, const MaProfile& target,
                            const FeatureConfig& cfg);

/// Pairs for a subset of frames only.
TrainingPairs extract_pairs(const dsp::LogMelSpectrogram& lms, const MaProfile& target,
                            const FeatureConfig& cfg, std::span<const std::size_t> frames);

/// Window features without targets, for inference.
RowMatrixF window_matrix(const dsp::LogMelSpectrogram& lms, const FeatureConfig& cfg,
                         std::span<const std::size_t> frames);

}  // namespace vspeed::features
