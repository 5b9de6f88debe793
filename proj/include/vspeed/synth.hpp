#pragma once

#include "vspeed/dsp.hpp"
#include "vspeed/features.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vspeed::synth {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

/// One pass-by. direction is +1 or -1 (which way the vehicle travels).
struct PassbyParams {
    double speed_kmh = 60.0;
    double t_cpa = 5.0;
    double d_cpa = 3.0;
    double base_freq = 110.0;
    std::vector<double> harmonic_amps{1.0, 0.6, 0.4, 0.25};
    double broadband_level = 0.5;
    double snr_db = 25.0;
    int direction = 1;
    std::uint64_t seed = 0;
};

struct PassbyClip {
    dsp::AudioClip clip;
    features::RecordingLabel label;
    double background_rms = 0.0;  // background noise level in the final (normalized) clip
};

struct NoiseClipParams {
    double rms = 0.01;
    double color = 0.97;  // one-pole low-pass coefficient of the noise colouring
    std::uint64_t seed = 0;
};

struct LabelNoiseModel {
    double per_direction_bias = 0.15;  // seconds, sign follows the pass direction
    double jitter_std = 0.05;          // seconds
    std::uint64_t seed = 0;
};

struct DatasetConfig {
    int vehicles = 10;
    int passes_per_vehicle = 10;
    int noise_clips = 20;
    double speed_min = 30.0;
    double speed_max = 105.0;
    double t_cpa_min = 2.5;
    double t_cpa_max = 7.5;
    double d_cpa_min = 2.8;
    double d_cpa_max = 3.2;
    double snr_db_min = 15.0;
    double snr_db_max = 30.0;
    LabelNoiseModel label_noise;
    std::uint64_t seed = 1;
    double duration = 10.0;
    int sample_rate = 44100;
};

struct SynthDataset {
    std::vector<dsp::AudioClip> clips;
    std::vector<features::RecordingLabel> labels_true;
    std::vector<features::RecordingLabel> labels_noisy;
    std::vector<int> directions;
    std::vector<dsp::AudioClip> noise_clips;
    std::vector<std::string> noise_ids;
};

/// Unit-RMS stationary coloured noise.
std::vector<double> colored_noise(std::size_t n, double color, std::uint64_t seed);

/// Harmonic engine tone with Doppler shift c / (c - v_r), 1/r^2 amplitude
/// envelope, envelope-shaped broadband tire noise and stationary background
/// noise at snr_db below the source level. Peak magnitude normalized to 0.9.
PassbyClip synth_passby(const PassbyParams& p, double duration = 10.0, int sample_rate = 44100);

dsp::AudioClip synth_noise_clip(const NoiseClipParams& p, double duration = 10.0, int sample_rate = 44100);

/// t' = clamp(t + direction * bias + N(0, jitter^2), 0, duration). Speeds unchanged.
std::vector<features::RecordingLabel> inject_label_noise(const std::vector<features::RecordingLabel>& labels,
                                                         std::span<const int> directions,
                                                         const LabelNoiseModel& model, double duration = 10.0);

SynthDataset make_dataset(const DatasetConfig& cfg);

std::string vehicle_name(int v);
std::string clip_path(int vehicle, int pass);
std::string noise_path(int index);

}  // namespace vspeed::synth
