#include "vspeed/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vspeed::features {

double kmh_to_ms(double speed_kmh) { return speed_kmh / 3.6; }

double ma_value(double speed_kmh, double t_cpa, double t, const MaParams& params) {
    const double v = kmh_to_ms(speed_kmh);
    const double dt = t_cpa - t;
    return v / (params.beta * v * v * dt * dt + params.d_cpa * params.d_cpa);
}

std::vector<double> frame_times(std::size_t n_frames, std::size_t hop, int sample_rate) {
    std::vector<double> t(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        t[i] = static_cast<double>(i * hop) / static_cast<double>(sample_rate);
    }
    return t;
}

MaProfile ma_profile(double speed_kmh, double t_cpa, const MaParams& params,
                     const std::vector<double>& times) {
    if (!(speed_kmh > 0.0)) {
        throw std::invalid_argument("ma_profile: speed must be positive, got " + std::to_string(speed_kmh));
    }
    if (!(params.beta > 0.0) || !(params.d_cpa > 0.0)) {
        throw std::invalid_argument("ma_profile: beta and d_cpa must be positive");
    }
    MaProfile p;
    p.frame_times = times;
    p.values.resize(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        p.values[i] = ma_value(speed_kmh, t_cpa, times[i], params);
    }
    return p;
}

std::size_t nearest_frame(double t, std::size_t hop, int sample_rate, std::size_t n_frames) {
    if (n_frames == 0) {
        throw std::invalid_argument("nearest_frame: no frames");
    }
    const double pos = t * static_cast<double>(sample_rate) / static_cast<double>(hop);
    if (pos <= 0.0) {
        return 0;
    }
    // round half down so exact midpoints go to the earlier frame
    auto idx = static_cast<std::size_t>(std::ceil(pos - 0.5));
    return std::min(idx, n_frames - 1);
}

std::vector<std::size_t> window_rows(std::size_t frame, std::size_t n_frames, const FeatureConfig& cfg) {
    if (cfg.q_frames == 0 || cfg.q_frames % 2 == 0) {
        throw std::invalid_argument("window_rows: q_frames must be odd");
    }
    const auto half = static_cast<std::ptrdiff_t>(cfg.q_frames / 2);
    const auto stride = static_cast<std::ptrdiff_t>(cfg.stride);
    const auto last = static_cast<std::ptrdiff_t>(n_frames) - 1;
    std::vector<std::size_t> rows(cfg.q_frames);
    for (std::size_t k = 0; k < cfg.q_frames; ++k) {
        std::ptrdiff_t r = static_cast<std::ptrdiff_t>(frame) + stride * (static_cast<std::ptrdiff_t>(k) - half);
        r = std::clamp<std::ptrdiff_t>(r, 0, last);
        rows[k] = static_cast<std::size_t>(r);
    }
    return rows;
}

void fill_window(const dsp::LogMelSpectrogram& lms, std::size_t frame, const FeatureConfig& cfg,
                 std::span<float> out) {
    if (lms.n_mel() != cfg.n_mel) {
        throw std::invalid_argument("fill_window: LMS has " + std::to_string(lms.n_mel()) +
                                    " mel bands, config expects " + std::to_string(cfg.n_mel));
    }
    if (out.size() != cfg.m_inputs()) {
        throw std::invalid_argument("fill_window: output length mismatch");
    }
    const auto rows = window_rows(frame, lms.n_frames(), cfg);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(rows[k]);
        for (std::size_t m = 0; m < cfg.n_mel; ++m) {
            out[k * cfg.n_mel + m] = static_cast<float>(lms.values(r, static_cast<Eigen::Index>(m)));
        }
    }
}

RowMatrixF window_matrix(const dsp::LogMelSpectrogram& lms, const FeatureConfig& cfg,
                         std::span<const std::size_t> frames) {
    RowMatrixF x(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(cfg.m_inputs()));
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i] >= lms.n_frames()) {
            throw std::invalid_argument("window_matrix: frame " + std::to_string(frames[i]) + " out of range");
        }
        fill_window(lms, frames[i], cfg, std::span<float>(x.row(static_cast<Eigen::Index>(i)).data(), cfg.m_inputs()));
    }
    return x;
}

TrainingPairs extract_pairs(const dsp::LogMelSpectrogram& lms, const MaProfile& target,
                            const FeatureConfig& cfg, std::span<const std::size_t> frames) {
    if (lms.n_frames() != target.size()) {
        throw std::invalid_argument("extract_pairs: LMS has " + std::to_string(lms.n_frames()) +
                                    " frames but target has " + std::to_string(target.size()));
    }
    TrainingPairs pairs;
    pairs.features = window_matrix(lms, cfg, frames);
    pairs.frames.assign(frames.begin(), frames.end());
    pairs.targets.reserve(frames.size());
    for (std::size_t f : frames) {
        pairs.targets.push_back(static_cast<float>(target.values[f]));
    }
    return pairs;
}

TrainingPairs extract_pairs(const dsp::LogMelSpectrogram& lms, const MaProfile& target,
                            const FeatureConfig& cfg) {
    std::vector<std::size_t> all(lms.n_frames());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    return extract_pairs(lms, target, cfg, all);
}

}  // namespace vspeed::features
