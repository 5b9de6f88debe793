#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace vspeed {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = RowMatrix<double>;
using RowMatrixF = RowMatrix<float>;

namespace dsp {

/// Mono audio. Dataset clips are 10 s at 44100 Hz (441000 samples).
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = 44100;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

struct StftConfig {
    std::size_t window_len = 4096;
    std::size_t hop = 1105;
};

/// Power spectrogram, one row per frame, bins 0..window_len/2.
struct Spectrogram {
    RowMatrixD power;
    std::size_t window_len = 0;
    std::size_t hop = 0;
};

struct MelConfig {
    std::size_t n_mel = 40;
    double f_min = 0.0;
    double f_max = 16000.0;
};

struct MelFilterbank {
    RowMatrixD weights;  // n_mel x n_bins
    std::vector<double> centers_hz;
    double f_min = 0.0;
    double f_max = 0.0;
    int sample_rate = 0;
    std::size_t window_len = 0;
};

struct LmsConfig {
    StftConfig stft;
    double floor = 1e-10;
};

struct LogMelSpectrogram {
    RowMatrixD values;  // n_frames x n_mel, natural log of mel power
    std::size_t hop = 0;
    int sample_rate = 0;

    std::size_t n_frames() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_mel() const { return static_cast<std::size_t>(values.cols()); }
};

/// Symmetric Hamming window, 0.54 - 0.46 cos(2 pi k / (n - 1)).
std::vector<double> hamming_window(std::size_t n);

/// Number of centered frames for a signal of `length` samples.
std::size_t frame_count(std::size_t length, std::size_t hop);

/// Centered STFT: the clip is reflection-padded by window_len/2 on each side
/// and frame i is centered at sample i*hop.
Spectrogram stft(const AudioClip& clip, const StftConfig& cfg = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank mel_filterbank(const MelConfig& cfg = {}, std::size_t window_len = 4096,
                             int sample_rate = 44100);

LogMelSpectrogram log_mel_spectrogram(const AudioClip& clip, const MelFilterbank& bank,
                                      const LmsConfig& cfg = {});

}  // namespace dsp
}  // namespace vspeed
