#include "vspeed/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace vspeed::dsp {

namespace {

// FFTW's planner is not reentrant; execution with new-array functions is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n),
          in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
          out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
        if (plan_ == nullptr) {
            throw std::runtime_error("fftw: failed to create plan of size " + std::to_string(n));
        }
    }
    ~RealFft() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_.get(); }
    const fftw_complex* output() const { return out_.get(); }
    void execute() { fftw_execute(plan_); }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::unique_ptr<double, FftwFree> in_;
    std::unique_ptr<fftw_complex, FftwFree> out_;
    fftw_plan plan_ = nullptr;
};

// numpy-style "reflect" (edge sample not repeated)
std::size_t reflect_index(std::ptrdiff_t j, std::size_t n) {
    if (n == 1) {
        return 0;
    }
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    std::ptrdiff_t m = j % period;
    if (m < 0) {
        m += period;
    }
    if (m >= static_cast<std::ptrdiff_t>(n)) {
        m = period - m;
    }
    return static_cast<std::size_t>(m);
}

}  // namespace

std::vector<double> hamming_window(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("hamming_window: length must be positive");
    }
    if (n == 1) {
        return {1.0};
    }
    std::vector<double> w(n);
    const double denom = static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        w[k] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom);
    }
    // exact symmetry regardless of cos rounding
    for (std::size_t k = 0; k < n / 2; ++k) {
        w[n - 1 - k] = w[k];
    }
    return w;
}

std::size_t frame_count(std::size_t length, std::size_t hop) {
    if (hop == 0) {
        throw std::invalid_argument("frame_count: hop must be positive");
    }
    return length / hop + 1;
}

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
    if (clip.samples.empty()) {
        throw std::invalid_argument("stft: empty clip");
    }
    if (cfg.window_len == 0 || cfg.hop == 0) {
        throw std::invalid_argument("stft: window_len and hop must be positive");
    }
    const std::size_t n = clip.samples.size();
    const std::size_t win_len = cfg.window_len;
    const std::size_t n_bins = win_len / 2 + 1;
    const std::size_t n_frames = frame_count(n, cfg.hop);
    const auto half = static_cast<std::ptrdiff_t>(win_len / 2);
    const std::vector<double> window = hamming_window(win_len);

    Spectrogram spec;
    spec.window_len = win_len;
    spec.hop = cfg.hop;
    spec.power.resize(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(n_bins));

    RealFft fft(win_len);
    double* in = fft.input();
    for (std::size_t i = 0; i < n_frames; ++i) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(i * cfg.hop) - half;
        for (std::size_t k = 0; k < win_len; ++k) {
            const std::ptrdiff_t j = start + static_cast<std::ptrdiff_t>(k);
            const std::size_t src = (j >= 0 && j < static_cast<std::ptrdiff_t>(n))
                                        ? static_cast<std::size_t>(j)
                                        : reflect_index(j, n);
            in[k] = static_cast<double>(clip.samples[src]) * window[k];
        }
        fft.execute();
        const fftw_complex* out = fft.output();
        for (std::size_t b = 0; b < n_bins; ++b) {
            spec.power(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) =
                out[b][0] * out[b][0] + out[b][1] * out[b][1];
        }
    }
    return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(const MelConfig& cfg, std::size_t window_len, int sample_rate) {
    if (cfg.n_mel == 0 || window_len == 0 || sample_rate <= 0) {
        throw std::invalid_argument("mel_filterbank: n_mel, window_len and sample_rate must be positive");
    }
    const double nyquist = sample_rate / 2.0;
    if (!(cfg.f_min >= 0.0 && cfg.f_min < cfg.f_max)) {
        throw std::invalid_argument("mel_filterbank: need 0 <= f_min < f_max");
    }
    if (cfg.f_max > nyquist) {
        throw std::invalid_argument("mel_filterbank: f_max " + std::to_string(cfg.f_max) +
                                    " exceeds Nyquist " + std::to_string(nyquist));
    }

    const std::size_t n_bins = window_len / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.f_min);
    const double mel_hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(cfg.n_mel + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(cfg.n_mel + 1);
        edges[i] = mel_to_hz(mel_lo + t * (mel_hi - mel_lo));
    }

    MelFilterbank bank;
    bank.f_min = cfg.f_min;
    bank.f_max = cfg.f_max;
    bank.sample_rate = sample_rate;
    bank.window_len = window_len;
    bank.weights = RowMatrixD::Zero(static_cast<Eigen::Index>(cfg.n_mel), static_cast<Eigen::Index>(n_bins));
    bank.centers_hz.assign(edges.begin() + 1, edges.end() - 1);

    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(window_len);
    for (std::size_t m = 0; m < cfg.n_mel; ++m) {
        const double lo = edges[m];
        const double center = edges[m + 1];
        const double hi = edges[m + 2];
        bool any = false;
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * bin_hz;
            double w = 0.0;
            if (f > lo && f <= center) {
                w = (f - lo) / (center - lo);
            } else if (f > center && f < hi) {
                w = (hi - f) / (hi - center);
            }
            if (w > 0.0) {
                bank.weights(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = w;
                any = true;
            }
        }
        // filter narrower than one bin: fall back to the bin nearest its center
        if (!any) {
            const auto b = static_cast<Eigen::Index>(std::lround(center / bin_hz));
            bank.weights(static_cast<Eigen::Index>(m), std::min<Eigen::Index>(b, n_bins - 1)) = 1.0;
        }
    }
    return bank;
}

LogMelSpectrogram log_mel_spectrogram(const AudioClip& clip, const MelFilterbank& bank,
                                      const LmsConfig& cfg) {
    if (bank.window_len != cfg.stft.window_len) {
        throw std::invalid_argument("log_mel_spectrogram: filterbank built for window " +
                                    std::to_string(bank.window_len) + ", config uses " +
                                    std::to_string(cfg.stft.window_len));
    }
    if (bank.sample_rate != clip.sample_rate) {
        throw std::invalid_argument("log_mel_spectrogram: filterbank sample rate " +
                                    std::to_string(bank.sample_rate) + " != clip sample rate " +
                                    std::to_string(clip.sample_rate));
    }
    if (!(cfg.floor > 0.0)) {
        throw std::invalid_argument("log_mel_spectrogram: floor must be positive");
    }
    const Spectrogram spec = stft(clip, cfg.stft);

    LogMelSpectrogram lms;
    lms.hop = cfg.stft.hop;
    lms.sample_rate = clip.sample_rate;
    lms.values.noalias() = spec.power * bank.weights.transpose();
    const double floor = cfg.floor;
    lms.values = lms.values.unaryExpr([floor](double p) { return std::log(std::max(p, floor)); });
    return lms;
}

}  // namespace vspeed::dsp
