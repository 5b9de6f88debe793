#include "vspeed/synth.hpp"

#include "vspeed/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace vspeed::synth {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream, std::uint32_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, index};
    return std::mt19937_64(seq);
}

double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

void validate(const PassbyParams& p) {
    auto bad = [](const std::string& what) { return std::invalid_argument("synth_passby: " + what); };
    if (!(p.speed_kmh >= 30.0 && p.speed_kmh <= 105.0)) {
        throw bad("speed must lie in [30, 105] km/h");
    }
    if (!(p.t_cpa >= 2.0 && p.t_cpa <= 8.0)) {
        throw bad("t_cpa must lie in [2, 8] s");
    }
    if (!(p.base_freq >= 70.0 && p.base_freq <= 220.0)) {
        throw bad("base_freq must lie in [70, 220] Hz");
    }
    if (!(p.d_cpa > 0.0)) {
        throw bad("d_cpa must be positive");
    }
    if (p.direction != 1 && p.direction != -1) {
        throw bad("direction must be +1 or -1");
    }
    if (p.harmonic_amps.empty() || p.broadband_level < 0.0) {
        throw bad("need at least one harmonic and a non-negative broadband level");
    }
}

}  // namespace

std::string vehicle_name(int v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "veh%02d", v);
    return buf;
}

std::string clip_path(int vehicle, int pass) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "clips/v%02d_p%02d.wav", vehicle, pass);
    return buf;
}

std::string noise_path(int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "noise/n%02d.wav", index);
    return buf;
}

std::vector<double> colored_noise(std::size_t n, double color, std::uint64_t seed) {
    if (!(color >= 0.0 && color < 1.0)) {
        throw std::invalid_argument("colored_noise: color must lie in [0, 1)");
    }
    auto rng = make_rng(seed, 0xB6u);
    std::normal_distribution<double> white(0.0, 1.0);
    std::vector<double> out(n);
    double low = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = white(rng);
        low = color * low + (1.0 - color) * w;
        // low-frequency rumble plus a weaker white floor
        out[i] = low * 8.0 + 0.3 * w;
    }
    const double r = rms(out);
    if (r > 0.0) {
        for (double& v : out) {
            v /= r;
        }
    }
    return out;
}

PassbyClip synth_passby(const PassbyParams& p, double duration, int sample_rate) {
    validate(p);
    if (!(duration > 0.0) || sample_rate <= 0) {
        throw std::invalid_argument("synth_passby: duration and sample rate must be positive");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
    const double sr = static_cast<double>(sample_rate);
    const double v = p.speed_kmh / 3.6;
    const double two_pi = 2.0 * std::numbers::pi;

    auto rng = make_rng(p.seed, 0xA1u);
    std::uniform_real_distribution<double> phase_dist(0.0, two_pi);
    std::vector<double> phase0(p.harmonic_amps.size());
    for (double& ph : phase0) {
        ph = phase_dist(rng);
    }

    // tire noise: broadband, mildly low-passed
    std::vector<double> tire = colored_noise(n, 0.6, p.seed ^ 0x7177E5ull);
    std::vector<double> background = colored_noise(n, 0.97, p.seed ^ 0xBAC6ull);

    std::vector<double> source(n);
    std::vector<double> signal(n);
    double phase = 0.0;  // fundamental phase, integrated from the instantaneous frequency
    const double nyquist_guard = 0.45 * sr;
    for (std::size_t s = 0; s < n; ++s) {
        const double t = static_cast<double>(s) / sr;
        const double dt = t - p.t_cpa;
        const double r = std::sqrt(v * v * dt * dt + p.d_cpa * p.d_cpa);
        const double v_radial = -v * v * dt / r;  // -dr/dt, positive while approaching
        const double f0 = p.base_freq * kSpeedOfSound / (kSpeedOfSound - v_radial);
        const double env = (p.d_cpa / r) * (p.d_cpa / r);

        double engine = 0.0;
        for (std::size_t k = 0; k < p.harmonic_amps.size(); ++k) {
            const double order = static_cast<double>(k + 1);
            if (order * f0 >= nyquist_guard) {
                break;
            }
            engine += p.harmonic_amps[k] * std::sin(order * phase + phase0[k]);
        }
        source[s] = engine + p.broadband_level * tire[s];
        signal[s] = env * source[s];
        phase = std::fmod(phase + two_pi * f0 / sr, two_pi);
    }

    const double noise_rms = rms(source) / std::pow(10.0, p.snr_db / 20.0);
    double peak = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        signal[s] += noise_rms * background[s];
        peak = std::max(peak, std::abs(signal[s]));
    }
    const double gain = peak > 0.0 ? 0.9 / peak : 1.0;

    PassbyClip out;
    out.clip.sample_rate = sample_rate;
    out.clip.samples.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        out.clip.samples[s] = static_cast<float>(gain * signal[s]);
    }
    out.background_rms = gain * noise_rms;
    out.label.speed_kmh = p.speed_kmh;
    out.label.t_cpa = p.t_cpa;
    out.label.has_vehicle = true;
    return out;
}

dsp::AudioClip synth_noise_clip(const NoiseClipParams& p, double duration, int sample_rate) {
    if (!(duration > 0.0) || sample_rate <= 0 || p.rms < 0.0) {
        throw std::invalid_argument("synth_noise_clip: invalid parameters");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
    const std::vector<double> x = colored_noise(n, p.color, p.seed);
    dsp::AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] = static_cast<float>(std::clamp(p.rms * x[i], -1.0, 1.0));
    }
    return clip;
}

std::vector<features::RecordingLabel> inject_label_noise(const std::vector<features::RecordingLabel>& labels,
                                                         std::span<const int> directions,
                                                         const LabelNoiseModel& model, double duration) {
    if (directions.size() != labels.size()) {
        throw std::invalid_argument("inject_label_noise: one direction per label required");
    }
    if (model.jitter_std < 0.0) {
        throw std::invalid_argument("inject_label_noise: jitter_std must be non-negative");
    }
    auto rng = make_rng(model.seed, 0x1ABEu);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<features::RecordingLabel> out = labels;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i].has_vehicle) {
            continue;
        }
        double t = out[i].t_cpa + directions[i] * model.per_direction_bias;
        if (model.jitter_std > 0.0) {
            t += model.jitter_std * gauss(rng);
        }
        out[i].t_cpa = std::clamp(t, 0.0, duration);
    }
    return out;
}

SynthDataset make_dataset(const DatasetConfig& cfg) {
    if (cfg.vehicles < 1 || cfg.passes_per_vehicle < 1 || cfg.noise_clips < 0) {
        throw std::invalid_argument("make_dataset: need at least one vehicle and one pass per vehicle");
    }
    if (!(cfg.speed_min >= 30.0 && cfg.speed_min <= cfg.speed_max && cfg.speed_max <= 105.0)) {
        throw std::invalid_argument("make_dataset: speed range must lie within [30, 105] km/h");
    }
    if (!(cfg.t_cpa_min >= 2.0 && cfg.t_cpa_min <= cfg.t_cpa_max && cfg.t_cpa_max <= 8.0)) {
        throw std::invalid_argument("make_dataset: t_cpa range must lie within [2, 8] s");
    }
    if (!(cfg.d_cpa_min > 0.0 && cfg.d_cpa_min <= cfg.d_cpa_max) || cfg.snr_db_min > cfg.snr_db_max) {
        throw std::invalid_argument("make_dataset: invalid d_cpa or snr range");
    }

    struct Timbre {
        double base_freq;
        std::vector<double> amps;
        double broadband;
    };
    std::vector<Timbre> timbres;
    for (int v = 0; v < cfg.vehicles; ++v) {
        auto rng = make_rng(cfg.seed, 0x7E4u, static_cast<std::uint32_t>(v));
        std::uniform_real_distribution<double> freq(70.0, 220.0);
        std::uniform_int_distribution<int> n_harm(8, 16);
        std::uniform_real_distribution<double> jitter(0.5, 1.0);
        std::uniform_real_distribution<double> rolloff(0.6, 1.4);
        std::uniform_real_distribution<double> bb(0.2, 0.8);
        Timbre t;
        t.base_freq = freq(rng);
        const int h = n_harm(rng);
        const double ro = rolloff(rng);
        for (int k = 1; k <= h; ++k) {
            t.amps.push_back(jitter(rng) / std::pow(static_cast<double>(k), ro));
        }
        t.broadband = bb(rng);
        timbres.push_back(std::move(t));
    }

    const std::size_t n_clips = static_cast<std::size_t>(cfg.vehicles) * static_cast<std::size_t>(cfg.passes_per_vehicle);
    std::vector<PassbyParams> params(n_clips);
    for (int v = 0; v < cfg.vehicles; ++v) {
        for (int pass = 0; pass < cfg.passes_per_vehicle; ++pass) {
            const auto idx = static_cast<std::size_t>(v * cfg.passes_per_vehicle + pass);
            auto rng = make_rng(cfg.seed, 0x9A55u, static_cast<std::uint32_t>(idx));
            std::uniform_real_distribution<double> speed(cfg.speed_min, cfg.speed_max);
            std::uniform_real_distribution<double> tcpa(cfg.t_cpa_min, cfg.t_cpa_max);
            std::uniform_real_distribution<double> dist(cfg.d_cpa_min, cfg.d_cpa_max);
            std::uniform_real_distribution<double> snr(cfg.snr_db_min, cfg.snr_db_max);
            std::bernoulli_distribution dir(0.5);
            PassbyParams& p = params[idx];
            p.speed_kmh = speed(rng);
            p.t_cpa = tcpa(rng);
            p.d_cpa = dist(rng);
            p.snr_db = snr(rng);
            p.direction = dir(rng) ? 1 : -1;
            p.seed = rng();
            p.base_freq = timbres[static_cast<std::size_t>(v)].base_freq;
            p.harmonic_amps = timbres[static_cast<std::size_t>(v)].amps;
            p.broadband_level = timbres[static_cast<std::size_t>(v)].broadband;
        }
    }

    SynthDataset ds;
    ds.clips.resize(n_clips);
    ds.labels_true.resize(n_clips);
    ds.directions.resize(n_clips);
    std::vector<double> background(n_clips);
    parallel_for(n_clips, thread_count(), [&](std::size_t i) {
        PassbyClip pc = synth_passby(params[i], cfg.duration, cfg.sample_rate);
        const int v = static_cast<int>(i) / cfg.passes_per_vehicle;
        const int pass = static_cast<int>(i) % cfg.passes_per_vehicle;
        pc.label.clip = clip_path(v, pass);
        pc.label.vehicle_id = vehicle_name(v);
        ds.clips[i] = std::move(pc.clip);
        ds.labels_true[i] = pc.label;
        ds.directions[i] = params[i].direction;
        background[i] = pc.background_rms;
    });

    LabelNoiseModel noise_model = cfg.label_noise;
    noise_model.seed = cfg.label_noise.seed ^ cfg.seed;
    ds.labels_noisy = inject_label_noise(ds.labels_true, ds.directions, noise_model, cfg.duration);

    const auto n_noise = static_cast<std::size_t>(cfg.noise_clips);
    ds.noise_clips.resize(n_noise);
    ds.noise_ids.resize(n_noise);
    parallel_for(n_noise, thread_count(), [&](std::size_t j) {
        auto rng = make_rng(cfg.seed, 0x4015Eu, static_cast<std::uint32_t>(j));
        NoiseClipParams np;
        // level matched to the background of a vehicle recording
        np.rms = background[j % n_clips];
        np.color = 0.97;
        np.seed = rng();
        ds.noise_clips[j] = synth_noise_clip(np, cfg.duration, cfg.sample_rate);
        ds.noise_ids[j] = noise_path(static_cast<int>(j));
    });
    return ds;
}

}  // namespace vspeed::synth
