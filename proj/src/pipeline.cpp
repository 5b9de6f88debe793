#include "vspeed/pipeline.hpp"

#include "vspeed/dataio.hpp"
#include "vspeed/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace vspeed::pipeline {

namespace {

std::mt19937_64 job_rng(std::uint64_t seed, int repetition, int fold, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(repetition), static_cast<std::uint32_t>(fold), stream};
    return std::mt19937_64(seq);
}

// Per-band standardization of LMS values, fitted on training clips only.
struct BandNorm {
    std::vector<double> mean;
    std::vector<double> inv_std;

    dsp::LogMelSpectrogram apply(const dsp::LogMelSpectrogram& lms) const {
        dsp::LogMelSpectrogram out = lms;
        for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
            out.values.col(j) = (out.values.col(j).array() - mean[static_cast<std::size_t>(j)]) *
                                inv_std[static_cast<std::size_t>(j)];
        }
        return out;
    }
};

BandNorm fit_band_norm(const std::vector<const dsp::LogMelSpectrogram*>& clips) {
    const auto n_mel = static_cast<std::size_t>(clips.front()->values.cols());
    std::vector<double> sum(n_mel, 0.0), sq(n_mel, 0.0);
    double count = 0.0;
    for (const auto* lms : clips) {
        for (Eigen::Index i = 0; i < lms->values.rows(); ++i) {
            for (std::size_t j = 0; j < n_mel; ++j) {
                const double v = lms->values(i, static_cast<Eigen::Index>(j));
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        count += static_cast<double>(lms->values.rows());
    }
    BandNorm norm;
    norm.mean.resize(n_mel);
    norm.inv_std.resize(n_mel);
    for (std::size_t j = 0; j < n_mel; ++j) {
        const double m = sum[j] / count;
        const double var = std::max(sq[j] / count - m * m, 0.0);
        norm.mean[j] = m;
        norm.inv_std[j] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    }
    return norm;
}

std::vector<std::size_t> window_frames(std::size_t center, std::size_t n_frames, std::size_t width) {
    const auto half = static_cast<std::ptrdiff_t>(width / 2);
    std::vector<std::size_t> frames(width);
    for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(center) + static_cast<std::ptrdiff_t>(k) - half;
        frames[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(f, 0, static_cast<std::ptrdiff_t>(n_frames) - 1));
    }
    return frames;
}

std::vector<double> predict_frames(const nn::Dnn<float>& model, const dsp::LogMelSpectrogram& lms,
                                   const features::FeatureConfig& fc, std::span<const std::size_t> frames) {
    const RowMatrixF x = features::window_matrix(lms, fc, frames);
    const nn::Vector<float> y = nn::forward_batch(model, x);
    std::vector<double> out(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        out[i] = static_cast<double>(y(static_cast<Eigen::Index>(i)));
    }
    return out;
}

void append_pairs(nn::Samples<float>& dst, const features::TrainingPairs& src) {
    const Eigen::Index old_rows = dst.x.rows();
    const Eigen::Index add = src.features.rows();
    if (add == 0) {
        return;
    }
    dst.x.conservativeResize(old_rows + add, src.features.cols());
    dst.x.bottomRows(add) = src.features;
    dst.y.conservativeResize(old_rows + add);
    for (Eigen::Index i = 0; i < add; ++i) {
        dst.y(old_rows + i) = src.targets[static_cast<std::size_t>(i)];
    }
}

struct JobOutput {
    std::vector<TestRecord> tests;
    std::vector<NoiseRecord> noise;
    FoldAudit audit;
};

}  // namespace

std::vector<std::size_t> PipelineConfig::layer_sizes() const {
    std::vector<std::size_t> sizes{features.m_inputs()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    return sizes;
}

PreparedDataset prepare(const synth::SynthDataset& ds, const PipelineConfig& cfg) {
    const dsp::MelFilterbank bank = dsp::mel_filterbank(cfg.mel, cfg.stft.window_len, cfg.sample_rate);
    dsp::LmsConfig lc;
    lc.stft = cfg.stft;
    PreparedDataset out;
    out.clips.resize(ds.clips.size());
    out.noise.resize(ds.noise_clips.size());
    out.truth = ds.labels_true;
    const unsigned threads = cfg.threads ? cfg.threads : thread_count();
    parallel_for(ds.clips.size() + ds.noise_clips.size(), threads, [&](std::size_t i) {
        if (i < ds.clips.size()) {
            out.clips[i] = {ds.labels_true[i].clip, dsp::log_mel_spectrogram(ds.clips[i], bank, lc)};
        } else {
            const std::size_t j = i - ds.clips.size();
            out.noise[j] = {ds.noise_ids[j], dsp::log_mel_spectrogram(ds.noise_clips[j], bank, lc)};
        }
    });
    return out;
}

PreparedDataset prepare_directory(const std::filesystem::path& root,
                                  const std::vector<features::RecordingLabel>& labels, const PipelineConfig& cfg) {
    const dsp::MelFilterbank bank = dsp::mel_filterbank(cfg.mel, cfg.stft.window_len, cfg.sample_rate);
    dsp::LmsConfig lc;
    lc.stft = cfg.stft;
    std::vector<ClipFeatures> all(labels.size());
    const unsigned threads = cfg.threads ? cfg.threads : thread_count();
    parallel_for(labels.size(), threads, [&](std::size_t i) {
        const dsp::AudioClip clip = dataio::read_wav(root / labels[i].clip);
        all[i] = {labels[i].clip, dsp::log_mel_spectrogram(clip, bank, lc)};
    });
    PreparedDataset out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i].has_vehicle ? out.clips : out.noise).push_back(std::move(all[i]));
    }
    return out;
}

std::size_t argmax_frame(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("argmax_frame: empty profile");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

std::optional<double> detect(const features::MaProfile& profile, const DetectionRule& rule) {
    const std::size_t i = argmax_frame(profile.values);
    if (profile.values[i] >= rule.threshold) {
        return profile.frame_times.at(i);
    }
    return std::nullopt;
}

std::vector<double> select_window(std::span<const double> profile, std::size_t center, std::size_t width) {
    if (width % 2 == 0) {
        throw std::invalid_argument("select_window: width must be odd");
    }
    if (profile.empty()) {
        throw std::invalid_argument("select_window: empty profile");
    }
    std::vector<double> out;
    out.reserve(width);
    for (std::size_t f : window_frames(center, profile.size(), width)) {
        out.push_back(profile[f]);
    }
    return out;
}

RunResult run_cv(const PreparedDataset& data, const std::vector<features::RecordingLabel>& labels,
                 const PipelineConfig& cfg) {
    if (cfg.plan.repetitions < 1) {
        throw std::invalid_argument("run_cv: repetitions must be positive");
    }
    if (!(cfg.plan.val_fraction >= 0.0 && cfg.plan.val_fraction < 1.0)) {
        throw std::invalid_argument("run_cv: val_fraction must lie in [0, 1)");
    }
    if (cfg.train_frame_step == 0) {
        throw std::invalid_argument("run_cv: train_frame_step must be positive");
    }
    std::map<std::string, const features::RecordingLabel*> by_clip;
    for (const auto& l : labels) {
        by_clip[l.clip] = &l;
    }
    std::vector<const features::RecordingLabel*> clip_label(data.clips.size());
    std::map<std::string, std::vector<std::size_t>> by_vehicle;
    for (std::size_t i = 0; i < data.clips.size(); ++i) {
        auto it = by_clip.find(data.clips[i].clip);
        if (it == by_clip.end() || !it->second->has_vehicle) {
            throw std::invalid_argument("run_cv: no vehicle label for clip " + data.clips[i].clip);
        }
        clip_label[i] = it->second;
        by_vehicle[it->second->vehicle_id].push_back(i);
    }
    if (by_vehicle.size() < 2) {
        throw std::invalid_argument("run_cv: need at least 2 vehicles, got " + std::to_string(by_vehicle.size()));
    }
    std::vector<std::string> vehicles;
    for (const auto& [v, _] : by_vehicle) {
        vehicles.push_back(v);
    }

    const auto n_folds = static_cast<int>(vehicles.size());
    const std::size_t n_jobs = static_cast<std::size_t>(cfg.plan.repetitions) * static_cast<std::size_t>(n_folds);
    const std::vector<std::size_t> layers = cfg.layer_sizes();
    std::vector<JobOutput> outputs(n_jobs);

    auto run_job = [&](std::size_t job) {
        const int rep = static_cast<int>(job / static_cast<std::size_t>(n_folds));
        const int fold = static_cast<int>(job % static_cast<std::size_t>(n_folds));
        const std::string& test_vehicle = vehicles[static_cast<std::size_t>(fold)];
        JobOutput& out = outputs[job];
        out.audit.repetition = rep;
        out.audit.fold = fold;
        out.audit.test_vehicle = test_vehicle;

        // 80/20 split by clip, stratified per training vehicle
        std::vector<std::size_t> train_idx, val_idx;
        for (std::size_t v = 0; v < vehicles.size(); ++v) {
            if (vehicles[v] == test_vehicle) {
                continue;
            }
            std::vector<std::size_t> idx = by_vehicle.at(vehicles[v]);
            auto rng = job_rng(cfg.plan.seed, rep, fold, 0x5B11u + static_cast<std::uint32_t>(v));
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto n_val = static_cast<std::size_t>(std::llround(cfg.plan.val_fraction * static_cast<double>(idx.size())));
            const std::size_t n_val_used = std::min(n_val, idx.size() - 1);
            val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val_used));
            train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val_used), idx.end());
            out.audit.train_vehicles.push_back(vehicles[v]);
            if (n_val_used > 0) {
                out.audit.val_vehicles.push_back(vehicles[v]);
            }
        }
        for (const auto* group : {&out.audit.train_vehicles, &out.audit.val_vehicles}) {
            if (std::find(group->begin(), group->end(), test_vehicle) != group->end()) {
                throw std::logic_error("run_cv: test vehicle " + test_vehicle + " leaked into training");
            }
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        out.audit.train_clips = train_idx.size();
        out.audit.val_clips = val_idx.size();

        std::vector<const dsp::LogMelSpectrogram*> train_lms;
        for (std::size_t i : train_idx) {
            train_lms.push_back(&data.clips[i].lms);
        }
        const BandNorm norm = fit_band_norm(train_lms);

        // normalized spectrograms for every clip this job touches
        std::vector<dsp::LogMelSpectrogram> lms(data.clips.size());
        for (std::size_t i = 0; i < data.clips.size(); ++i) {
            lms[i] = norm.apply(data.clips[i].lms);
        }

        auto frame_offset_rng = job_rng(cfg.plan.seed, rep, fold, 0xF4A3u);
        auto build = [&](const std::vector<std::size_t>& idx) {
            nn::Samples<float> s;
            s.x.resize(0, static_cast<Eigen::Index>(cfg.features.m_inputs()));
            for (std::size_t i : idx) {
                const auto& l = *clip_label[i];
                const std::vector<double> times = features::frame_times(lms[i].n_frames(), lms[i].hop, lms[i].sample_rate);
                const features::MaProfile target = features::ma_profile(l.speed_kmh, l.t_cpa, cfg.ma, times);
                std::vector<std::size_t> frames;
                const std::size_t offset = frame_offset_rng() % cfg.train_frame_step;
                for (std::size_t f = offset; f < lms[i].n_frames(); f += cfg.train_frame_step) {
                    frames.push_back(f);
                }
                append_pairs(s, features::extract_pairs(lms[i], target, cfg.features, frames));
            }
            return s;
        };
        const nn::Samples<float> train_set = build(train_idx);
        const nn::Samples<float> val_set = build(val_idx);
        out.audit.train_pairs = train_set.size();

        const std::uint64_t model_seed = job_rng(cfg.plan.seed, rep, fold, 0x1417u)();
        nn::TrainConfig tc = cfg.train;
        tc.seed = model_seed;
        nn::TrainResult<float> trained = nn::train(nn::init_model<float>(layers, model_seed), train_set, tc,
                                                   val_set.size() > 0 ? &val_set : nullptr);
        const nn::Dnn<float>& model = trained.model;
        out.audit.best_epoch = trained.best_epoch;
        out.audit.final_train_loss = trained.loss_history.empty() ? 0.0 : trained.loss_history.back();

        // speed regressor on label-centered windows of predicted training profiles
        auto svr_rows = [&](const std::vector<std::size_t>& idx, RowMatrixD& x, std::vector<double>& y) {
            x.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(cfg.svr_window));
            y.clear();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const std::size_t i = idx[r];
                const auto& l = *clip_label[i];
                const std::size_t center = features::nearest_frame(l.t_cpa, lms[i].hop, lms[i].sample_rate, lms[i].n_frames());
                const auto frames = window_frames(center, lms[i].n_frames(), cfg.svr_window);
                const std::vector<double> pred = predict_frames(model, lms[i], cfg.features, frames);
                for (std::size_t k = 0; k < pred.size(); ++k) {
                    x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = pred[k];
                }
                y.push_back(l.speed_kmh);
            }
        };
        svr::SvrConfig sc = cfg.svr;
        if (cfg.svr_grid_search && !val_idx.empty()) {
            RowMatrixD xt, xv;
            std::vector<double> yt, yv;
            svr_rows(train_idx, xt, yt);
            svr_rows(val_idx, xv, yv);
            const svr::GridResult g = svr::grid_search(xt, yt, xv, yv, cfg.svr_grid, cfg.svr);
            sc.c = g.best.c;
            sc.epsilon = g.best.epsilon;
        }
        out.audit.svr_point = {sc.c, sc.epsilon};
        std::vector<std::size_t> fit_idx = train_idx;
        fit_idx.insert(fit_idx.end(), val_idx.begin(), val_idx.end());
        std::sort(fit_idx.begin(), fit_idx.end());
        RowMatrixD xs;
        std::vector<double> ys;
        svr_rows(fit_idx, xs, ys);
        const svr::SvrModel speed_model = svr::svr_train(xs, ys, sc);

        for (std::size_t i : by_vehicle.at(test_vehicle)) {
            const auto& l = *clip_label[i];
            const std::size_t n_frames = lms[i].n_frames();
            std::vector<std::size_t> all(n_frames);
            std::iota(all.begin(), all.end(), std::size_t{0});
            TestRecord rec;
            rec.repetition = rep;
            rec.fold = fold;
            rec.clip_index = i;
            rec.clip = data.clips[i].clip;
            rec.vehicle = l.vehicle_id;
            rec.profile.values = predict_frames(model, lms[i], cfg.features, all);
            rec.profile.frame_times = features::frame_times(n_frames, lms[i].hop, lms[i].sample_rate);
            const std::size_t peak = argmax_frame(rec.profile.values);
            rec.label_t_cpa = l.t_cpa;
            rec.pred_t_cpa = rec.profile.frame_times[peak];
            rec.ma_max = rec.profile.values[peak];
            rec.detected = detect(rec.profile, cfg.detection).has_value();
            rec.true_speed = l.speed_kmh;
            rec.est_speed = svr::svr_predict(speed_model, select_window(rec.profile.values, peak, cfg.svr_window));
            out.tests.push_back(std::move(rec));
        }

        for (std::size_t j = 0; j < data.noise.size(); ++j) {
            const dsp::LogMelSpectrogram nl = norm.apply(data.noise[j].lms);
            std::vector<std::size_t> all(nl.n_frames());
            std::iota(all.begin(), all.end(), std::size_t{0});
            const std::vector<double> prof = predict_frames(model, nl, cfg.features, all);
            out.noise.push_back({rep, fold, j, data.noise[j].clip, *std::max_element(prof.begin(), prof.end())});
        }
    };

    parallel_for(n_jobs, cfg.threads ? cfg.threads : thread_count(), run_job);

    RunResult result;
    for (auto& o : outputs) {
        result.tests.insert(result.tests.end(), std::make_move_iterator(o.tests.begin()),
                            std::make_move_iterator(o.tests.end()));
        result.noise.insert(result.noise.end(), o.noise.begin(), o.noise.end());
        result.folds.push_back(std::move(o.audit));
    }
    return result;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median: empty input");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<features::RecordingLabel> correct_labels(const std::vector<features::RecordingLabel>& labels,
                                                     std::span<const std::pair<std::string, double>> predictions) {
    std::map<std::string, std::vector<double>> by_clip;
    for (const auto& [clip, t] : predictions) {
        by_clip[clip].push_back(t);
    }
    std::vector<features::RecordingLabel> out = labels;
    for (auto& l : out) {
        if (!l.has_vehicle) {
            continue;
        }
        auto it = by_clip.find(l.clip);
        if (it == by_clip.end() || it->second.empty()) {
            throw std::invalid_argument("correct_labels: no test predictions for clip " + l.clip);
        }
        l.t_cpa = median(it->second);
    }
    return out;
}

std::vector<features::RecordingLabel> correct_labels(const std::vector<features::RecordingLabel>& labels,
                                                     const RunResult& results) {
    std::vector<std::pair<std::string, double>> preds;
    preds.reserve(results.tests.size());
    for (const auto& t : results.tests) {
        preds.emplace_back(t.clip, t.pred_t_cpa);
    }
    return correct_labels(labels, preds);
}

ThresholdCalibration calibrate_threshold(std::span<const double> vehicle_maxima, std::span<const double> noise_maxima) {
    ThresholdCalibration cal;
    cal.gap = eval::separation_gap(vehicle_maxima, noise_maxima);
    if (cal.gap > 0.0) {
        const double lo = *std::max_element(noise_maxima.begin(), noise_maxima.end());
        const double hi = *std::min_element(vehicle_maxima.begin(), vehicle_maxima.end());
        cal.rule.threshold = 0.5 * (lo + hi);
        cal.errors = 0;
        return cal;
    }
    // overlap: scan thresholds that change the decision of some maximum
    std::vector<double> candidates(vehicle_maxima.begin(), vehicle_maxima.end());
    for (double n : noise_maxima) {
        candidates.push_back(n);
        candidates.push_back(std::nextafter(n, std::numeric_limits<double>::infinity()));
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::size_t best_err = std::numeric_limits<std::size_t>::max();
    for (double t : candidates) {
        std::size_t err = 0;
        for (double v : vehicle_maxima) {
            err += v < t ? 1 : 0;
        }
        for (double n : noise_maxima) {
            err += n >= t ? 1 : 0;
        }
        if (err < best_err) {
            best_err = err;
            cal.rule.threshold = t;
        }
    }
    cal.errors = best_err;
    return cal;
}

eval::MetricsBlock summarize(const RunResult& run, const std::string& label_set,
                             const std::vector<features::RecordingLabel>& labels,
                             const std::vector<features::RecordingLabel>& truth, const PipelineConfig& cfg) {
    if (run.tests.empty()) {
        throw std::invalid_argument("summarize: run has no test records");
    }
    eval::MetricsBlock m;
    m.label_set = label_set;
    m.repetitions = 0;
    std::vector<double> est, tru, pred_t, label_t;
    std::vector<std::string> veh;
    std::size_t detected = 0;
    for (const auto& t : run.tests) {
        est.push_back(t.est_speed);
        tru.push_back(t.true_speed);
        veh.push_back(t.vehicle);
        pred_t.push_back(t.pred_t_cpa);
        label_t.push_back(t.label_t_cpa);
        m.vehicle_maxima.push_back(t.ma_max);
        m.repetitions = std::max(m.repetitions, t.repetition + 1);
        detected += t.detected ? 1 : 0;
    }
    m.rmse = eval::rmse_table(est, tru, veh);
    m.classes = eval::classification_table(est, tru, veh, cfg.classes);
    if (pred_t.size() >= 2) {
        m.offsets = eval::detection_offset_stats(pred_t, label_t, cfg.offset_bin_width);
    }
    for (std::size_t i = 0; i < pred_t.size(); ++i) {
        m.offset_values.push_back(pred_t[i] - label_t[i]);
    }
    m.detection_rate = static_cast<double>(detected) / static_cast<double>(run.tests.size());

    if (!truth.empty()) {
        std::map<std::string, double> true_t;
        for (const auto& l : truth) {
            true_t[l.clip] = l.t_cpa;
        }
        std::vector<double> tt;
        for (const auto& t : run.tests) {
            tt.push_back(true_t.at(t.clip));
        }
        if (tt.size() >= 2) {
            m.offsets_vs_truth = eval::detection_offset_stats(pred_t, tt, cfg.offset_bin_width);
        }
        std::vector<double> a, b;
        for (const auto& l : labels) {
            if (l.has_vehicle && true_t.contains(l.clip)) {
                a.push_back(l.t_cpa);
                b.push_back(true_t.at(l.clip));
            }
        }
        if (!a.empty()) {
            m.label_error = eval::mean_abs_difference(a, b);
        }
    }

    for (const auto& n : run.noise) {
        (n.noise_index % 2 == 0 ? m.noise_maxima_calibration : m.noise_maxima_heldout).push_back(n.ma_max);
    }
    if (!m.noise_maxima_calibration.empty()) {
        const ThresholdCalibration cal = calibrate_threshold(m.vehicle_maxima, m.noise_maxima_calibration);
        m.separation_gap = cal.gap;
        m.threshold = cal.rule.threshold;
    } else {
        m.threshold = cfg.detection.threshold;
    }
    for (double v : m.noise_maxima_heldout) {
        m.heldout_false_alarms += v >= m.threshold ? 1 : 0;
    }
    for (double v : m.vehicle_maxima) {
        m.missed_vehicles += v < m.threshold ? 1 : 0;
    }
    return m;
}

ExperimentOutcome full_experiment(const PreparedDataset& data, const std::vector<features::RecordingLabel>& labels,
                                  const PipelineConfig& cfg) {
    ExperimentOutcome out;
    out.before = run_cv(data, labels, cfg);
    out.corrected_labels = correct_labels(labels, out.before);
    out.after = run_cv(data, out.corrected_labels, cfg);
    out.report.before = summarize(out.before, "noisy", labels, data.truth, cfg);
    out.report.after = summarize(out.after, "corrected", out.corrected_labels, data.truth, cfg);
    out.report.label_error_noisy = out.report.before.label_error;
    out.report.label_error_corrected = out.report.after.label_error;
    return out;
}

}  // namespace vspeed::pipeline
