#include "vspeed/commands.hpp"

#include "vspeed/dataio.hpp"
#include "vspeed/report.hpp"
#include "vspeed/synth.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vspeed::commands {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPredictionsHeader =
    "kind,repetition,fold,clip,vehicle,label_t_cpa_s,pred_t_cpa_s,ma_max,detected,true_speed_kmh,est_speed_kmh";

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_label_set(const std::string& s) {
    if (s != "noisy" && s != "true" && s != "corrected") {
        throw std::invalid_argument("unknown label set '" + s + "' (expected noisy, true or corrected)");
    }
}

void write_text(const fs::path& path, const std::string& text) {
    dataio::atomic_write(path, [&](std::ostream& o) { o << text; });
}

void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw dataio::IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

}  // namespace

fs::path labels_path(const config::ExperimentConfig& cfg, const std::string& label_set) {
    check_label_set(label_set);
    if (label_set == "corrected") {
        return cfg.output_dir / "labels_corrected.csv";
    }
    return cfg.dataset_root / ("labels_" + label_set + ".csv");
}

SynthSummary cmd_synth(const config::ExperimentConfig& cfg, std::ostream& log) {
    const synth::SynthDataset ds = synth::make_dataset(cfg.synth);
    const fs::path& root = cfg.dataset_root;
    make_dirs(root / "clips");
    make_dirs(root / "noise");
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        dataio::write_wav(root / ds.labels_true[i].clip, ds.clips[i]);
    }
    std::vector<features::RecordingLabel> noise_rows;
    for (std::size_t j = 0; j < ds.noise_clips.size(); ++j) {
        dataio::write_wav(root / ds.noise_ids[j], ds.noise_clips[j]);
        features::RecordingLabel l;
        l.clip = ds.noise_ids[j];
        l.vehicle_id = "none";
        l.has_vehicle = false;
        noise_rows.push_back(l);
    }
    auto with_noise = [&](std::vector<features::RecordingLabel> rows) {
        rows.insert(rows.end(), noise_rows.begin(), noise_rows.end());
        return rows;
    };
    dataio::write_labels(root / "labels_true.csv", with_noise(ds.labels_true));
    dataio::write_labels(root / "labels_noisy.csv", with_noise(ds.labels_noisy));
    log << "synth: wrote " << ds.clips.size() << " vehicle clips and " << ds.noise_clips.size() << " noise clips to "
        << root.string() << '\n';
    return {ds.clips.size(), ds.noise_clips.size()};
}

std::string predictions_csv(const pipeline::RunResult& run) {
    std::ostringstream o;
    o << kPredictionsHeader << '\n';
    for (const auto& t : run.tests) {
        o << "vehicle," << t.repetition << ',' << t.fold << ',' << t.clip << ',' << t.vehicle << ','
          << num(t.label_t_cpa) << ',' << num(t.pred_t_cpa) << ',' << num(t.ma_max) << ',' << (t.detected ? 1 : 0)
          << ',' << num(t.true_speed) << ',' << num(t.est_speed) << '\n';
    }
    for (const auto& n : run.noise) {
        o << "noise," << n.repetition << ',' << n.fold << ',' << n.clip << ",,,," << num(n.ma_max) << ",,,\n";
    }
    return o.str();
}

std::vector<std::pair<std::string, double>> read_predictions(const fs::path& path) {
    std::istringstream in(dataio::read_text(path));
    std::string line;
    if (!std::getline(in, line) || dataio::split_csv(line) != dataio::split_csv(kPredictionsHeader)) {
        throw dataio::ParseError(path.string() + ": not a predictions file (bad header)");
    }
    std::vector<std::pair<std::string, double>> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto f = dataio::split_csv(line);
        if (f.size() != 11) {
            throw dataio::ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 11 fields");
        }
        if (f[0] != "vehicle") {
            continue;
        }
        try {
            std::size_t used = 0;
            const double t = std::stod(f[6], &used);
            if (used != f[6].size()) {
                throw std::invalid_argument("trailing characters");
            }
            out.emplace_back(f[3], t);
        } catch (const std::exception&) {
            throw dataio::ParseError(path.string() + ":" + std::to_string(line_no) + ": bad pred_t_cpa_s '" + f[6] +
                                     "'");
        }
    }
    return out;
}

RunFiles cmd_run(const config::ExperimentConfig& cfg, const std::string& label_set, std::ostream& log) {
    const fs::path label_file = labels_path(cfg, label_set);
    const auto labels = dataio::read_labels(label_file);
    pipeline::PreparedDataset data = pipeline::prepare_directory(cfg.dataset_root, labels, cfg.pipeline);
    const fs::path truth_file = cfg.dataset_root / "labels_true.csv";
    if (fs::exists(truth_file)) {
        data.truth = dataio::read_labels(truth_file);
    }
    log << "run: " << data.clips.size() << " vehicle clips, " << data.noise.size() << " noise clips, "
        << cfg.pipeline.plan.repetitions << " repetitions, labels " << label_file.string() << '\n';
    const pipeline::RunResult run = pipeline::run_cv(data, labels, cfg.pipeline);
    const eval::MetricsBlock m = pipeline::summarize(run, label_set, labels, data.truth, cfg.pipeline);

    make_dirs(cfg.output_dir);
    RunFiles files{cfg.output_dir / ("predictions_" + label_set + ".csv"),
                   cfg.output_dir / ("metrics_" + label_set + ".json")};
    write_text(files.predictions, predictions_csv(run));
    write_text(files.metrics, report::to_json(m).dump(2) + "\n");
    char buf[160];
    std::snprintf(buf, sizeof buf, "run: rmse_avg %.3f km/h, exact class %.1f%%, offset std %.4f s\n",
                  m.rmse.average, m.classes.average.exact, m.offsets.std);
    log << buf;
    return files;
}

fs::path cmd_correct(const config::ExperimentConfig& cfg, const std::string& label_set, std::ostream& log) {
    const auto labels = dataio::read_labels(labels_path(cfg, label_set));
    const auto preds = read_predictions(cfg.output_dir / ("predictions_" + label_set + ".csv"));
    const auto corrected = pipeline::correct_labels(labels, preds);
    make_dirs(cfg.output_dir);
    const fs::path out = cfg.output_dir / "labels_corrected.csv";
    dataio::write_labels(out, corrected);
    log << "correct: " << preds.size() << " test predictions -> " << out.string() << '\n';
    return out;
}

void cmd_report(const fs::path& before, const fs::path& after, const fs::path& out_dir, std::ostream& log) {
    auto load = [](const fs::path& p) {
        try {
            return report::metrics_from_json(nlohmann::json::parse(dataio::read_text(p)));
        } catch (const nlohmann::json::parse_error& e) {
            throw dataio::ParseError(p.string() + ": " + e.what());
        }
    };
    eval::ExperimentReport r;
    r.before = load(before);
    r.after = load(after);
    r.label_error_noisy = r.before.label_error;
    r.label_error_corrected = r.after.label_error;
    make_dirs(out_dir);
    write_text(out_dir / "report.json", report::combined_report(r).dump(2) + "\n");
    write_text(out_dir / "table_rmse.csv", report::rmse_table_csv(r.before, r.after));
    write_text(out_dir / "table_classes.csv", report::class_table_csv(r.before, r.after));
    write_text(out_dir / "offsets_histogram.svg", report::offset_histogram_svg(r.before, r.after));
    write_text(out_dir / "ma_maxima_histogram.svg", report::maxima_histogram_svg(r.after));
    log << "report: written to " << out_dir.string() << '\n';
}

}  // namespace vspeed::commands
