#include "vspeed/config.hpp"

#include "vspeed/dataio.hpp"

#include <algorithm>
#include <set>

namespace vspeed::config {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object section and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + path_ + "' must be an object");
        }
    }

    template <typename T>
    void get(const char* key, T& target) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            target = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: invalid value for '" + name(key) + "'");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.contains(key) ? j_.at(key) : empty(), name(key));
    }

    const json& raw(const char* key) const { return j_.at(key); }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.contains(k)) {
                throw ConfigError("config: unknown key '" + name(k) + "'");
            }
        }
    }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ConfigError("config: " + what);
    }
}

}  // namespace

ExperimentConfig from_json(const json& j) {
    ExperimentConfig cfg;
    auto& p = cfg.pipeline;
    auto& d = cfg.synth;
    Section top(j, "");

    {
        Section s = top.sub("dataset");
        std::string root = cfg.dataset_root.string();
        s.get("root", root);
        cfg.dataset_root = root;
        s.get("vehicles", d.vehicles);
        s.get("passes_per_vehicle", d.passes_per_vehicle);
        s.get("noise_clips", d.noise_clips);
        s.get("speed_min", d.speed_min);
        s.get("speed_max", d.speed_max);
        s.get("t_cpa_min", d.t_cpa_min);
        s.get("t_cpa_max", d.t_cpa_max);
        s.get("d_cpa_min", d.d_cpa_min);
        s.get("d_cpa_max", d.d_cpa_max);
        s.get("snr_db_min", d.snr_db_min);
        s.get("snr_db_max", d.snr_db_max);
        s.get("seed", d.seed);
        s.get("duration", d.duration);
        s.get("sample_rate", d.sample_rate);
        Section ln = s.sub("label_noise");
        ln.get("per_direction_bias", d.label_noise.per_direction_bias);
        ln.get("jitter_std", d.label_noise.jitter_std);
        ln.get("seed", d.label_noise.seed);
        ln.finish();
        s.finish();
        require(d.vehicles >= 1 && d.passes_per_vehicle >= 1 && d.noise_clips >= 0, "dataset counts must be positive");
        require(d.duration > 0.0 && d.sample_rate > 0, "dataset duration and sample_rate must be positive");
        require(d.label_noise.jitter_std >= 0.0, "dataset.label_noise.jitter_std must be non-negative");
        p.sample_rate = d.sample_rate;
    }
    {
        Section s = top.sub("dsp");
        s.get("window_len", p.stft.window_len);
        s.get("hop", p.stft.hop);
        s.get("n_mel", p.mel.n_mel);
        s.get("f_min", p.mel.f_min);
        s.get("f_max", p.mel.f_max);
        s.finish();
        require(p.stft.window_len >= 2 && p.stft.hop >= 1, "dsp.window_len and dsp.hop must be positive");
        require(p.mel.n_mel >= 1 && p.mel.f_min >= 0.0 && p.mel.f_min < p.mel.f_max, "invalid mel settings");
        p.features.n_mel = p.mel.n_mel;
    }
    {
        Section s = top.sub("features");
        s.get("q_frames", p.features.q_frames);
        s.get("stride", p.features.stride);
        s.get("beta", p.ma.beta);
        s.get("d_cpa", p.ma.d_cpa);
        s.finish();
        require(p.features.q_frames >= 1 && p.features.stride >= 1, "features.q_frames and features.stride must be positive");
        require(p.ma.beta > 0.0 && p.ma.d_cpa > 0.0, "features.beta and features.d_cpa must be positive");
    }
    {
        Section s = top.sub("nn");
        s.get("hidden", p.hidden);
        s.get("epochs", p.train.epochs);
        s.get("l2_factor", p.train.l2_factor);
        s.get("learning_rate", p.train.learning_rate);
        s.get("batch_size", p.train.batch_size);
        s.get("beta1", p.train.beta1);
        s.get("beta2", p.train.beta2);
        s.get("adam_epsilon", p.train.adam_epsilon);
        s.get("shuffle", p.train.shuffle);
        s.get("train_frame_step", p.train_frame_step);
        s.finish();
        require(p.train.epochs >= 0 && p.train.batch_size >= 1 && p.train.learning_rate > 0.0 && p.train.l2_factor >= 0.0,
                "invalid nn training settings");
        require(p.train_frame_step >= 1, "nn.train_frame_step must be positive");
        for (std::size_t h : p.hidden) {
            require(h >= 1, "nn.hidden sizes must be positive");
        }
    }
    {
        Section s = top.sub("svr");
        s.get("c", p.svr.c);
        s.get("epsilon", p.svr.epsilon);
        if (s.has("gamma") && !s.raw("gamma").is_null()) {
            double g = 0.0;
            s.get("gamma", g);
            require(g > 0.0, "svr.gamma must be positive");
            p.svr.gamma = g;
        }
        s.get("tolerance", p.svr.tolerance);
        s.get("max_iterations", p.svr.max_iterations);
        s.get("window", p.svr_window);
        s.get("grid_search", p.svr_grid_search);
        if (s.has("grid")) {
            Section g = s.sub("grid");
            std::vector<double> cs, eps;
            g.get("c", cs);
            g.get("epsilon", eps);
            g.finish();
            require(!cs.empty() && !eps.empty(), "svr.grid needs non-empty c and epsilon lists");
            p.svr_grid.clear();
            for (double c : cs) {
                for (double e : eps) {
                    p.svr_grid.push_back({c, e});
                }
            }
        }
        s.finish();
        require(p.svr.c > 0.0 && p.svr.epsilon >= 0.0 && p.svr.tolerance > 0.0, "invalid svr settings");
        require(p.svr_window % 2 == 1, "svr.window must be odd");
    }
    {
        Section s = top.sub("cv");
        s.get("repetitions", p.plan.repetitions);
        s.get("val_fraction", p.plan.val_fraction);
        s.get("seed", p.plan.seed);
        s.finish();
        require(p.plan.repetitions >= 1, "cv.repetitions must be positive");
        require(p.plan.val_fraction >= 0.0 && p.plan.val_fraction < 1.0, "cv.val_fraction must lie in [0, 1)");
    }
    {
        Section s = top.sub("detection");
        s.get("threshold", p.detection.threshold);
        s.finish();
        require(p.detection.threshold > 0.0, "detection.threshold must be positive");
    }
    {
        Section s = top.sub("eval");
        s.get("class_start", p.classes.start);
        s.get("class_step", p.classes.step);
        s.get("n_classes", p.classes.n_classes);
        s.get("offset_bin_width", p.offset_bin_width);
        s.finish();
        require(p.classes.step > 0.0 && p.classes.n_classes >= 1 && p.offset_bin_width > 0.0, "invalid eval settings");
    }
    {
        Section s = top.sub("output");
        std::string dir = cfg.output_dir.string();
        s.get("dir", dir);
        cfg.output_dir = dir;
        s.finish();
    }
    top.get("threads", p.threads);
    top.finish();
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    const auto& p = cfg.pipeline;
    const auto& d = cfg.synth;
    std::vector<double> cs, eps;
    for (const auto& g : p.svr_grid) {
        if (std::find(cs.begin(), cs.end(), g.c) == cs.end()) {
            cs.push_back(g.c);
        }
        if (std::find(eps.begin(), eps.end(), g.epsilon) == eps.end()) {
            eps.push_back(g.epsilon);
        }
    }
    json j;
    j["dataset"] = {{"root", cfg.dataset_root.string()},
                    {"vehicles", d.vehicles},
                    {"passes_per_vehicle", d.passes_per_vehicle},
                    {"noise_clips", d.noise_clips},
                    {"speed_min", d.speed_min},
                    {"speed_max", d.speed_max},
                    {"t_cpa_min", d.t_cpa_min},
                    {"t_cpa_max", d.t_cpa_max},
                    {"d_cpa_min", d.d_cpa_min},
                    {"d_cpa_max", d.d_cpa_max},
                    {"snr_db_min", d.snr_db_min},
                    {"snr_db_max", d.snr_db_max},
                    {"seed", d.seed},
                    {"duration", d.duration},
                    {"sample_rate", d.sample_rate},
                    {"label_noise",
                     {{"per_direction_bias", d.label_noise.per_direction_bias},
                      {"jitter_std", d.label_noise.jitter_std},
                      {"seed", d.label_noise.seed}}}};
    j["dsp"] = {{"window_len", p.stft.window_len},
                {"hop", p.stft.hop},
                {"n_mel", p.mel.n_mel},
                {"f_min", p.mel.f_min},
                {"f_max", p.mel.f_max}};
    j["features"] = {{"q_frames", p.features.q_frames},
                     {"stride", p.features.stride},
                     {"beta", p.ma.beta},
                     {"d_cpa", p.ma.d_cpa}};
    j["nn"] = {{"hidden", p.hidden},
               {"epochs", p.train.epochs},
               {"l2_factor", p.train.l2_factor},
               {"learning_rate", p.train.learning_rate},
               {"batch_size", p.train.batch_size},
               {"beta1", p.train.beta1},
               {"beta2", p.train.beta2},
               {"adam_epsilon", p.train.adam_epsilon},
               {"shuffle", p.train.shuffle},
               {"train_frame_step", p.train_frame_step}};
    j["svr"] = {{"c", p.svr.c},
                {"epsilon", p.svr.epsilon},
                {"gamma", p.svr.gamma ? json(*p.svr.gamma) : json(nullptr)},
                {"tolerance", p.svr.tolerance},
                {"max_iterations", p.svr.max_iterations},
                {"window", p.svr_window},
                {"grid_search", p.svr_grid_search},
                {"grid", {{"c", cs}, {"epsilon", eps}}}};
    j["cv"] = {{"repetitions", p.plan.repetitions}, {"val_fraction", p.plan.val_fraction}, {"seed", p.plan.seed}};
    j["detection"] = {{"threshold", p.detection.threshold}};
    j["eval"] = {{"class_start", p.classes.start},
                 {"class_step", p.classes.step},
                 {"n_classes", p.classes.n_classes},
                 {"offset_bin_width", p.offset_bin_width}};
    j["output"] = {{"dir", cfg.output_dir.string()}};
    j["threads"] = p.threads;
    return j;
}

ExperimentConfig load(const std::filesystem::path& path) {
    const std::string text = dataio::read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace vspeed::config
