#include "doctest.h"

#include "json.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome vspeed(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string("'") + VSPEED_CLI_PATH + "' " + args + " > /dev/null 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.err = slurp(err);
    return o;
}

struct Workspace {
    fs::path dir;
    explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }

    fs::path write_config(const std::string& name, const nlohmann::json& j) const {
        const fs::path p = dir / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }
};

nlohmann::json tiny_config(const fs::path& dir) {
    return {{"dataset", {{"root", (dir / "data").string()}, {"vehicles", 2}, {"passes_per_vehicle", 3}, {"noise_clips", 2}}},
            {"nn", {{"hidden", {8, 4}}, {"epochs", 2}, {"train_frame_step", 16}}},
            {"cv", {{"repetitions", 2}}},
            {"output", {{"dir", (dir / "out").string()}}},
            {"threads", 1}};
}

}  // namespace

TEST_CASE("unknown config keys exit with the config error code") {
    Workspace w("vspeed_cli_badkey");
    const auto cfg = w.write_config("bad.json", {{"nn", {{"epochz", 3}}}});
    const auto r = vspeed("run --config '" + cfg.string() + "'", w.dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("kind=config") != std::string::npos);
    CHECK(r.err.find("nn.epochz") != std::string::npos);
}

TEST_CASE("missing inputs exit with the I/O error code") {
    Workspace w("vspeed_cli_missing");
    auto j = tiny_config(w.dir);
    const auto cfg = w.write_config("c.json", j);
    const auto r = vspeed("run --config '" + cfg.string() + "' --labels noisy", w.dir);
    CHECK(r.code == 3);
    CHECK(r.err.find("error: kind=") == 0);
    const auto r2 = vspeed("run --config '" + (w.dir / "nope.json").string() + "'", w.dir);
    CHECK(r2.code != 0);
}

TEST_CASE("bad arguments are rejected") {
    Workspace w("vspeed_cli_args");
    CHECK(vspeed("run --labels sideways", w.dir).code != 0);
    CHECK(vspeed("frobnicate", w.dir).code != 0);
    CHECK(vspeed("--help", w.dir).code == 0);
}

TEST_CASE("synth, run, correct, run, report end to end") {
    Workspace w("vspeed_cli_flow");
    const auto cfg = w.write_config("c.json", tiny_config(w.dir));
    const std::string c = "--config '" + cfg.string() + "'";
    REQUIRE(vspeed("synth " + c, w.dir).code == 0);
    CHECK(fs::exists(w.dir / "data/labels_true.csv"));
    CHECK(fs::exists(w.dir / "data/labels_noisy.csv"));
    CHECK(fs::exists(w.dir / "data/clips/v00_p00.wav"));
    CHECK(fs::exists(w.dir / "data/noise/n01.wav"));

    REQUIRE(vspeed("run " + c + " --labels noisy", w.dir).code == 0);
    const auto metrics = nlohmann::json::parse(slurp(w.dir / "out/metrics_noisy.json"));
    CHECK(metrics.at("rmse_avg").is_number());
    CHECK(metrics.at("repetitions") == 2);
    CHECK(metrics.at("label_error").is_number());
    const std::string preds = slurp(w.dir / "out/predictions_noisy.csv");
    CHECK(preds.rfind("kind,repetition,fold,clip,vehicle,", 0) == 0);

    REQUIRE(vspeed("correct " + c + " --labels noisy", w.dir).code == 0);
    REQUIRE(fs::exists(w.dir / "out/labels_corrected.csv"));
    REQUIRE(vspeed("run " + c + " --labels corrected", w.dir).code == 0);
    REQUIRE(vspeed("report --before '" + (w.dir / "out/metrics_noisy.json").string() + "' --after '" +
                       (w.dir / "out/metrics_corrected.json").string() + "' --out '" + (w.dir / "report").string() + "'",
                   w.dir)
                .code == 0);
    for (const char* f : {"report.json", "table_rmse.csv", "table_classes.csv", "offsets_histogram.svg",
                          "ma_maxima_histogram.svg"}) {
        CHECK_MESSAGE(fs::exists(w.dir / "report" / f), f);
    }
    const auto rep = nlohmann::json::parse(slurp(w.dir / "report/report.json"));
    CHECK(rep.at("delta").at("rmse_avg").is_number());

    // identical seeds reproduce identical bytes
    auto j2 = tiny_config(w.dir);
    j2["output"]["dir"] = (w.dir / "out2").string();
    const auto cfg2 = w.write_config("c2.json", j2);
    REQUIRE(vspeed("run --config '" + cfg2.string() + "' --labels noisy", w.dir).code == 0);
    CHECK(slurp(w.dir / "out/predictions_noisy.csv") == slurp(w.dir / "out2/predictions_noisy.csv"));
    CHECK(slurp(w.dir / "out/metrics_noisy.json") == slurp(w.dir / "out2/metrics_noisy.json"));
}
