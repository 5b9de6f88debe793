// Command-line front-end: synth, run, correct, report.

#include "vspeed/commands.hpp"
#include "vspeed/config.hpp"
#include "vspeed/dataio.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

using vspeed::config::ExperimentConfig;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> repetitions;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Experiment config (JSON); defaults apply when omitted");
    cmd->add_option("--seed", c.seed, "Override the seed (dataset seed for synth, CV seed otherwise)");
    cmd->add_option("--repetitions", c.repetitions, "Override the number of CV repetitions")
        ->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const Common& c, bool out_is_dataset) {
    ExperimentConfig cfg = c.config.empty() ? vspeed::config::from_json(nlohmann::json::object())
                                            : vspeed::config::load(c.config);
    if (!c.out.empty()) {
        (out_is_dataset ? cfg.dataset_root : cfg.output_dir) = c.out;
    }
    if (c.seed) {
        (out_is_dataset ? cfg.synth.seed : cfg.pipeline.plan.seed) = *c.seed;
    }
    if (c.repetitions) {
        cfg.pipeline.plan.repetitions = *c.repetitions;
    }
    return cfg;
}

int fail(const char* kind, const std::string& message, int code) {
    std::cerr << "error: kind=" << kind << " message=\"" << message << "\"\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vehicle detection and speed estimation from pass-by audio"};
    app.require_subcommand(1);

    Common synth_opts, run_opts, correct_opts;
    std::string labels = "noisy";
    std::string correct_labels = "noisy";
    std::string before, after, report_out = "out";

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset (WAVs + label CSVs)");
    add_common(synth, synth_opts);
    synth->add_option("--out", synth_opts.out, "Dataset directory (overrides dataset.root)");

    CLI::App* run = app.add_subcommand("run", "Cross-validated training and evaluation on one label set");
    add_common(run, run_opts);
    run->add_option("--out", run_opts.out, "Output directory (overrides output.dir)");
    run->add_option("--labels", labels, "Label set: noisy, true or corrected")
        ->check(CLI::IsMember({"noisy", "true", "corrected"}));

    CLI::App* correct = app.add_subcommand("correct", "Median-correct labels from test-phase predictions");
    add_common(correct, correct_opts);
    correct->add_option("--out", correct_opts.out, "Output directory holding predictions_<set>.csv");
    correct->add_option("--labels", correct_labels, "Label set whose predictions are used")
        ->check(CLI::IsMember({"noisy", "true"}));

    CLI::App* rep = app.add_subcommand("report", "Combine before/after metrics into tables and figures");
    rep->add_option("--before", before, "Metrics JSON of the baseline run")->required();
    rep->add_option("--after", after, "Metrics JSON of the corrected run")->required();
    rep->add_option("--out", report_out, "Report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) {
            vspeed::commands::cmd_synth(resolve(synth_opts, true), std::cout);
        } else if (run->parsed()) {
            vspeed::commands::cmd_run(resolve(run_opts, false), labels, std::cout);
        } else if (correct->parsed()) {
            vspeed::commands::cmd_correct(resolve(correct_opts, false), correct_labels, std::cout);
        } else if (rep->parsed()) {
            vspeed::commands::cmd_report(before, after, report_out, std::cout);
        }
    } catch (const vspeed::config::ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const vspeed::dataio::IoError& e) {
        return fail("io", e.what(), 3);
    } catch (const vspeed::dataio::ParseError& e) {
        return fail("parse", e.what(), 3);
    } catch (const vspeed::dataio::UnsupportedFormat& e) {
        return fail("format", e.what(), 3);
    } catch (const std::invalid_argument& e) {
        return fail("invalid-argument", e.what(), 4);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), 1);
    }
    return 0;
}
