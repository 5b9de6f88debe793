#pragma once

#include "vspeed/pipeline.hpp"
#include "vspeed/synth.hpp"

#include "json.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace vspeed::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Where the recordings come from: generated by `synth`, or an existing
/// directory of WAV files plus label CSVs (same layout as `synth` output).
struct ExperimentConfig {
    std::filesystem::path dataset_root = "data";
    synth::DatasetConfig synth;
    pipeline::PipelineConfig pipeline;
    std::filesystem::path output_dir = "out";
};

/// Sections: dataset, dsp, features, nn, svr, cv, detection, eval, output,
/// plus top-level "threads". Every key is optional; defaults are the
/// reference settings. Unknown keys raise ConfigError naming the key path.
ExperimentConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

ExperimentConfig load(const std::filesystem::path& path);

}  // namespace vspeed::config
