#pragma once

#include "vspeed/dsp.hpp"
#include "vspeed/features.hpp"

#include <filesystem>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vspeed::dataio {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnsupportedFormat : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kLabelHeader = "clip,vehicle,speed_kmh,t_cpa_s,has_vehicle";

/// Writes through a temporary sibling file and renames it over `path`, so a
/// reader never observes a partially written file. If `writer` throws, the
/// original file is left untouched.
void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

/// Mono IEEE-float 32-bit WAV. Unknown chunks are skipped.
dsp::AudioClip read_wav(const std::filesystem::path& path);

/// Canonical 44-byte header followed by little-endian float samples.
void write_wav(const std::filesystem::path& path, const dsp::AudioClip& clip);

std::vector<features::RecordingLabel> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<features::RecordingLabel>& rows);

std::string read_text(const std::filesystem::path& path);

/// Splits one CSV line on commas. No quoting support; fields never contain commas.
std::vector<std::string> split_csv(const std::string& line);

}  // namespace vspeed::dataio
