#include "vspeed/dataio.hpp"

#include <unistd.h>

#include <array>
#include <atomic>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace vspeed::dataio {

namespace {

constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t get_u16(const std::vector<unsigned char>& b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw ParseError(where + ": cannot parse number '" + s + "'");
    }
    return v;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
        s.pop_back();
    }
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) {
        ++i;
    }
    return s.substr(i);
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer) {
    static std::atomic<unsigned> counter{0};
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    try {
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw IoError("cannot open " + tmp.string() + " for writing");
            }
            writer(out);
            out.flush();
            if (!out) {
                throw IoError("write failed for " + tmp.string());
            }
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) {
            throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
        }
    } catch (...) {
        std::error_code ignored;
        std::filesystem::remove(tmp, ignored);
        throw;
    }
}

dsp::AudioClip read_wav(const std::filesystem::path& path) {
    const std::vector<unsigned char> b = read_bytes(path);
    const std::string name = path.string();
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
        throw ParseError(name + ": not a RIFF/WAVE file");
    }

    bool have_fmt = false;
    std::uint16_t channels = 0;
    std::uint16_t bits = 0;
    std::uint16_t tag = 0;
    std::uint32_t rate = 0;
    std::size_t off = 12;
    while (off + 8 <= b.size()) {
        const std::string id(reinterpret_cast<const char*>(&b[off]), 4);
        const std::uint32_t size = get_u32(b, off + 4);
        const std::size_t body = off + 8;
        if (id == "fmt ") {
            if (size < 16 || body + size > b.size()) {
                throw ParseError(name + ": truncated fmt chunk at offset " + std::to_string(off));
            }
            tag = get_u16(b, body);
            channels = get_u16(b, body + 2);
            rate = get_u32(b, body + 4);
            bits = get_u16(b, body + 14);
            if (tag == kFormatExtensible && size >= 40) {
                tag = get_u16(b, body + 24);  // first bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) {
                throw ParseError(name + ": data chunk before fmt chunk at offset " + std::to_string(off));
            }
            if (tag != kFormatFloat || bits != 32) {
                throw UnsupportedFormat(name + ": expected 32-bit IEEE float samples (format 3), got format " +
                                        std::to_string(tag) + " with " + std::to_string(bits) + " bits");
            }
            if (channels != 1) {
                throw UnsupportedFormat(name + ": expected mono, got " + std::to_string(channels) + " channels");
            }
            if (body + size > b.size()) {
                throw ParseError(name + ": truncated data chunk at offset " + std::to_string(body) + ": header declares " +
                                 std::to_string(size) + " bytes, " + std::to_string(b.size() - body) + " available");
            }
            if (size % 4 != 0) {
                throw ParseError(name + ": data chunk at offset " + std::to_string(body) +
                                 " is not a whole number of samples");
            }
            dsp::AudioClip clip;
            clip.sample_rate = static_cast<int>(rate);
            clip.samples.resize(size / 4);
            for (std::size_t i = 0; i < clip.samples.size(); ++i) {
                clip.samples[i] = std::bit_cast<float>(get_u32(b, body + 4 * i));
            }
            return clip;
        }
        off = body + size + (size & 1u);
    }
    throw ParseError(name + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const dsp::AudioClip& clip) {
    if (clip.sample_rate <= 0) {
        throw std::invalid_argument("write_wav: sample rate must be positive");
    }
    const auto n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 4;
    std::string buf;
    buf.reserve(44 + data_bytes);
    buf += "RIFF";
    put_u32(buf, 36 + data_bytes);
    buf += "WAVEfmt ";
    put_u32(buf, 16);
    put_u16(buf, kFormatFloat);
    put_u16(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(clip.sample_rate));
    put_u32(buf, static_cast<std::uint32_t>(clip.sample_rate) * 4);
    put_u16(buf, 4);
    put_u16(buf, 32);
    buf += "data";
    put_u32(buf, data_bytes);
    for (float s : clip.samples) {
        put_u32(buf, std::bit_cast<std::uint32_t>(s));
    }
    atomic_write(path, [&](std::ostream& os) { os.write(buf.data(), static_cast<std::streamsize>(buf.size())); });
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        out.push_back(trim(field));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<features::RecordingLabel> read_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open label file " + path.string());
    }
    const std::string name = path.string();
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(name + ": empty label file");
    }
    const std::vector<std::string> header = split_csv(trim(line));
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        col[header[i]] = i;
    }
    const std::array<const char*, 5> required{"clip", "vehicle", "speed_kmh", "t_cpa_s", "has_vehicle"};
    for (const char* r : required) {
        if (!col.contains(r)) {
            throw ParseError(name + ": missing column '" + std::string(r) + "'");
        }
    }

    std::vector<features::RecordingLabel> rows;
    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = name + ":" + std::to_string(line_no);
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != header.size()) {
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(f.size()));
        }
        features::RecordingLabel r;
        r.clip = f[col["clip"]];
        r.vehicle_id = f[col["vehicle"]];
        r.speed_kmh = parse_double(f[col["speed_kmh"]], where);
        r.t_cpa = parse_double(f[col["t_cpa_s"]], where);
        const std::string& hv = f[col["has_vehicle"]];
        if (hv == "1" || hv == "true") {
            r.has_vehicle = true;
        } else if (hv == "0" || hv == "false") {
            r.has_vehicle = false;
        } else {
            throw ParseError(where + ": has_vehicle must be 0 or 1, got '" + hv + "'");
        }
        if (r.clip.empty()) {
            throw ParseError(where + ": empty clip path");
        }
        if (!seen.insert(r.clip).second) {
            throw ParseError(where + ": duplicate clip '" + r.clip + "'");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_labels(const std::filesystem::path& path, const std::vector<features::RecordingLabel>& rows) {
    atomic_write(path, [&](std::ostream& os) {
        os << kLabelHeader << '\n';
        char buf[64];
        for (const auto& r : rows) {
            os << r.clip << ',' << r.vehicle_id << ',';
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.speed_kmh, r.t_cpa);
            os << buf << ',' << (r.has_vehicle ? 1 : 0) << '\n';
        }
    });
}

}  // namespace vspeed::dataio
