#include "vspeed/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vspeed::report {

using nlohmann::json;

namespace {

json class_row_json(const eval::ClassRow& r) {
    return {{"vehicle", r.vehicle},   {"count", r.count},     {"exact", r.exact},          {"off_one", r.off_one},
            {"off_two", r.off_two},   {"off_more", r.off_more}, {"within_one", r.within_one}};
}

eval::ClassRow class_row_from(const json& j) {
    eval::ClassRow r;
    r.vehicle = j.at("vehicle").get<std::string>();
    r.count = j.at("count").get<std::size_t>();
    r.exact = j.at("exact").get<double>();
    r.off_one = j.at("off_one").get<double>();
    r.off_two = j.at("off_two").get<double>();
    r.off_more = j.at("off_more").get<double>();
    r.within_one = j.at("within_one").get<double>();
    return r;
}

json offsets_json(const eval::OffsetStats& s) {
    return {{"mean", s.mean},
            {"std", s.std},
            {"count", s.count},
            {"histogram",
             {{"bin_width", s.histogram.bin_width},
              {"first_bin", s.histogram.first_bin},
              {"counts", s.histogram.counts}}}};
}

eval::OffsetStats offsets_from(const json& j) {
    eval::OffsetStats s;
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
    s.count = j.at("count").get<std::size_t>();
    const json& h = j.at("histogram");
    s.histogram.bin_width = h.at("bin_width").get<double>();
    s.histogram.first_bin = h.at("first_bin").get<long>();
    s.histogram.counts = h.at("counts").get<std::vector<std::size_t>>();
    return s;
}

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_double(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

json delta(const std::optional<double>& before, const std::optional<double>& after) {
    if (before && after) {
        return *after - *before;
    }
    return nullptr;
}

std::string fmt(double v, const char* spec = "%.4f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Series {
    std::string name;
    std::string color;
    std::map<long, std::size_t> bins;  // bin index -> count
};

constexpr double kWidth = 640.0;
constexpr double kHeight = 360.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

// Overlaid bar histogram on a shared bin grid; `band` shades an x interval.
std::string bar_chart(const std::string& title, const std::string& x_label, double bin_width,
                      const std::vector<Series>& series, std::optional<std::pair<double, double>> band) {
    long lo = 0, hi = 0;
    std::size_t max_count = 1;
    bool any = false;
    for (const auto& s : series) {
        for (const auto& [b, c] : s.bins) {
            lo = any ? std::min(lo, b) : b;
            hi = any ? std::max(hi, b) : b;
            any = true;
            max_count = std::max(max_count, c);
        }
    }
    double x0 = (static_cast<double>(lo) - 0.5) * bin_width;
    double x1 = (static_cast<double>(hi) + 0.5) * bin_width;
    if (band) {
        x0 = std::min(x0, band->first);
        x1 = std::max(x1, band->second);
    }
    if (!(x1 > x0)) {
        x1 = x0 + bin_width;
    }
    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double c) { return kTop + ph - c / static_cast<double>(max_count) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
    if (band && band->second > band->first) {
        o << "<rect x=\"" << fmt(sx(band->first), "%.2f") << "\" y=\"" << kTop << "\" width=\""
          << fmt(sx(band->second) - sx(band->first), "%.2f") << "\" height=\"" << ph
          << "\" fill=\"green\" fill-opacity=\"0.2\" stroke=\"green\"/>\n";
    }
    const double bar_w = bin_width / static_cast<double>(std::max<std::size_t>(series.size(), 1));
    for (std::size_t k = 0; k < series.size(); ++k) {
        for (const auto& [b, c] : series[k].bins) {
            const double left = (static_cast<double>(b) - 0.5) * bin_width + static_cast<double>(k) * bar_w;
            o << "<rect x=\"" << fmt(sx(left), "%.2f") << "\" y=\"" << fmt(sy(static_cast<double>(c)), "%.2f")
              << "\" width=\"" << fmt(std::max(sx(left + bar_w) - sx(left), 0.5), "%.2f") << "\" height=\""
              << fmt(kTop + ph - sy(static_cast<double>(c)), "%.2f") << "\" fill=\"" << series[k].color
              << "\" fill-opacity=\"0.8\"/>\n";
        }
    }
    // axes and ticks
    o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
      << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double x = x0 + (x1 - x0) * i / 4.0;
        o << "<text x=\"" << fmt(sx(x), "%.2f") << "\" y=\"" << kTop + ph + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(x, "%.3g") << "</text>\n";
        const double c = static_cast<double>(max_count) * i / 4.0;
        o << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(sy(c) + 4, "%.2f")
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(c, "%.3g") << "</text>\n";
    }
    o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(x_label)
      << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double y = kTop + 14.0 * static_cast<double>(k);
        o << "<rect x=\"" << kLeft + pw - 110 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
          << series[k].color << "\"/>\n";
        o << "<text x=\"" << kLeft + pw - 95 << "\" y=\"" << y + 9
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(series[k].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::map<long, std::size_t> bins_of(const eval::Histogram& h) {
    std::map<long, std::size_t> out;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        if (h.counts[i] > 0) {
            out[h.first_bin + static_cast<long>(i)] = h.counts[i];
        }
    }
    return out;
}

std::map<long, std::size_t> bins_of(const std::vector<double>& values, double width) {
    std::map<long, std::size_t> out;
    for (double v : values) {
        ++out[static_cast<long>(std::floor(v / width + 0.5))];
    }
    return out;
}

}  // namespace

json to_json(const eval::MetricsBlock& m) {
    json rmse_rows = json::array();
    for (const auto& r : m.rmse.rows) {
        rmse_rows.push_back({{"vehicle", r.vehicle}, {"count", r.count}, {"rmse", r.rmse}});
    }
    json class_rows = json::array();
    for (const auto& r : m.classes.rows) {
        class_rows.push_back(class_row_json(r));
    }
    json j;
    j["label_set"] = m.label_set;
    j["repetitions"] = m.repetitions;
    j["rmse_avg"] = m.rmse.average;
    j["rmse_per_vehicle"] = rmse_rows;
    j["classes"] = {{"rows", class_rows}, {"average", class_row_json(m.classes.average)}};
    j["offsets"] = offsets_json(m.offsets);
    j["offset_values"] = m.offset_values;
    j["offsets_vs_truth"] = m.offsets_vs_truth ? offsets_json(*m.offsets_vs_truth) : json(nullptr);
    j["label_error"] = opt(m.label_error);
    j["vehicle_maxima"] = m.vehicle_maxima;
    j["noise_maxima_calibration"] = m.noise_maxima_calibration;
    j["noise_maxima_heldout"] = m.noise_maxima_heldout;
    j["separation_gap"] = opt(m.separation_gap);
    j["threshold"] = m.threshold;
    j["heldout_false_alarms"] = m.heldout_false_alarms;
    j["missed_vehicles"] = m.missed_vehicles;
    j["detection_rate"] = m.detection_rate;
    return j;
}

eval::MetricsBlock metrics_from_json(const json& j) {
    eval::MetricsBlock m;
    try {
        m.label_set = j.at("label_set").get<std::string>();
        m.repetitions = j.at("repetitions").get<int>();
        m.rmse.average = j.at("rmse_avg").get<double>();
        for (const auto& r : j.at("rmse_per_vehicle")) {
            m.rmse.rows.push_back(
                {r.at("vehicle").get<std::string>(), r.at("count").get<std::size_t>(), r.at("rmse").get<double>()});
        }
        for (const auto& r : j.at("classes").at("rows")) {
            m.classes.rows.push_back(class_row_from(r));
        }
        m.classes.average = class_row_from(j.at("classes").at("average"));
        m.offsets = offsets_from(j.at("offsets"));
        m.offset_values = j.at("offset_values").get<std::vector<double>>();
        if (!j.at("offsets_vs_truth").is_null()) {
            m.offsets_vs_truth = offsets_from(j.at("offsets_vs_truth"));
        }
        m.label_error = opt_double(j, "label_error");
        m.vehicle_maxima = j.at("vehicle_maxima").get<std::vector<double>>();
        m.noise_maxima_calibration = j.at("noise_maxima_calibration").get<std::vector<double>>();
        m.noise_maxima_heldout = j.at("noise_maxima_heldout").get<std::vector<double>>();
        m.separation_gap = opt_double(j, "separation_gap");
        m.threshold = j.at("threshold").get<double>();
        m.heldout_false_alarms = j.at("heldout_false_alarms").get<std::size_t>();
        m.missed_vehicles = j.at("missed_vehicles").get<std::size_t>();
        m.detection_rate = j.at("detection_rate").get<double>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("metrics: malformed metrics document: ") + e.what());
    }
    return m;
}

json combined_report(const eval::ExperimentReport& r) {
    const auto& b = r.before;
    const auto& a = r.after;
    json j;
    j["before"] = to_json(b);
    j["after"] = to_json(a);
    j["label_error_noisy"] = opt(r.label_error_noisy);
    j["label_error_corrected"] = opt(r.label_error_corrected);
    j["delta"] = {{"rmse_avg", a.rmse.average - b.rmse.average},
                  {"class_exact", a.classes.average.exact - b.classes.average.exact},
                  {"class_within_one", a.classes.average.within_one - b.classes.average.within_one},
                  {"offset_std", a.offsets.std - b.offsets.std},
                  {"offset_mean", a.offsets.mean - b.offsets.mean},
                  {"separation_gap", delta(b.separation_gap, a.separation_gap)},
                  {"label_error", delta(b.label_error, a.label_error)}};
    return j;
}

std::string rmse_table_csv(const eval::MetricsBlock& before, const eval::MetricsBlock& after) {
    std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> rows;
    for (const auto& r : before.rmse.rows) {
        rows[r.vehicle].first = r.rmse;
    }
    for (const auto& r : after.rmse.rows) {
        rows[r.vehicle].second = r.rmse;
    }
    auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    std::ostringstream o;
    o << "vehicle,rmse_before,rmse_after,delta\n";
    for (const auto& [v, p] : rows) {
        o << v << ',' << cell(p.first) << ',' << cell(p.second) << ','
          << (p.first && p.second ? fmt(*p.second - *p.first) : std::string()) << '\n';
    }
    o << "Average," << fmt(before.rmse.average) << ',' << fmt(after.rmse.average) << ','
      << fmt(after.rmse.average - before.rmse.average) << '\n';
    return o.str();
}

std::string class_table_csv(const eval::MetricsBlock& before, const eval::MetricsBlock& after) {
    std::map<std::string, std::pair<std::optional<eval::ClassRow>, std::optional<eval::ClassRow>>> rows;
    for (const auto& r : before.classes.rows) {
        rows[r.vehicle].first = r;
    }
    for (const auto& r : after.classes.rows) {
        rows[r.vehicle].second = r;
    }
    auto cells = [](const std::optional<eval::ClassRow>& r) {
        if (!r) {
            return std::string(",,,,");
        }
        return fmt(r->exact, "%.2f") + ',' + fmt(r->off_one, "%.2f") + ',' + fmt(r->off_two, "%.2f") + ',' +
               fmt(r->off_more, "%.2f") + ',' + fmt(r->within_one, "%.2f");
    };
    std::ostringstream o;
    o << "vehicle,exact_before,off1_before,off2_before,off_more_before,within1_before,"
         "exact_after,off1_after,off2_after,off_more_after,within1_after\n";
    for (const auto& [v, p] : rows) {
        o << v << ',' << cells(p.first) << ',' << cells(p.second) << '\n';
    }
    o << "Average," << cells(before.classes.average) << ',' << cells(after.classes.average) << '\n';
    return o.str();
}

std::string offset_histogram_svg(const eval::MetricsBlock& before, const eval::MetricsBlock& after) {
    std::vector<Series> s{{"before correction", "#d62728", bins_of(before.offsets.histogram)},
                          {"after correction", "#1f77b4", bins_of(after.offsets.histogram)}};
    return bar_chart("Detection offsets (predicted - labelled t_CPA)", "offset [s]", before.offsets.histogram.bin_width,
                     s, std::nullopt);
}

std::string maxima_histogram_svg(const eval::MetricsBlock& m) {
    std::vector<double> noise = m.noise_maxima_calibration;
    noise.insert(noise.end(), m.noise_maxima_heldout.begin(), m.noise_maxima_heldout.end());
    double lo = 0.0, hi = 1.0;
    const auto all = [&] {
        std::vector<double> v = m.vehicle_maxima;
        v.insert(v.end(), noise.begin(), noise.end());
        return v;
    }();
    if (!all.empty()) {
        lo = *std::min_element(all.begin(), all.end());
        hi = *std::max_element(all.begin(), all.end());
    }
    const double width = hi > lo ? (hi - lo) / 40.0 : 0.1;
    std::optional<std::pair<double, double>> band;
    if (!m.vehicle_maxima.empty() && !noise.empty()) {
        const double nmax = *std::max_element(noise.begin(), noise.end());
        const double vmin = *std::min_element(m.vehicle_maxima.begin(), m.vehicle_maxima.end());
        if (vmin > nmax) {
            band = std::make_pair(nmax, vmin);
        }
    }
    std::vector<Series> s{{"vehicle", "#1f77b4", bins_of(m.vehicle_maxima, width)},
                          {"no vehicle", "#ff7f0e", bins_of(noise, width)}};
    return bar_chart("MA maxima (" + m.label_set + " labels)", "MA maximum", width, s, band);
}

}  // namespace vspeed::report
