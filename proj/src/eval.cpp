#include "vspeed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <stdexcept>

namespace vspeed::eval {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* who) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(who) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
    if (a.empty()) {
        throw std::invalid_argument(std::string(who) + ": empty input");
    }
}

std::map<std::string, std::vector<std::size_t>> group_by(std::span<const std::string> vehicles) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        groups[vehicles[i]].push_back(i);
    }
    return groups;
}

}  // namespace

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

double rmse(std::span<const double> est, std::span<const double> truth) {
    check_pair(est, truth, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double d = est[i] - truth[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(est.size()));
}

int speed_to_class(double speed_kmh, const SpeedClassScheme& scheme) {
    const double k = std::floor((speed_kmh - scheme.start) / scheme.step);
    return static_cast<int>(std::clamp(k, 0.0, static_cast<double>(scheme.n_classes - 1)));
}

ClassRow class_row(std::span<const double> est, std::span<const double> truth, const SpeedClassScheme& scheme) {
    check_pair(est, truth, "class_row");
    std::size_t counts[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < est.size(); ++i) {
        const int delta = std::abs(speed_to_class(est[i], scheme) - speed_to_class(truth[i], scheme));
        ++counts[std::min(delta, 3)];
    }
    const double n = static_cast<double>(est.size());
    ClassRow row;
    row.count = est.size();
    row.exact = 100.0 * static_cast<double>(counts[0]) / n;
    row.off_one = 100.0 * static_cast<double>(counts[1]) / n;
    row.off_two = 100.0 * static_cast<double>(counts[2]) / n;
    row.off_more = 100.0 * static_cast<double>(counts[3]) / n;
    row.within_one = 100.0 * static_cast<double>(counts[0] + counts[1]) / n;
    return row;
}

ClassificationTable classification_table(std::span<const double> est, std::span<const double> truth,
                                         std::span<const std::string> vehicles, const SpeedClassScheme& scheme) {
    check_pair(est, truth, "classification_table");
    if (vehicles.size() != est.size()) {
        throw std::invalid_argument("classification_table: one vehicle id per sample required");
    }
    ClassificationTable table;
    for (const auto& [vehicle, idx] : group_by(vehicles)) {
        std::vector<double> e, t;
        for (std::size_t i : idx) {
            e.push_back(est[i]);
            t.push_back(truth[i]);
        }
        ClassRow row = class_row(e, t, scheme);
        row.vehicle = vehicle;
        table.rows.push_back(row);
    }
    ClassRow& avg = table.average;
    avg.vehicle = "Average";
    for (const auto& r : table.rows) {
        avg.count += r.count;
        avg.exact += r.exact;
        avg.off_one += r.off_one;
        avg.off_two += r.off_two;
        avg.off_more += r.off_more;
        avg.within_one += r.within_one;
    }
    const double n = static_cast<double>(table.rows.size());
    avg.exact /= n;
    avg.off_one /= n;
    avg.off_two /= n;
    avg.off_more /= n;
    avg.within_one /= n;
    return table;
}

RmseTable rmse_table(std::span<const double> est, std::span<const double> truth, std::span<const std::string> vehicles) {
    check_pair(est, truth, "rmse_table");
    if (vehicles.size() != est.size()) {
        throw std::invalid_argument("rmse_table: one vehicle id per sample required");
    }
    RmseTable table;
    for (const auto& [vehicle, idx] : group_by(vehicles)) {
        std::vector<double> e, t;
        for (std::size_t i : idx) {
            e.push_back(est[i]);
            t.push_back(truth[i]);
        }
        table.rows.push_back({vehicle, idx.size(), rmse(e, t)});
        table.average += table.rows.back().rmse;
    }
    table.average /= static_cast<double>(table.rows.size());
    return table;
}

Histogram histogram(std::span<const double> values, double bin_width) {
    if (!(bin_width > 0.0)) {
        throw std::invalid_argument("histogram: bin width must be positive");
    }
    Histogram h;
    h.bin_width = bin_width;
    if (values.empty()) {
        return h;
    }
    auto bin_of = [&](double v) { return static_cast<long>(std::floor(v / bin_width + 0.5)); };
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.first_bin = bin_of(*lo);
    h.counts.assign(static_cast<std::size_t>(bin_of(*hi) - h.first_bin + 1), 0);
    for (double v : values) {
        ++h.counts[static_cast<std::size_t>(bin_of(v) - h.first_bin)];
    }
    return h;
}

OffsetStats detection_offset_stats(std::span<const double> predicted, std::span<const double> truth, double bin_width) {
    check_pair(predicted, truth, "detection_offset_stats");
    if (predicted.size() < 2) {
        throw std::invalid_argument("detection_offset_stats: need at least two offsets");
    }
    std::vector<double> off(predicted.size());
    for (std::size_t i = 0; i < off.size(); ++i) {
        off[i] = predicted[i] - truth[i];
    }
    OffsetStats s;
    s.count = off.size();
    s.mean = std::accumulate(off.begin(), off.end(), 0.0) / static_cast<double>(off.size());
    double ss = 0.0;
    for (double o : off) {
        ss += (o - s.mean) * (o - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(off.size() - 1));
    s.histogram = histogram(off, bin_width);
    return s;
}

double separation_gap(std::span<const double> vehicle_maxima, std::span<const double> noise_maxima) {
    if (vehicle_maxima.empty() || noise_maxima.empty()) {
        throw std::invalid_argument("separation_gap: both sets must be non-empty");
    }
    return *std::min_element(vehicle_maxima.begin(), vehicle_maxima.end()) -
           *std::max_element(noise_maxima.begin(), noise_maxima.end());
}

double mean_abs_difference(std::span<const double> a, std::span<const double> b) {
    check_pair(a, b, "mean_abs_difference");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::abs(a[i] - b[i]);
    }
    return s / static_cast<double>(a.size());
}

}  // namespace vspeed::eval
