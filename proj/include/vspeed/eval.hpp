#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vspeed::eval {

/// Half-open classes [start + k*step, start + (k+1)*step); the top edge is
/// clamped into the last class.
struct SpeedClassScheme {
    double start = 25.0;
    double step = 10.0;
    int n_classes = 8;
};

/// Percentages of samples by distance from the true class.
struct ClassRow {
    std::string vehicle;
    std::size_t count = 0;
    double exact = 0.0;       // delta == 0
    double off_one = 0.0;     // |delta| == 1
    double off_two = 0.0;     // |delta| == 2
    double off_more = 0.0;    // |delta| > 2
    double within_one = 0.0;  // |delta| <= 1
};

struct ClassificationTable {
    std::vector<ClassRow> rows;  // sorted by vehicle id
    ClassRow average;            // unweighted mean of the vehicle rows
};

struct VehicleRmse {
    std::string vehicle;
    std::size_t count = 0;
    double rmse = 0.0;
};

struct RmseTable {
    std::vector<VehicleRmse> rows;  // sorted by vehicle id
    double average = 0.0;           // unweighted mean of the vehicle rows
};

/// Bins are centered on multiples of bin_width: bin k covers
/// [(k - 0.5) w, (k + 0.5) w).
struct Histogram {
    double bin_width = 0.025;
    long first_bin = 0;
    std::vector<std::size_t> counts;

    double bin_center(std::size_t i) const { return (first_bin + static_cast<long>(i)) * bin_width; }
    std::size_t total() const;
};

struct OffsetStats {
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1) standard deviation
    std::size_t count = 0;
    Histogram histogram;
};

double rmse(std::span<const double> est, std::span<const double> truth);

int speed_to_class(double speed_kmh, const SpeedClassScheme& scheme = {});

ClassRow class_row(std::span<const double> est, std::span<const double> truth, const SpeedClassScheme& scheme = {});

ClassificationTable classification_table(std::span<const double> est, std::span<const double> truth,
                                         std::span<const std::string> vehicles, const SpeedClassScheme& scheme = {});

RmseTable rmse_table(std::span<const double> est, std::span<const double> truth, std::span<const std::string> vehicles);

Histogram histogram(std::span<const double> values, double bin_width);

OffsetStats detection_offset_stats(std::span<const double> predicted, std::span<const double> truth,
                                   double bin_width = 0.025);

/// min(vehicle maxima) - max(noise maxima); positive when separable.
double separation_gap(std::span<const double> vehicle_maxima, std::span<const double> noise_maxima);

double mean_abs_difference(std::span<const double> a, std::span<const double> b);

/// Everything reported for one cross-validation run.
struct MetricsBlock {
    std::string label_set;
    int repetitions = 0;
    RmseTable rmse;
    ClassificationTable classes;
    OffsetStats offsets;                      // predicted - label t_CPA of this run
    std::vector<double> offset_values;
    std::optional<OffsetStats> offsets_vs_truth;  // synthetic data only
    std::optional<double> label_error;            // mean |label - true t_CPA|, synthetic data only
    std::vector<double> vehicle_maxima;
    std::vector<double> noise_maxima_calibration;
    std::vector<double> noise_maxima_heldout;
    std::optional<double> separation_gap;  // vehicle maxima vs calibration noise maxima
    double threshold = 0.0;
    std::size_t heldout_false_alarms = 0;
    std::size_t missed_vehicles = 0;
    double detection_rate = 0.0;  // share of vehicle test records detected with the configured rule
};

struct ExperimentReport {
    MetricsBlock before;
    MetricsBlock after;
    std::optional<double> label_error_noisy;      // mean |noisy - true|
    std::optional<double> label_error_corrected;  // mean |corrected - true|
};

}  // namespace vspeed::eval
