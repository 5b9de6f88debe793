#include "doctest.h"

#include "vspeed/dataio.hpp"
#include "vspeed/report.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

using namespace vspeed;

namespace {

eval::MetricsBlock make_block(const std::string& label_set, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sp(30.0, 105.0);
    std::normal_distribution<double> err(0.0, 8.0), off(0.0, 0.1);
    std::vector<double> est, tru, pred, lab;
    std::vector<std::string> veh;
    for (int i = 0; i < 60; ++i) {
        tru.push_back(sp(rng));
        est.push_back(tru.back() + err(rng));
        veh.push_back("veh0" + std::to_string(i % 4));
        lab.push_back(5.0);
        pred.push_back(5.0 + off(rng));
    }
    eval::MetricsBlock m;
    m.label_set = label_set;
    m.repetitions = 3;
    m.rmse = eval::rmse_table(est, tru, veh);
    m.classes = eval::classification_table(est, tru, veh);
    m.offsets = eval::detection_offset_stats(pred, lab);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        m.offset_values.push_back(pred[i] - lab[i]);
    }
    m.label_error = 0.1;
    m.vehicle_maxima = {4.0, 6.5, 8.0};
    m.noise_maxima_calibration = {0.5, 1.0};
    m.noise_maxima_heldout = {0.7};
    m.separation_gap = 3.0;
    m.threshold = 2.5;
    m.detection_rate = 1.0;
    return m;
}

// Minimal well-formedness check: every element is closed in order.
bool balanced_xml(const std::string& s) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while ((i = s.find('<', i)) != std::string::npos) {
        const std::size_t j = s.find('>', i);
        if (j == std::string::npos) {
            return false;
        }
        const std::string tag = s.substr(i + 1, j - i - 1);
        i = j + 1;
        if (tag.empty() || tag[0] == '?' || tag[0] == '!') {
            continue;
        }
        if (tag[0] == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) {
                return false;
            }
            stack.pop_back();
        } else if (tag.back() != '/') {
            stack.push_back(tag.substr(0, tag.find(' ')));
        }
    }
    return stack.empty();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        rows.push_back(dataio::split_csv(line));
    }
    return rows;
}

}  // namespace

TEST_CASE("metrics JSON round trip") {
    const auto m = make_block("noisy", 1);
    const auto j = report::to_json(m);
    CHECK(j.at("rmse_avg").get<double>() == m.rmse.average);
    const auto back = report::metrics_from_json(j);
    CHECK(report::to_json(back) == j);
    CHECK(back.offsets.histogram.counts == m.offsets.histogram.counts);
    CHECK(*back.separation_gap == 3.0);
    CHECK_FALSE(back.offsets_vs_truth.has_value());
    CHECK_THROWS_AS(report::metrics_from_json(nlohmann::json::object()), std::runtime_error);
}

TEST_CASE("combined report carries both runs and a delta block") {
    eval::ExperimentReport r{make_block("noisy", 1), make_block("corrected", 2), 0.15, 0.07};
    const auto j = report::combined_report(r);
    CHECK(j.at("before").at("label_set") == "noisy");
    CHECK(j.at("after").at("label_set") == "corrected");
    CHECK(j.at("delta").at("rmse_avg").get<double>() ==
          doctest::Approx(r.after.rmse.average - r.before.rmse.average).epsilon(1e-12));
    CHECK(j.at("delta").at("offset_std").get<double>() ==
          doctest::Approx(r.after.offsets.std - r.before.offsets.std).epsilon(1e-12));
    CHECK(j.at("delta").at("separation_gap").get<double>() == 0.0);
    CHECK(j.at("label_error_noisy").get<double>() == 0.15);
}

TEST_CASE("RMSE table: one row per vehicle plus a recomputed average") {
    const auto b = make_block("noisy", 1), a = make_block("corrected", 2);
    const auto rows = csv_rows(report::rmse_table_csv(b, a));
    REQUIRE(rows.size() == 6);
    CHECK(rows[0] == std::vector<std::string>{"vehicle", "rmse_before", "rmse_after", "delta"});
    double sum_before = 0.0, sum_after = 0.0;
    for (std::size_t i = 1; i <= 4; ++i) {
        CHECK(rows[i][0] == "veh0" + std::to_string(i - 1));
        sum_before += b.rmse.rows[i - 1].rmse;
        sum_after += a.rmse.rows[i - 1].rmse;
        CHECK(std::stod(rows[i][1]) == doctest::Approx(b.rmse.rows[i - 1].rmse).epsilon(1e-4));
    }
    CHECK(rows[5][0] == "Average");
    CHECK(std::stod(rows[5][1]) == doctest::Approx(sum_before / 4.0).epsilon(1e-4));
    CHECK(std::stod(rows[5][2]) == doctest::Approx(sum_after / 4.0).epsilon(1e-4));
}

TEST_CASE("class table rows sum to one hundred") {
    const auto b = make_block("noisy", 3), a = make_block("corrected", 4);
    const auto rows = csv_rows(report::class_table_csv(b, a));
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].size() == 11);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 11);
        for (std::size_t off : {1u, 6u}) {
            const double total = std::stod(rows[i][off]) + std::stod(rows[i][off + 1]) + std::stod(rows[i][off + 2]) +
                                 std::stod(rows[i][off + 3]);
            CHECK(total == doctest::Approx(100.0).epsilon(1e-3));
        }
    }
    CHECK(rows[5][0] == "Average");
}

TEST_CASE("SVG figures are well formed") {
    const auto b = make_block("noisy", 1), a = make_block("corrected", 2);
    const std::string off = report::offset_histogram_svg(b, a);
    CHECK(off.rfind("<?xml", 0) == 0);
    CHECK(off.find("<svg") != std::string::npos);
    CHECK(balanced_xml(off));
    CHECK(off.find("nan") == std::string::npos);
    const std::string mx = report::maxima_histogram_svg(b);
    CHECK(balanced_xml(mx));
    CHECK(mx.find("fill=\"green\"") != std::string::npos);  // separation band shown

    auto overlap = b;
    overlap.noise_maxima_heldout = {9.0};
    CHECK(report::maxima_histogram_svg(overlap).find("fill=\"green\"") == std::string::npos);

    eval::MetricsBlock empty;
    CHECK(balanced_xml(report::maxima_histogram_svg(empty)));
    CHECK(balanced_xml(report::offset_histogram_svg(empty, empty)));
}
