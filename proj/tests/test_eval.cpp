#include "doctest.h"

#include "vspeed/eval.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

using namespace vspeed;

TEST_CASE("rmse of a hand example") {
    const std::vector<double> est{82.0, 78.0}, truth{80.0, 80.0};
    CHECK(eval::rmse(est, truth) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(eval::rmse(truth, truth) == 0.0);
    CHECK_THROWS_AS(eval::rmse(est, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(eval::rmse(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("speed classes") {
    CHECK(eval::speed_to_class(80.0) == 5);
    CHECK(eval::speed_to_class(25.0) == 0);
    CHECK(eval::speed_to_class(34.999) == 0);
    CHECK(eval::speed_to_class(35.0) == 1);
    CHECK(eval::speed_to_class(105.0) == 7);  // top edge clamped into the last class
    CHECK(eval::speed_to_class(10.0) == 0);
    CHECK(eval::speed_to_class(400.0) == 7);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 150.0);
    for (int i = 0; i < 2000; ++i) {
        const double a = u(rng), b = u(rng);
        if (a <= b) {
            CHECK(eval::speed_to_class(a) <= eval::speed_to_class(b));
        }
    }
}

TEST_CASE("class row percentages") {
    const std::vector<double> truth{80.0, 80.0, 80.0, 80.0};
    const std::vector<double> est{81.0, 92.0, 63.0, 30.0};  // deltas 0, 1, 2, 5
    const auto row = eval::class_row(est, truth);
    CHECK(row.exact == 25.0);
    CHECK(row.off_one == 25.0);
    CHECK(row.off_two == 25.0);
    CHECK(row.off_more == 25.0);
    CHECK(row.within_one == 50.0);
}

TEST_CASE("class rows sum to one hundred") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(30.0, 105.0), n(-25.0, 25.0);
    std::vector<double> est, truth;
    std::vector<std::string> veh;
    for (int i = 0; i < 300; ++i) {
        truth.push_back(u(rng));
        est.push_back(truth.back() + n(rng));
        veh.push_back("veh" + std::to_string(i % 7));
    }
    const auto t = eval::classification_table(est, truth, veh);
    REQUIRE(t.rows.size() == 7);
    double exact = 0.0;
    for (const auto& r : t.rows) {
        CHECK(r.exact + r.off_one + r.off_two + r.off_more == doctest::Approx(100.0).epsilon(1e-12));
        CHECK(r.within_one == doctest::Approx(r.exact + r.off_one).epsilon(1e-12));
        exact += r.exact;
    }
    CHECK(t.average.exact == doctest::Approx(exact / 7.0).epsilon(1e-12));
    CHECK(t.average.vehicle == "Average");
    CHECK(t.rows.front().vehicle == "veh0");
    CHECK(t.rows.back().vehicle == "veh6");
}

TEST_CASE("rmse table groups by vehicle and averages rows unweighted") {
    const std::vector<double> est{82.0, 78.0, 50.0, 50.0, 50.0};
    const std::vector<double> truth{80.0, 80.0, 50.0, 50.0, 50.0};
    const std::vector<std::string> veh{"b", "b", "a", "a", "a"};
    const auto t = eval::rmse_table(est, truth, veh);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].vehicle == "a");
    CHECK(t.rows[0].count == 3);
    CHECK(t.rows[0].rmse == 0.0);
    CHECK(t.rows[1].rmse == doctest::Approx(2.0));
    CHECK(t.average == doctest::Approx(1.0));
    CHECK_THROWS_AS(eval::rmse_table(est, truth, std::vector<std::string>{"a"}), std::invalid_argument);
}

TEST_CASE("detection offset statistics") {
    const std::vector<double> pred{4.99, 5.0, 5.01}, truth{5.0, 5.0, 5.0};
    const auto s = eval::detection_offset_stats(pred, truth);
    CHECK(std::abs(s.mean) < 1e-12);
    CHECK(s.std == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(s.count == 3);
    CHECK(s.histogram.total() == 3);
    CHECK_THROWS_AS(eval::detection_offset_stats(std::vector<double>{1.0}, std::vector<double>{1.0}),
                    std::invalid_argument);
}

TEST_CASE("histogram bins are centred on multiples of the width") {
    const std::vector<double> v{-0.05, -0.012, 0.0, 0.012, 0.013, 0.1};
    const auto h = eval::histogram(v, 0.025);
    CHECK(h.first_bin == -2);
    REQUIRE(h.counts.size() == 7);
    CHECK(h.counts[0] == 1);  // -0.05
    CHECK(h.counts[2] == 3);  // -0.012, 0, 0.012
    CHECK(h.counts[3] == 1);  // 0.013
    CHECK(h.counts[6] == 1);  // 0.1
    CHECK(h.total() == v.size());
    CHECK(h.bin_center(2) == 0.0);
    CHECK(eval::histogram(std::vector<double>{}, 0.1).counts.empty());
    CHECK_THROWS_AS(eval::histogram(v, 0.0), std::invalid_argument);
}

TEST_CASE("separation gap") {
    const std::vector<double> veh{5.0, 9.0, 7.0}, noise{0.3, 1.1, 0.8};
    CHECK(eval::separation_gap(veh, noise) == doctest::Approx(3.9).epsilon(1e-12));
    const std::vector<double> v2{2.0, 9.0}, n2{3.0};
    CHECK(eval::separation_gap(v2, n2) == -1.0);
    CHECK_THROWS_AS(eval::separation_gap(v2, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("mean absolute difference") {
    const std::vector<double> a{1.0, 2.0, 3.0}, b{1.5, 2.0, 2.0};
    CHECK(eval::mean_abs_difference(a, b) == doctest::Approx(0.5));
}
