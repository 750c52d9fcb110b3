#include <cmath>

#include "doctest.h"
#include "krfws/metrics.hpp"

using namespace krfws;

namespace {

// 68-point shape with explicit eye rings: landmarks 36-41 circle (0,0),
// landmarks 42-47 circle (60,0), everything else spread deterministically.
Shape2D reference_68() {
    Shape2D s(2, 68);
    for (int i = 0; i < 68; ++i) {
        s(0, i) = 3.0 * i;
        s(1, i) = 100.0 + (i % 7);
    }
    for (int i = 0; i < 6; ++i) {
        const double a = 2.0 * M_PI * i / 6.0;
        s(0, 36 + i) = 2.0 * std::cos(a);
        s(1, 36 + i) = 2.0 * std::sin(a);
        s(0, 42 + i) = 60.0 + 2.0 * std::cos(a);
        s(1, 42 + i) = 2.0 * std::sin(a);
    }
    return s;
}

}  // namespace

TEST_CASE("normalized_error is zero for a perfect prediction") {
    const Shape2D gt = reference_68();
    CHECK(normalized_error(gt, gt, NormMode::InterPupil) == doctest::Approx(0.0));
    CHECK(normalized_error(gt, gt, NormMode::InterOcular) == doctest::Approx(0.0));
}

TEST_CASE("constant offset gives the closed-form error") {
    const Shape2D gt = reference_68();
    Shape2D pred = gt;
    pred.row(0).array() += 3.0;
    pred.row(1).array() += 4.0;  // every landmark off by exactly 5

    // pupil centroids are (0,0) and (60,0) by construction -> D = 60
    CHECK(normalized_error(pred, gt, NormMode::InterPupil) ==
          doctest::Approx(100.0 * 5.0 / 60.0).epsilon(1e-9));

    const double outer = (gt.col(36) - gt.col(45)).norm();
    CHECK(normalized_error(pred, gt, NormMode::InterOcular) ==
          doctest::Approx(100.0 * 5.0 / outer).epsilon(1e-9));
}

TEST_CASE("normalized_error is scale invariant") {
    const Shape2D gt = reference_68();
    Shape2D pred = gt;
    pred.row(0).array() += 2.5;
    const double base = normalized_error(pred, gt, NormMode::InterPupil);
    const double scaled = normalized_error(2.0 * pred, 2.0 * gt, NormMode::InterPupil);
    CHECK(base == doctest::Approx(scaled).epsilon(1e-12));
}

TEST_CASE("normalized_error validates its inputs") {
    Shape2D small(2, 5);
    small.setZero();
    CHECK_THROWS_AS(normalized_error(small, small, NormMode::InterPupil), UsageError);

    Shape2D degenerate = reference_68();
    for (int i = 36; i < 48; ++i) degenerate.col(i) = Eigen::Vector2d(1.0, 1.0);
    CHECK_THROWS_AS(normalized_error(degenerate, degenerate, NormMode::InterPupil), NumericError);
}

TEST_CASE("eye_distance_error covers non-68 schemes") {
    Shape2D gt(2, 4);
    gt << 0, 10, 5, 5, 0, 0, 5, 10;
    Shape2D pred = gt;
    pred.row(1).array() += 1.0;  // every landmark off by 1, eye distance 10
    CHECK(eye_distance_error(pred, gt) == doctest::Approx(10.0));
    CHECK_THROWS_AS(eye_distance_error(pred, gt, 0, 9), UsageError);
}

TEST_CASE("pose_mae per-angle means and validation") {
    using P = std::pair<double, double>;
    const std::vector<P> labels{{10, -5}, {-20, 15}, {0, 0}};
    CHECK(pose_mae(labels, labels).average == doctest::Approx(0.0));

    std::vector<P> shifted = labels;
    for (auto& p : shifted) p.first += 5.0;
    const PoseMae mae = pose_mae(shifted, labels);
    CHECK(mae.yaw == doctest::Approx(5.0));
    CHECK(mae.pitch == doctest::Approx(0.0));
    CHECK(mae.average == doctest::Approx(2.5));

    CHECK_THROWS_AS(pose_mae({}, {}), DataError);
    CHECK_THROWS_AS(pose_mae(shifted, {{0, 0}}), UsageError);
}

TEST_CASE("full-set mean equals the weighted mean of its subsets") {
    // common/challenging/full bookkeeping mirrors the 300-W protocol
    std::vector<double> common(554), challenging(135);
    Rng rng(4);
    for (double& e : common) e = rng.uniform(2.0, 8.0);
    for (double& e : challenging) e = rng.uniform(8.0, 20.0);

    double common_mean = 0, challenging_mean = 0, full_mean = 0;
    for (double e : common) common_mean += e;
    for (double e : challenging) challenging_mean += e;
    full_mean = (common_mean + challenging_mean) / 689.0;
    common_mean /= 554.0;
    challenging_mean /= 135.0;

    CHECK(full_mean ==
          doctest::Approx((554.0 * common_mean + 135.0 * challenging_mean) / 689.0)
              .epsilon(1e-12));
}
