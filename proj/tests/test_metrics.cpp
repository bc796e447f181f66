#include <cmath>

#include "dkp/errors.hpp"
#include "dkp/metrics.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace dkp;

namespace {

EvalPair pair_with(double pred_x, double pred_y, double pred_z, double pred_th, double gt_x,
                   double gt_y, double gt_z, double gt_th, bool occluded = false) {
    return EvalPair::make(Pose(pred_x, pred_y, pred_z, pred_th), Pose(gt_x, gt_y, gt_z, gt_th),
                          occluded);
}

// Hand-computed four-pair fixture (see asserted numbers below):
//   p1: rel err 0.5, yaw err 0            depth  2, visible
//   p2: rel err 0.1, yaw err 0.2 rad      depth 10, occluded
//   p3: rel err 0.1, yaw err pi/2         depth 50, occluded
//   p4: rel err 0,   yaw err 0.1 rad      depth 50, visible
std::vector<EvalPair> fixture() {
    return {
        pair_with(1, 0, 0, 0, /*gt*/ 2, 0, 0, 0),
        pair_with(0, 0, 9, M_PI - 0.1, /*gt*/ 0, 0, 10, -M_PI + 0.1, true),
        pair_with(0, 3, 46, M_PI / 2, /*gt*/ 0, 0, 50, 0, true),
        pair_with(30, 0, 40, 0.1, /*gt*/ 30, 0, 40, 0),
    };
}

constexpr double kDeg = 180.0 / M_PI;

}  // namespace

TEST_CASE("ared basics") {
    CHECK(ared({pair_with(1, 0, 0, 0, 1, 0, 0, 0)}) == 0.0);
    CHECK(ared({pair_with(1, 0, 0, 0, 2, 0, 0, 0)}) == doctest::Approx(0.5));
    // errors 0.1 and 0.3 relative -> mean 0.2
    CHECK(ared({pair_with(0, 0, 11, 0, 0, 0, 10, 0), pair_with(0, 0, 13, 0, 0, 0, 10, 0)}) ==
          doctest::Approx(0.2));
    CHECK_THROWS_AS(ared({pair_with(1, 0, 0, 0, 0, 0, 0, 0)}), InvalidInputError);
    CHECK_THROWS_AS(ared({}), InvalidInputError);
}

TEST_CASE("ared error scaling is exactly linear") {
    const auto base = fixture();
    for (double c : {0.0, 0.5, 2.0, 10.0}) {
        std::vector<EvalPair> scaled;
        for (const auto& p : base) {
            Pose pred(p.gt.x + c * (p.pred.x - p.gt.x), p.gt.y + c * (p.pred.y - p.gt.y),
                      p.gt.z + c * (p.pred.z - p.gt.z), p.pred.theta);
            scaled.push_back(EvalPair::make(pred, p.gt, p.occluded));
        }
        CHECK(ared(scaled) == doctest::Approx(c * ared(base)).epsilon(1e-12));
    }
}

TEST_CASE("acc_delta thresholds") {
    const std::vector<EvalPair> pairs = {
        pair_with(0, 0, 1, 10.0 / kDeg, 0, 0, 1, 0),
        pair_with(0, 0, 1, 40.0 / kDeg, 0, 0, 1, 0),
    };
    CHECK(acc_delta(pairs, 30.0 / kDeg) == doctest::Approx(0.5));
    CHECK(acc_delta(pairs, 0.0) == 0.0);  // strict inequality
    const std::vector<EvalPair> exact = {pair_with(0, 0, 1, 0.3, 0, 0, 1, 0.3)};
    CHECK(acc_delta(exact, 1e-9) == 1.0);
    CHECK_THROWS_AS(acc_delta({}, 0.5), InvalidInputError);

    // monotone non-decreasing in delta
    double prev = -1.0;
    for (double d = 0.0; d <= M_PI; d += 0.1) {
        const double a = acc_delta(fixture(), d);
        CHECK(a >= prev);
        prev = a;
    }
}

TEST_CASE("mederr conventions") {
    const auto deg_pair = [](double err_deg) {
        return pair_with(0, 0, 1, err_deg / kDeg, 0, 0, 1, 0);
    };
    CHECK(mederr({deg_pair(1), deg_pair(2), deg_pair(9)}) == doctest::Approx(2.0));
    CHECK(mederr({deg_pair(1), deg_pair(3)}) == doctest::Approx(2.0));
    CHECK(mederr({pair_with(0, 0, 1, 0.7, 0, 0, 1, 0.7)}) == 0.0);
    // invariant to adding 2pi to a predicted yaw
    CHECK(mederr({deg_pair(5)}) ==
          doctest::Approx(mederr({pair_with(0, 0, 1, 5.0 / kDeg + 2 * M_PI, 0, 0, 1, 0)})));
}

TEST_CASE("four-pair fixture: overall report matches the hand computation") {
    const auto pairs = fixture();
    // ared = (0.5 + 0.1 + 0.1 + 0) / 4
    CHECK(ared(pairs) == doctest::Approx(0.175).epsilon(1e-12));
    // yaw errors: {0, 0.2, pi/2, 0.1} rad
    CHECK(acc_delta(pairs, kAccDeltaWide) == doctest::Approx(0.75));    // pi/2 misses pi/6
    CHECK(acc_delta(pairs, kAccDeltaNarrow) == doctest::Approx(0.5));   // 0.2 misses pi/18
    // mederr: mean of 0.1 and 0.2 rad in degrees
    CHECK(mederr(pairs) == doctest::Approx(0.15 * kDeg).epsilon(1e-12));
}

TEST_CASE("four-pair fixture: depth binning at 40 m") {
    BinSpec spec;
    spec.axis = BinAxis::Depth;
    spec.depth_edges = {40.0};
    const auto reports = binned_report(fixture(), spec);
    REQUIRE(reports.size() == 2);

    CHECK(reports[0].bin == "0m-40m");
    CHECK(reports[0].n == 2);
    CHECK(reports[0].ared == doctest::Approx(0.3));  // (0.5 + 0.1) / 2
    CHECK(reports[0].acc.at(kAccDeltaWide) == doctest::Approx(1.0));
    CHECK(reports[0].acc.at(kAccDeltaNarrow) == doctest::Approx(0.5));
    CHECK(reports[0].mederr_deg == doctest::Approx(0.1 * kDeg));  // mean of 0 and 0.2 rad

    CHECK(reports[1].bin == "40m-inf");
    CHECK(reports[1].n == 2);
    CHECK(reports[1].ared == doctest::Approx(0.05));  // (0.1 + 0) / 2
    CHECK(reports[1].acc.at(kAccDeltaWide) == doctest::Approx(0.5));
    CHECK(reports[1].acc.at(kAccDeltaNarrow) == doctest::Approx(0.5));
    CHECK(reports[1].mederr_deg == doctest::Approx(0.5 * (0.1 * kDeg + 90.0)));
}

TEST_CASE("four-pair fixture: occlusion binning") {
    BinSpec spec;
    spec.axis = BinAxis::Occlusion;
    const auto reports = binned_report(fixture(), spec);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].bin == "visible");
    CHECK(reports[0].n == 2);
    CHECK(reports[0].ared == doctest::Approx(0.25));  // (0.5 + 0) / 2
    CHECK(reports[1].bin == "occluded");
    CHECK(reports[1].n == 2);
    CHECK(reports[1].ared == doctest::Approx(0.1));  // (0.1 + 0.1) / 2
}

TEST_CASE("occlusion bins with identical errors produce equal metrics") {
    std::vector<EvalPair> pairs;
    for (int i = 0; i < 4; ++i) {
        pairs.push_back(pair_with(0, 0, 11, 0.1, 0, 0, 10, 0, /*occluded=*/i % 2 == 0));
    }
    BinSpec spec;
    spec.axis = BinAxis::Occlusion;
    const auto reports = binned_report(pairs, spec);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].ared == doctest::Approx(reports[1].ared));
    CHECK(reports[0].mederr_deg == doctest::Approx(reports[1].mederr_deg));
}

TEST_CASE("depth bins partition the pairs") {
    const auto pairs = fixture();
    BinSpec spec;
    spec.axis = BinAxis::Depth;
    spec.depth_edges = {5.0, 40.0};
    const auto reports = binned_report(pairs, spec);
    std::size_t total = 0;
    for (const auto& r : reports) total += r.n;
    CHECK(total == pairs.size());
}

TEST_CASE("empty bins are omitted with a notice") {
    dkp_test::WarnCapture capture;
    std::vector<EvalPair> pairs = {pair_with(0, 0, 9, 0, 0, 0, 10, 0)};  // depth 10
    BinSpec spec;
    spec.axis = BinAxis::Depth;
    spec.depth_edges = {40.0};
    const auto reports = binned_report(pairs, spec);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].bin == "0m-40m");
    CHECK(capture.messages().size() == 1);
}

TEST_CASE("ared depth curve covers all pairs with deciles") {
    std::vector<EvalPair> pairs;
    for (int i = 0; i < 100; ++i) {
        const double depth = 5.0 + i;
        pairs.push_back(pair_with(0, 0, depth + 0.5, 0, 0, 0, depth, 0));
    }
    const auto curve = ared_depth_curve(pairs, 10);
    REQUIRE(curve.size() == 10);
    std::size_t total = 0;
    double prev_center = -1.0;
    for (const auto& pt : curve) {
        total += pt.n;
        CHECK(pt.depth_center > prev_center);
        prev_center = pt.depth_center;
        // relative error of 0.5/depth decreases with depth
        CHECK(pt.ared_mean == doctest::Approx(0.5 / pt.depth_center).epsilon(0.2));
    }
    CHECK(total == pairs.size());
}

TEST_CASE("csv emission shape") {
    const auto reports = binned_report(fixture(), BinSpec{});
    const auto csv = report_table_csv(reports, "raw");
    CHECK(csv.find("method,bin,n,ared,acc_pi6,acc_pi18,mederr_deg\n") == 0);
    CHECK(csv.find("raw,all,4,0.175000") != std::string::npos);

    const auto curve = ared_depth_curve(fixture(), 2);
    const auto ccsv = curve_csv(curve);
    CHECK(ccsv.find("depth_bin_center,ared_mean,ared_var\n") == 0);
}
