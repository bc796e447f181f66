#include <Eigen/Dense>
#include <cmath>

#include "dkp/classic_kf.hpp"
#include "dkp/errors.hpp"
#include "dkp/metrics.hpp"
#include "dkp/rng.hpp"
#include "dkp/synthdata.hpp"
#include "doctest.h"

using namespace dkp;

namespace {

// Independent oracle: batch weighted least squares of the same
// linear-Gaussian model in information form. The joint MAP over all states
// factorizes the prior, every transition, and every measurement; the
// marginal mean of the last state must equal the filter's final posterior.
Eigen::Vector<double, 8> wls_final_state(const std::vector<Pose>& meas, const NoiseConfig& cfg,
                                         double dt) {
    const int t_len = static_cast<int>(meas.size());
    const int dim = 8 * t_len;

    const Eigen::Matrix<double, 8, 8> F = cv_transition(dt);
    const Eigen::Matrix<double, 8, 8> Qi = process_noise(dt, cfg).inverse();
    Eigen::Matrix<double, 4, 8> H = Eigen::Matrix<double, 4, 8>::Zero();
    for (int a = 0; a < 4; ++a) H(a, a) = 1.0;
    Eigen::Matrix4d Ri = Eigen::Matrix4d::Zero();
    Ri(0, 0) = Ri(1, 1) = Ri(2, 2) = 1.0 / cfg.r_pos;
    Ri(3, 3) = 1.0 / cfg.r_theta;

    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(dim);

    // Prior on x_0: mean = [z_0, 0], covariance diag(R, p0 I) as seeded by
    // the filter.
    Eigen::Matrix<double, 8, 8> P0i = Eigen::Matrix<double, 8, 8>::Zero();
    P0i(0, 0) = P0i(1, 1) = P0i(2, 2) = 1.0 / cfg.r_pos;
    P0i(3, 3) = 1.0 / cfg.r_theta;
    for (int a = 4; a < 8; ++a) P0i(a, a) = 1.0 / cfg.p0;
    Eigen::Vector<double, 8> mu0 = Eigen::Vector<double, 8>::Zero();
    mu0[0] = meas[0].x;
    mu0[1] = meas[0].y;
    mu0[2] = meas[0].z;
    mu0[3] = meas[0].theta;
    lambda.block<8, 8>(0, 0) += P0i;
    eta.segment<8>(0) += P0i * mu0;

    for (int k = 1; k < t_len; ++k) {
        const int prev = 8 * (k - 1), cur = 8 * k;
        lambda.block<8, 8>(prev, prev) += F.transpose() * Qi * F;
        lambda.block<8, 8>(prev, cur) -= F.transpose() * Qi;
        lambda.block<8, 8>(cur, prev) -= Qi * F;
        lambda.block<8, 8>(cur, cur) += Qi;

        Eigen::Vector4d z(meas[static_cast<std::size_t>(k)].x,
                          meas[static_cast<std::size_t>(k)].y,
                          meas[static_cast<std::size_t>(k)].z,
                          meas[static_cast<std::size_t>(k)].theta);
        lambda.block<8, 8>(cur, cur) += H.transpose() * Ri * H;
        eta.segment<8>(cur) += H.transpose() * Ri * z;
    }

    const Eigen::VectorXd x = lambda.ldlt().solve(eta);
    return x.segment<8>(8 * (t_len - 1));
}

TrajectorySegment segment_from(const std::vector<Pose>& poses) {
    TrajectorySegment seg;
    for (const auto& p : poses) seg.items.push_back({p, true, false});
    return seg;
}

}  // namespace

TEST_CASE("cv_predict advances positions by velocity") {
    CvState st;
    st.s << 0, 0, 10, 0, 1, 0, -1, 0;
    const auto out = cv_predict(st, 1.0, NoiseConfig{});
    CHECK(out.s[0] == doctest::Approx(1.0));
    CHECK(out.s[1] == doctest::Approx(0.0));
    CHECK(out.s[2] == doctest::Approx(9.0));
    CHECK(out.s[3] == doctest::Approx(0.0));

    CvState still;
    still.s << 2, 3, 4, 0.5, 0, 0, 0, 0;
    const auto kept = cv_predict(still, 0.1, NoiseConfig{});
    for (int i = 0; i < 4; ++i) CHECK(kept.s[i] == doctest::Approx(still.s[i]));

    CHECK_THROWS_AS(cv_predict(st, 0.0, NoiseConfig{}), InvalidInputError);
    CHECK_THROWS_AS(cv_predict(st, -0.1, NoiseConfig{}), InvalidInputError);
}

TEST_CASE("cv_predict covariance: zero prior becomes Q, trace never shrinks") {
    const NoiseConfig cfg;
    CvState st;  // P = 0
    const auto out = cv_predict(st, 0.1, cfg);
    CHECK((out.P - process_noise(0.1, cfg)).norm() == doctest::Approx(0.0).epsilon(1e-15));

    Rng rng(3);
    CvState prev;
    for (int i = 0; i < 50; ++i) {
        prev.P += Eigen::Matrix<double, 8, 8>::Identity() * rng.uniform(0.0, 1.0);
        const auto next = cv_predict(prev, 0.1, cfg);
        CHECK(next.P.trace() >= prev.P.trace());
        prev = next;
    }
}

TEST_CASE("kf_update with equal prior and measurement variance fuses midway") {
    const NoiseConfig cfg;
    CvState st;
    st.s << 1, 2, 3, 0.2, 0, 0, 0, 0;
    st.P.setZero();
    st.P(0, 0) = st.P(1, 1) = st.P(2, 2) = cfg.r_pos;
    st.P(3, 3) = cfg.r_theta;

    const Pose meas(2, 3, 4, 0.4);
    const auto out = kf_update(st, meas, cfg);
    CHECK(out.s[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(out.s[1] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(out.s[2] == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(out.s[3] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("kf_update limits: uninformative measurement and prior") {
    NoiseConfig huge_r;
    huge_r.r_pos = huge_r.r_theta = 1e12;
    CvState st;
    st.s << 1, 2, 3, 0.2, 0.1, 0, 0, 0;
    st.P = Eigen::Matrix<double, 8, 8>::Identity();
    const auto keep = kf_update(st, Pose(50, 60, 70, 1.0), huge_r);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(keep.s[i] - st.s[i]) < 1e-6);

    const NoiseConfig cfg;
    CvState diffuse;
    diffuse.s << 1, 2, 3, 0.2, 0, 0, 0, 0;
    diffuse.P = Eigen::Matrix<double, 8, 8>::Identity() * 1e12;
    const auto snap = kf_update(diffuse, Pose(5, 6, 7, 0.5), cfg);
    CHECK(std::abs(snap.s[0] - 5.0) < 1e-6);
    CHECK(std::abs(snap.s[1] - 6.0) < 1e-6);
    CHECK(std::abs(snap.s[2] - 7.0) < 1e-6);
    CHECK(std::abs(snap.s[3] - 0.5) < 1e-6);
}

TEST_CASE("kf_update wraps the yaw innovation across the seam") {
    const NoiseConfig cfg;
    CvState st;
    st.s << 0, 0, 0, M_PI - 0.05, 0, 0, 0, 0;
    st.P = Eigen::Matrix<double, 8, 8>::Identity() * 1e12;
    const auto out = kf_update(st, Pose(0, 0, 0, -M_PI + 0.05), cfg);
    // With a diffuse prior the posterior lands on the measurement via the
    // short way around (+0.1), not by swinging through zero.
    CHECK(angular_error(out.s[3], -M_PI + 0.05) < 1e-6);
}

TEST_CASE("covariance stays symmetric PSD over many random cycles") {
    const NoiseConfig cfg;
    Rng rng(17);
    CvState st;
    st.P = Eigen::Matrix<double, 8, 8>::Identity();
    double min_eig = 1e9;
    for (int i = 0; i < 10000; ++i) {
        st = cv_predict(st, 0.1, cfg);
        st = kf_update(st, Pose(rng.normal() * 10, rng.normal(), rng.normal() * 10, 0.0), cfg);
        CHECK((st.P - st.P.transpose()).cwiseAbs().maxCoeff() < 1e-9);
        if (i % 100 == 0) {
            const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> eig(st.P);
            min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
        }
    }
    CHECK(min_eig >= -1e-9);
}

TEST_CASE("filter is exactly linear in position measurements") {
    const NoiseConfig cfg;
    Rng rng(5);
    std::vector<Pose> meas;
    for (int k = 0; k < 20; ++k) {
        meas.push_back(Pose(rng.normal() * 5, rng.normal(), 20 + k + rng.normal(), 0.0));
    }
    const double c = 3.0;
    std::vector<Pose> scaled;
    for (const auto& p : meas) scaled.push_back(Pose(c * p.x, c * p.y, c * p.z, 0.0));

    const auto base = mbkf_smooth_segment(segment_from(meas), cfg, 0.1);
    const auto big = mbkf_smooth_segment(segment_from(scaled), cfg, 0.1);
    for (std::size_t k = 0; k < base.size(); ++k) {
        CHECK(std::abs(big[k].x - c * base[k].x) < 1e-9);
        CHECK(std::abs(big[k].y - c * base[k].y) < 1e-9);
        CHECK(std::abs(big[k].z - c * base[k].z) < 1e-9);
        CHECK(big[k].theta == 0.0);
    }
}

TEST_CASE("noiseless constant-velocity track is reproduced after burn-in") {
    NoiseConfig cfg;
    cfg.q_pos = 0.1;
    cfg.q_vel = 1e4;  // near-diffuse velocity carry-over
    cfg.r_pos = 1e-7;
    cfg.r_theta = 1e-7;
    std::vector<Pose> meas;
    for (int k = 0; k < 20; ++k) {
        meas.push_back(Pose(0.05 * k, 1.2, 30.0 - 0.8 * k, 0.2));
    }
    const auto out = mbkf_smooth_segment(segment_from(meas), cfg, 0.1);
    for (std::size_t k = 3; k < out.size(); ++k) {
        CHECK(std::abs(out[k].x - meas[k].x) < 1e-6);
        CHECK(std::abs(out[k].y - meas[k].y) < 1e-6);
        CHECK(std::abs(out[k].z - meas[k].z) < 1e-6);
        CHECK(angular_error(out[k].theta, meas[k].theta) < 1e-6);
    }
}

TEST_CASE("final posterior equals the batch weighted-least-squares oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        NoiseConfig cfg;
        cfg.q_pos = rng.uniform(0.05, 0.5);
        cfg.q_vel = rng.uniform(0.2, 5.0);
        cfg.r_pos = rng.uniform(0.1, 2.0);
        cfg.r_theta = rng.uniform(0.01, 0.2);
        cfg.p0 = rng.uniform(1.0, 50.0);

        std::vector<Pose> meas;
        double x = rng.uniform(-10, 10), y = rng.uniform(0, 2), z = rng.uniform(10, 50);
        const double vx = rng.uniform(-2, 2), vz = rng.uniform(-2, 2);
        for (int k = 0; k < 20; ++k) {
            meas.push_back(Pose(x + rng.normal() * 0.5, y + rng.normal() * 0.1,
                                z + rng.normal() * 0.5, 0.3 * rng.uniform()));
            x += vx * 0.1;
            z += vz * 0.1;
        }

        const auto filtered = mbkf_smooth_segment(segment_from(meas), cfg, 0.1);
        const auto batch = wls_final_state(meas, cfg, 0.1);
        const Pose last = filtered.back();
        CHECK(std::abs(last.x - batch[0]) < 1e-8);
        CHECK(std::abs(last.y - batch[1]) < 1e-8);
        CHECK(std::abs(last.z - batch[2]) < 1e-8);
        CHECK(std::abs(last.theta - batch[3]) < 1e-8);
    }
}

TEST_CASE("Monte-Carlo: smoothing noisy constant-velocity tracks reduces ARED") {
    const NoiseConfig cfg;
    NoiseModel noise;
    noise.sigma_pos_base = 0.5;
    noise.sigma_pos_slope = 0.0;
    noise.sigma_theta_base = 0.03;
    noise.sigma_theta_slope = 0.0;
    noise.outlier_prob = 0.0;

    std::vector<EvalPair> raw_pairs, kf_pairs;
    Rng rng(77);
    for (int i = 0; i < 120; ++i) {
        MotionPattern p;
        p.kind = MotionKind::ConstantVelocity;
        p.initial = Pose(rng.uniform(-5, 5), 1.2, rng.uniform(15, 45), rng.uniform(-0.4, 0.4));
        p.speed = rng.uniform(2.0, 12.0);
        const auto [gt, noisy] = generate_trajectory(p, noise, 20, 1000 + i);

        TrajectorySegment seg;
        for (const auto& m : noisy.poses) seg.items.push_back(m);
        const auto smoothed = mbkf_smooth_segment(seg, cfg, 0.1);
        for (std::size_t k = 0; k < smoothed.size(); ++k) {
            raw_pairs.push_back(EvalPair::make(noisy.poses[k].pose, gt.poses[k].pose));
            kf_pairs.push_back(EvalPair::make(smoothed[k], gt.poses[k].pose));
        }
    }
    CHECK(ared(kf_pairs) < ared(raw_pairs));
}

TEST_CASE("mbkf_smooth_trajectory predicts through detection gaps") {
    MotionPattern p;
    p.kind = MotionKind::ConstantVelocity;
    p.initial = Pose(0, 1.2, 40, M_PI);  // approaching at 10 m/s
    p.speed = 10.0;
    NoiseModel noise;
    noise.sigma_pos_base = 0.3;
    noise.sigma_pos_slope = 0.0;
    noise.outlier_prob = 0.0;
    auto [gt, noisy] = generate_trajectory(p, noise, 30, 9);
    noisy = apply_occlusion(noisy, 10, 5);

    const auto smoothed = mbkf_smooth_trajectory(noisy, NoiseConfig{});
    REQUIRE(smoothed.size() == noisy.size());
    for (std::size_t k = 10; k < 15; ++k) {
        CHECK(smoothed.poses[k].valid);
        CHECK(smoothed.poses[k].substituted);
        // predicted-through pose stays near the true track
        CHECK(std::abs(smoothed.poses[k].pose.z - gt.poses[k].pose.z) < 3.0);
    }
    CHECK_THROWS_AS(mbkf_smooth_segment(segment_from({}), NoiseConfig{}, 0.1),
                    InvalidInputError);
}

TEST_CASE("mbkf rejects non-substituted gaps and bad configs") {
    TrajectorySegment seg;
    seg.items.push_back({Pose(0, 0, 10, 0), true, false});
    seg.items.push_back({Pose(0, 0, 10, 0), false, false});  // not substituted
    CHECK_THROWS_AS(mbkf_smooth_segment(seg, NoiseConfig{}, 0.1), InvalidInputError);

    NoiseConfig bad;
    bad.r_pos = 0.0;
    CHECK_THROWS_AS(mbkf_smooth_segment(seg, bad, 0.1), InvalidInputError);
}
