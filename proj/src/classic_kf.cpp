#include "dkp/classic_kf.hpp"

#include <cmath>

#include "dkp/errors.hpp"

namespace dkp {

void NoiseConfig::validate() const {
    if (!(q_pos > 0 && q_vel > 0 && r_pos > 0 && r_theta > 0 && p0 > 0)) {
        throw InvalidInputError("NoiseConfig: all fields must be strictly positive");
    }
}

Eigen::Matrix<double, 8, 8> cv_transition(double dt) {
    Eigen::Matrix<double, 8, 8> F = Eigen::Matrix<double, 8, 8>::Identity();
    for (int a = 0; a < 4; ++a) F(a, a + 4) = dt;
    return F;
}

Eigen::Matrix<double, 8, 8> process_noise(double dt, const NoiseConfig& cfg) {
    Eigen::Matrix<double, 8, 8> Q = Eigen::Matrix<double, 8, 8>::Zero();
    const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt3 * dt;
    for (int a = 0; a < 4; ++a) {
        Q(a, a) = cfg.q_pos * dt + cfg.q_vel * dt4 / 4.0;
        Q(a, a + 4) = Q(a + 4, a) = cfg.q_vel * dt3 / 2.0;
        Q(a + 4, a + 4) = cfg.q_vel * dt2;
    }
    return Q;
}

CvState cv_predict(const CvState& state, double dt, const NoiseConfig& cfg) {
    if (!(dt > 0)) throw InvalidInputError("cv_predict: dt must be positive");
    cfg.validate();
    const auto F = cv_transition(dt);
    CvState out;
    out.s = F * state.s;
    out.s[3] = wrap_angle(out.s[3]);
    out.P = F * state.P * F.transpose() + process_noise(dt, cfg);
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    return out;
}

CvState kf_update(const CvState& state, const Pose& meas, const NoiseConfig& cfg) {
    cfg.validate();
    Eigen::Matrix<double, 4, 8> H = Eigen::Matrix<double, 4, 8>::Zero();
    for (int a = 0; a < 4; ++a) H(a, a) = 1.0;
    Eigen::Matrix4d R = Eigen::Matrix4d::Zero();
    R(0, 0) = R(1, 1) = R(2, 2) = cfg.r_pos;
    R(3, 3) = cfg.r_theta;

    Eigen::Vector4d innovation;
    innovation << meas.x - state.s[0], meas.y - state.s[1], meas.z - state.s[2],
        wrap_angle(meas.theta - state.s[3]);

    const Eigen::Matrix4d S = H * state.P * H.transpose() + R;
    const Eigen::FullPivLU<Eigen::Matrix4d> lu(S);
    if (!lu.isInvertible()) {
        throw NumericalError("kf_update: singular innovation covariance");
    }
    const Eigen::Matrix<double, 8, 4> K = state.P * H.transpose() * lu.inverse();

    CvState out;
    out.s = state.s + K * innovation;
    out.s[3] = wrap_angle(out.s[3]);
    const Eigen::Matrix<double, 8, 8> IKH = Eigen::Matrix<double, 8, 8>::Identity() - K * H;
    out.P = IKH * state.P * IKH.transpose() + K * R * K.transpose();  // Joseph form
    out.P = 0.5 * (out.P + out.P.transpose()).eval();
    return out;
}

namespace {

CvState seed_state(const Pose& first, const NoiseConfig& cfg) {
    CvState st;
    st.s.setZero();
    st.s[0] = first.x;
    st.s[1] = first.y;
    st.s[2] = first.z;
    st.s[3] = first.theta;
    st.P.setZero();
    st.P(0, 0) = st.P(1, 1) = st.P(2, 2) = cfg.r_pos;
    st.P(3, 3) = cfg.r_theta;
    for (int a = 4; a < 8; ++a) st.P(a, a) = cfg.p0;
    return st;
}

}  // namespace

std::vector<Pose> mbkf_smooth_segment(const TrajectorySegment& seg, const NoiseConfig& cfg,
                                      double dt) {
    cfg.validate();
    if (seg.items.empty()) throw InvalidInputError("mbkf_smooth_segment: empty segment");
    for (const auto& m : seg.items) {
        if (!m.valid && !m.substituted) {
            throw InvalidInputError("mbkf_smooth_segment: segment must be mean-substituted");
        }
    }

    std::vector<Pose> out;
    out.reserve(seg.size());
    CvState st = seed_state(seg.items.front().pose, cfg);
    out.push_back(st.pose());
    for (std::size_t k = 1; k < seg.size(); ++k) {
        st = cv_predict(st, dt, cfg);
        st = kf_update(st, seg.items[k].pose, cfg);
        out.push_back(st.pose());
    }
    return out;
}

Trajectory mbkf_smooth_trajectory(const Trajectory& traj, const NoiseConfig& cfg) {
    cfg.validate();
    const double dt = 1.0 / traj.frame_rate;

    Trajectory out = traj;
    std::size_t first_valid = traj.size();
    for (std::size_t k = 0; k < traj.size(); ++k) {
        if (traj.poses[k].valid) {
            first_valid = k;
            break;
        }
    }
    if (first_valid == traj.size()) {
        warn("mbkf: trajectory '" + traj.vehicle_id + "' has no valid measurement; unchanged");
        return out;
    }

    CvState st = seed_state(traj.poses[first_valid].pose, cfg);
    for (std::size_t k = 0; k < first_valid; ++k) {  // constant fill before the first detection
        out.poses[k].pose = st.pose();
        out.poses[k].valid = true;
        out.poses[k].substituted = true;
    }
    out.poses[first_valid].pose = st.pose();
    for (std::size_t k = first_valid + 1; k < traj.size(); ++k) {
        st = cv_predict(st, dt, cfg);
        if (traj.poses[k].valid) st = kf_update(st, traj.poses[k].pose, cfg);
        out.poses[k].pose = st.pose();
        out.poses[k].valid = true;
        out.poses[k].substituted = !traj.poses[k].valid;
    }
    return out;
}

}  // namespace dkp
