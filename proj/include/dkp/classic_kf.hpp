#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dkp/pose.hpp"

namespace dkp {

/// Constant-velocity filter state over [x, y, z, theta, vx, vy, vz, vtheta].
struct CvState {
    Eigen::Vector<double, 8> s = Eigen::Vector<double, 8>::Zero();
    Eigen::Matrix<double, 8, 8> P = Eigen::Matrix<double, 8, 8>::Zero();

    Pose pose() const { return Pose(s[0], s[1], s[2], s[3]); }
};

struct NoiseConfig {
    double q_pos = 0.1;    // position random-walk spectral density
    double q_vel = 1.0;    // white-acceleration spectral density
    double r_pos = 0.5;    // measurement variance, m^2
    double r_theta = 0.05; // measurement variance, rad^2
    double p0 = 10.0;      // initial velocity covariance scale

    void validate() const;
};

/// Per-axis transition [[1, dt], [0, 1]] assembled over the four axes.
Eigen::Matrix<double, 8, 8> cv_transition(double dt);

/// Discrete white-noise-acceleration process covariance plus a position
/// random-walk term, per axis. Yaw is an independent CV axis.
Eigen::Matrix<double, 8, 8> process_noise(double dt, const NoiseConfig& cfg);

/// Predict step: s <- F s, P <- F P F' + Q; theta re-wrapped.
CvState cv_predict(const CvState& state, double dt, const NoiseConfig& cfg);

/// Measurement update with H selecting the pose block, Joseph-form
/// covariance, and a wrapped yaw innovation.
CvState kf_update(const CvState& state, const Pose& meas, const NoiseConfig& cfg);

/// Seeds the state from the first item (pose covariance R, velocity
/// covariance p0*I, zero velocity), then predict/update through the rest.
/// Returns the T posterior poses in segment order. Requires a
/// mean-substituted segment.
std::vector<Pose> mbkf_smooth_segment(const TrajectorySegment& seg, const NoiseConfig& cfg,
                                      double dt);

/// Whole-trajectory forward pass: seeds from the first valid measurement,
/// predicts every frame, updates only on valid frames. The baseline is a
/// forward tracker; no backward pass.
Trajectory mbkf_smooth_trajectory(const Trajectory& traj, const NoiseConfig& cfg);

}  // namespace dkp
