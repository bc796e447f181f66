#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dkp/pose.hpp"

namespace dkp {

enum class MotionKind { ConstantVelocity, ConstantTurnRate, Accelerating, Stopping };

/// Kinematic template for one synthetic vehicle track. Motion integrates in
/// the camera ground plane (x lateral, z depth); theta = 0 points along +z.
struct MotionPattern {
    MotionKind kind = MotionKind::ConstantVelocity;
    Pose initial;           // pose at frame 0
    double speed = 10.0;    // m/s along the heading, in [0, 40]
    double yaw_rate = 0.0;  // rad/s, |.| <= 0.5 (ConstantTurnRate)
    double accel = 0.0;     // m/s^2 (Accelerating: signed; Stopping: deceleration magnitude)

    void validate() const;
};

/// Estimator-like noise. Position sigma grows linearly with ground-truth
/// depth, sigma_pos(z) = a + b*z, and analogously for yaw. With probability
/// outlier_prob a frame's noise is scaled by outlier_scale (flicker).
/// corr_frac splits the budget into a white part and an AR(1) part with
/// coefficient corr_rho, approximating the slowly drifting systematic error
/// of monocular estimators (corr_frac = 0 reproduces pure white noise).
struct NoiseModel {
    double sigma_pos_base = 0.2;                  // a, meters
    double sigma_pos_slope = 0.04;                // b, meters per meter of depth
    double sigma_theta_base = 2.0 * M_PI / 180.0;     // radians
    double sigma_theta_slope = 0.15 * M_PI / 180.0;   // radians per meter of depth
    double outlier_prob = 0.05;
    double outlier_scale = 5.0;
    double corr_frac = 0.0;  // fraction of sigma assigned to the AR(1) part
    double corr_rho = 0.9;   // AR(1) coefficient per frame

    void validate() const;
};

struct OcclusionConfig {
    double prob = 0.3;            // probability that a trajectory gets one occlusion window
    std::size_t min_len = 2;
    std::size_t max_len = 8;
};

struct ScenarioConfig {
    std::size_t n_trajectories = 50;
    std::size_t min_length = 30;
    std::size_t max_length = 80;
    double frame_rate = 10.0;
    double min_speed = 3.0;   // m/s
    double max_speed = 20.0;  // m/s
    OcclusionConfig occlusion;
    std::uint64_t seed = 0;
};

/// Integrates the pattern into a ground-truth trajectory and overlays the
/// noise model onto a copy. Reproducible from the seed.
std::pair<Trajectory, Trajectory> generate_trajectory(const MotionPattern& pattern,
                                                      const NoiseModel& noise, std::size_t length,
                                                      std::uint64_t seed);

/// Marks frames [window_start, window_start + window_len) invalid.
Trajectory apply_occlusion(const Trajectory& traj, std::size_t window_start,
                           std::size_t window_len);

/// Draws a full scenario: randomized patterns, noise, and occlusion windows.
/// Returns (ground truth, noisy) trajectory lists of equal size and ids.
std::pair<std::vector<Trajectory>, std::vector<Trajectory>> generate_scenario(
    const ScenarioConfig& scenario, const NoiseModel& noise);

/// Line-oriented trajectory file: a `frame_rate,<hz>` header line, then one
/// `vehicle_id,frame,x,y,z,theta,valid` record per frame with 17-significant-
/// digit numerics for bit-exact round-trips. '#' lines are comments.
void write_trajectories(const std::vector<Trajectory>& trajs, const std::string& path);
std::vector<Trajectory> read_trajectories(const std::string& path);

}  // namespace dkp
