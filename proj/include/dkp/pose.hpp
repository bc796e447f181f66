#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dkp {

/// Wraps an angle into [-pi, pi). Throws InvalidInputError on non-finite input.
double wrap_angle(double theta);

/// Geodesic distance between two angles, in [0, pi]. Symmetric.
double angular_error(double a, double b);

/// Circular mean of a set of angles (atan2 of averaged sin/cos).
/// Returns false when the mean resultant vector is (numerically) zero,
/// in which case no direction is defined.
bool circular_mean(const std::vector<double>& angles, double* out);

/// Camera-frame vehicle pose: translation in meters, yaw in radians.
/// theta is kept in [-pi, pi); all components are finite.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double theta = 0.0;

    Pose() = default;
    Pose(double x_, double y_, double z_, double theta_);

    std::array<double, 4> as_array() const { return {x, y, z, theta}; }
    static Pose from_array(const std::array<double, 4>& v) { return Pose(v[0], v[1], v[2], v[3]); }

    /// Euclidean camera distance of the translation.
    double range() const;

    bool operator==(const Pose&) const = default;
};

/// A per-frame estimator output. valid=false marks a mis-detection whose
/// pose content is meaningless until mean substitution fills it;
/// substituted=true records that the fill happened (kept for
/// occlusion-binned evaluation).
struct MeasuredPose {
    Pose pose;
    bool valid = true;
    bool substituted = false;

    bool operator==(const MeasuredPose&) const = default;
};

/// Chronological per-vehicle pose sequence. Frames are contiguous starting
/// at frame_start; detection gaps are valid=false entries, never missing rows.
struct Trajectory {
    std::string vehicle_id;
    std::int64_t frame_start = 0;
    std::vector<MeasuredPose> poses;
    double frame_rate = 10.0;

    std::size_t size() const { return poses.size(); }
};

enum class Direction { Forward, Backward };

/// Fixed-length window of T measured poses, the filter's unit of work.
/// Backward segments store the exact time-reversal of a forward segment.
struct TrajectorySegment {
    std::string source_id;
    std::int64_t frame_offset = 0;  // frame index of the chronologically first item
    std::vector<MeasuredPose> items;
    Direction direction = Direction::Forward;

    std::size_t size() const { return items.size(); }
};

/// Algorithm: slide a window of length t over the trajectory with the given
/// stride. Trajectories shorter than t yield an empty list plus a warning.
std::vector<TrajectorySegment> segment_trajectory(const Trajectory& traj, std::size_t t,
                                                  std::size_t stride);

/// Replaces every invalid item's pose by the mean of the valid items
/// (arithmetic for x,y,z, circular for theta) and flags it substituted.
/// Throws UnusableSegmentError when no item is valid.
TrajectorySegment mean_substitute(const TrajectorySegment& seg);

/// Time-reverses a Forward segment into a Backward one.
TrajectorySegment reverse_segment(const TrajectorySegment& seg);

}  // namespace dkp
