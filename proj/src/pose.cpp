#include "dkp/pose.hpp"

#include <algorithm>
#include <cmath>

#include "dkp/errors.hpp"

namespace dkp {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
}

double wrap_angle(double theta) {
    if (!std::isfinite(theta)) throw InvalidInputError("wrap_angle: non-finite angle");
    double w = std::remainder(theta, kTwoPi);  // (-pi, pi], -pi possible at ties
    if (w >= M_PI) w -= kTwoPi;                // interval closed at -pi, open at +pi
    return w;
}

double angular_error(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw InvalidInputError("angular_error: non-finite angle");
    }
    return std::abs(wrap_angle(a - b));
}

bool circular_mean(const std::vector<double>& angles, double* out) {
    double s = 0.0, c = 0.0;
    for (double a : angles) {
        s += std::sin(a);
        c += std::cos(a);
    }
    s /= static_cast<double>(angles.size());
    c /= static_cast<double>(angles.size());
    if (std::hypot(s, c) < 1e-12) return false;
    *out = wrap_angle(std::atan2(s, c));
    return true;
}

Pose::Pose(double x_, double y_, double z_, double theta_) : x(x_), y(y_), z(z_) {
    if (!std::isfinite(x_) || !std::isfinite(y_) || !std::isfinite(z_)) {
        throw InvalidInputError("Pose: non-finite translation component");
    }
    theta = wrap_angle(theta_);
}

double Pose::range() const { return std::sqrt(x * x + y * y + z * z); }

std::vector<TrajectorySegment> segment_trajectory(const Trajectory& traj, std::size_t t,
                                                  std::size_t stride) {
    if (t < 2) throw InvalidInputError("segment_trajectory: context length must be >= 2");
    if (stride < 1) throw InvalidInputError("segment_trajectory: stride must be >= 1");

    std::vector<TrajectorySegment> out;
    const std::size_t len = traj.size();
    if (len < t) {
        warn("trajectory '" + traj.vehicle_id + "' has " + std::to_string(len) +
             " frames, shorter than context length " + std::to_string(t) + "; skipped");
        return out;
    }
    const std::size_t n = (len - t) / stride + 1;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t begin = i * stride;
        TrajectorySegment seg;
        seg.source_id = traj.vehicle_id;
        seg.frame_offset = traj.frame_start + static_cast<std::int64_t>(begin);
        seg.items.assign(traj.poses.begin() + static_cast<std::ptrdiff_t>(begin),
                         traj.poses.begin() + static_cast<std::ptrdiff_t>(begin + t));
        seg.direction = Direction::Forward;
        out.push_back(std::move(seg));
    }
    return out;
}

TrajectorySegment mean_substitute(const TrajectorySegment& seg) {
    double sx = 0.0, sy = 0.0, sz = 0.0;
    std::vector<double> thetas;
    std::size_t n_valid = 0;
    for (const auto& m : seg.items) {
        if (!m.valid) continue;
        sx += m.pose.x;
        sy += m.pose.y;
        sz += m.pose.z;
        thetas.push_back(m.pose.theta);
        ++n_valid;
    }
    if (n_valid == 0) {
        throw UnusableSegmentError("mean_substitute: segment of '" + seg.source_id +
                                   "' at frame " + std::to_string(seg.frame_offset) +
                                   " has no valid poses");
    }
    const double inv = 1.0 / static_cast<double>(n_valid);
    double mean_theta = 0.0;
    const bool have_theta = circular_mean(thetas, &mean_theta);

    TrajectorySegment out = seg;
    for (std::size_t i = 0; i < out.items.size(); ++i) {
        auto& m = out.items[i];
        if (m.valid) continue;
        double th = mean_theta;
        if (!have_theta) {
            // Opposing angles cancel; take the yaw of the nearest valid neighbor.
            std::size_t best = 0;
            std::size_t best_dist = out.items.size();
            for (std::size_t j = 0; j < out.items.size(); ++j) {
                if (!out.items[j].valid) continue;
                const std::size_t d = i > j ? i - j : j - i;
                if (d < best_dist) {
                    best_dist = d;
                    best = j;
                }
            }
            th = out.items[best].pose.theta;
        }
        m.pose = Pose(sx * inv, sy * inv, sz * inv, th);
        m.substituted = true;
    }
    return out;
}

TrajectorySegment reverse_segment(const TrajectorySegment& seg) {
    if (seg.direction != Direction::Forward) {
        throw InvalidInputError("reverse_segment: input already Backward");
    }
    TrajectorySegment out = seg;
    std::reverse(out.items.begin(), out.items.end());
    out.direction = Direction::Backward;
    return out;
}

}  // namespace dkp
