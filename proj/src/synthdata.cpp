#include "dkp/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dkp/errors.hpp"
#include "dkp/rng.hpp"

namespace dkp {

void MotionPattern::validate() const {
    if (!(speed >= 0.0 && speed <= 40.0)) {
        throw InvalidInputError("MotionPattern: speed must be in [0, 40] m/s");
    }
    if (!(std::abs(yaw_rate) <= 0.5)) {
        throw InvalidInputError("MotionPattern: |yaw_rate| must be <= 0.5 rad/s");
    }
    if (!std::isfinite(accel)) throw InvalidInputError("MotionPattern: non-finite acceleration");
}

void NoiseModel::validate() const {
    if (sigma_pos_base < 0 || sigma_pos_slope < 0 || sigma_theta_base < 0 ||
        sigma_theta_slope < 0 || outlier_prob < 0 || outlier_scale < 0) {
        throw InvalidInputError("NoiseModel: all fields must be non-negative");
    }
    if (outlier_prob > 0.2) throw InvalidInputError("NoiseModel: outlier_prob must be <= 0.2");
    if (corr_frac > 0.95) throw InvalidInputError("NoiseModel: corr_frac must be <= 0.95");
    if (corr_rho >= 1.0) throw InvalidInputError("NoiseModel: corr_rho must be < 1");
}

namespace {

std::vector<Pose> integrate_pattern(const MotionPattern& p, std::size_t length, double dt) {
    std::vector<Pose> out;
    out.reserve(length);
    double x = p.initial.x, y = p.initial.y, z = p.initial.z;
    double theta = p.initial.theta;
    double speed = p.speed;
    for (std::size_t k = 0; k < length; ++k) {
        out.emplace_back(x, y, z, theta);
        switch (p.kind) {
            case MotionKind::ConstantVelocity:
                break;
            case MotionKind::ConstantTurnRate:
                theta = wrap_angle(theta + p.yaw_rate * dt);
                break;
            case MotionKind::Accelerating:
                speed = std::clamp(speed + p.accel * dt, 0.0, 40.0);
                break;
            case MotionKind::Stopping:
                speed = std::max(0.0, speed - std::abs(p.accel) * dt);
                break;
        }
        x += speed * std::sin(theta) * dt;
        z += speed * std::cos(theta) * dt;
    }
    return out;
}

}  // namespace

std::pair<Trajectory, Trajectory> generate_trajectory(const MotionPattern& pattern,
                                                      const NoiseModel& noise, std::size_t length,
                                                      std::uint64_t seed) {
    pattern.validate();
    noise.validate();
    if (length < 2) throw InvalidInputError("generate_trajectory: length must be >= 2");

    const double frame_rate = 10.0;
    Trajectory gt;
    gt.frame_rate = frame_rate;
    const auto poses = integrate_pattern(pattern, length, 1.0 / frame_rate);
    gt.poses.reserve(length);
    for (const auto& p : poses) gt.poses.push_back({p, true, false});

    Trajectory noisy = gt;
    Rng rng(seed);
    const double f = noise.corr_frac;
    const double white = std::sqrt(1.0 - f * f);
    double cx = 0, cy = 0, cz = 0, ct = 0;  // AR(1) carriers, unit variance
    if (f > 0.0) {
        cx = rng.normal();
        cy = rng.normal();
        cz = rng.normal();
        ct = rng.normal();
    }
    const double rho = noise.corr_rho;
    const double drive = std::sqrt(1.0 - rho * rho);
    for (std::size_t k = 0; k < length; ++k) {
        const Pose& p = poses[k];
        const double depth = p.z;
        double sp = noise.sigma_pos_base + noise.sigma_pos_slope * depth;
        double st = noise.sigma_theta_base + noise.sigma_theta_slope * depth;
        // Draw the scale decision after the Gaussians so the stream layout is
        // fixed per frame regardless of outcome.
        const double nx = rng.normal(), ny = rng.normal(), nz = rng.normal();
        const double nt = rng.normal();
        const bool outlier = rng.uniform() < noise.outlier_prob;
        double ex = white * nx, ey = white * ny, ez = white * nz, et = white * nt;
        if (outlier) {  // flicker scales the white part only
            ex *= noise.outlier_scale;
            ey *= noise.outlier_scale;
            ez *= noise.outlier_scale;
            et *= noise.outlier_scale;
        }
        if (f > 0.0) {
            if (k > 0) {
                cx = rho * cx + drive * rng.normal();
                cy = rho * cy + drive * rng.normal();
                cz = rho * cz + drive * rng.normal();
                ct = rho * ct + drive * rng.normal();
            }
            ex += f * cx;
            ey += f * cy;
            ez += f * cz;
            et += f * ct;
        }
        noisy.poses[k].pose = Pose(p.x + sp * ex, p.y + sp * ey, p.z + sp * ez,
                                   wrap_angle(p.theta + st * et));
    }
    return {std::move(gt), std::move(noisy)};
}

Trajectory apply_occlusion(const Trajectory& traj, std::size_t window_start,
                           std::size_t window_len) {
    if (window_start > traj.size() || window_start + window_len > traj.size()) {
        throw InvalidInputError("apply_occlusion: window exceeds trajectory bounds");
    }
    Trajectory out = traj;
    for (std::size_t k = window_start; k < window_start + window_len; ++k) {
        out.poses[k].valid = false;
    }
    return out;
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> generate_scenario(
    const ScenarioConfig& scenario, const NoiseModel& noise) {
    noise.validate();
    if (scenario.min_length < 2 || scenario.max_length < scenario.min_length) {
        throw InvalidInputError("generate_scenario: bad length range");
    }
    if (scenario.min_speed < 0 || scenario.max_speed > 40 ||
        scenario.max_speed < scenario.min_speed) {
        throw InvalidInputError("generate_scenario: bad speed range");
    }

    std::vector<Trajectory> gts, noisies;
    for (std::size_t i = 0; i < scenario.n_trajectories; ++i) {
        const std::uint64_t traj_seed =
            sub_seed(scenario.seed, "trajectory/" + std::to_string(i));
        Rng rng(traj_seed);

        const std::size_t length =
            scenario.min_length + rng.uniform_int(scenario.max_length - scenario.min_length + 1);

        // Rejection-sample a pattern that keeps the vehicle in a sane
        // camera-frame box for the whole track.
        MotionPattern pat;
        std::vector<Pose> probe;
        bool ok = false;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            const int kind = static_cast<int>(rng.uniform_int(4));
            pat.kind = static_cast<MotionKind>(kind);
            // Approaching (heading back toward the camera), receding, or crossing.
            const double mode = rng.uniform();
            double heading;
            if (mode < 0.4) {
                heading = rng.uniform(-0.35, 0.35);  // receding
            } else if (mode < 0.8) {
                heading = wrap_angle(M_PI + rng.uniform(-0.35, 0.35));  // approaching
            } else {
                heading = (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(1.1, 2.0);  // crossing
            }
            pat.initial = Pose(rng.uniform(-8.0, 8.0), rng.uniform(0.8, 1.8),
                               rng.uniform(8.0, 45.0), heading);
            pat.speed = rng.uniform(scenario.min_speed, scenario.max_speed);
            pat.yaw_rate = pat.kind == MotionKind::ConstantTurnRate ? rng.uniform(-0.3, 0.3) : 0.0;
            pat.accel = 0.0;
            if (pat.kind == MotionKind::Accelerating) pat.accel = rng.uniform(-2.0, 2.0);
            if (pat.kind == MotionKind::Stopping) pat.accel = rng.uniform(0.5, 3.0);

            probe = integrate_pattern(pat, length, 1.0 / scenario.frame_rate);
            ok = std::all_of(probe.begin(), probe.end(), [](const Pose& p) {
                return p.z > 4.0 && p.z < 120.0 && std::abs(p.x) < 60.0;
            });
        }
        if (!ok) {  // give up on this draw: slow receding car always fits
            pat = MotionPattern{};
            pat.initial = Pose(0.0, 1.2, 20.0, 0.0);
            pat.speed = 5.0;
        }

        auto [gt, noisy] =
            generate_trajectory(pat, noise, length, sub_seed(traj_seed, "noise"));
        char id[32];
        std::snprintf(id, sizeof(id), "car_%04zu", i);
        gt.vehicle_id = id;
        gt.frame_rate = scenario.frame_rate;
        noisy.vehicle_id = id;
        noisy.frame_rate = scenario.frame_rate;

        if (rng.uniform() < scenario.occlusion.prob && length > scenario.occlusion.max_len + 2) {
            const std::size_t span = scenario.occlusion.min_len +
                rng.uniform_int(scenario.occlusion.max_len - scenario.occlusion.min_len + 1);
            const std::size_t start = 1 + rng.uniform_int(length - span - 1);
            noisy = apply_occlusion(noisy, start, span);
        }

        gts.push_back(std::move(gt));
        noisies.push_back(std::move(noisy));
    }
    return {std::move(gts), std::move(noisies)};
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& path, std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw IoError(path + ":" + std::to_string(line_no) + ": bad numeric field '" +
                      std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
}

}  // namespace

void write_trajectories(const std::vector<Trajectory>& trajs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    const double frame_rate = trajs.empty() ? 10.0 : trajs.front().frame_rate;
    f << "frame_rate," << format_double(frame_rate) << "\n";
    for (const auto& t : trajs) {
        for (std::size_t k = 0; k < t.size(); ++k) {
            const auto& m = t.poses[k];
            f << t.vehicle_id << ',' << (t.frame_start + static_cast<std::int64_t>(k)) << ','
              << format_double(m.pose.x) << ',' << format_double(m.pose.y) << ','
              << format_double(m.pose.z) << ',' << format_double(m.pose.theta) << ','
              << (m.valid ? 1 : 0) << "\n";
        }
    }
    if (!f.flush()) throw IoError("write failed for '" + path + "'");
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for reading");

    std::vector<Trajectory> out;
    std::map<std::string, std::size_t> index;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    double frame_rate = 10.0;

    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_csv(line);
        if (!have_header) {
            if (fields.size() != 2 || fields[0] != "frame_rate") {
                throw IoError(path + ":" + std::to_string(line_no) +
                              ": expected 'frame_rate,<hz>' header line");
            }
            frame_rate = parse_double(fields[1], path, line_no);
            if (!(frame_rate > 0)) {
                throw IoError(path + ":" + std::to_string(line_no) + ": frame_rate must be > 0");
            }
            have_header = true;
            continue;
        }
        if (fields.size() != 7) {
            throw IoError(path + ":" + std::to_string(line_no) + ": expected 7 fields, got " +
                          std::to_string(fields.size()));
        }
        const std::string id(fields[0]);
        const double frame_d = parse_double(fields[1], path, line_no);
        const auto frame = static_cast<std::int64_t>(frame_d);
        if (static_cast<double>(frame) != frame_d) {
            throw IoError(path + ":" + std::to_string(line_no) + ": frame index must be integral");
        }
        MeasuredPose m;
        try {
            m.pose = Pose(parse_double(fields[2], path, line_no),
                          parse_double(fields[3], path, line_no),
                          parse_double(fields[4], path, line_no),
                          parse_double(fields[5], path, line_no));
        } catch (const InvalidInputError& e) {
            throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (fields[6] != "0" && fields[6] != "1") {
            throw IoError(path + ":" + std::to_string(line_no) + ": valid flag must be 0 or 1");
        }
        m.valid = fields[6] == "1";

        auto it = index.find(id);
        if (it == index.end()) {
            index.emplace(id, out.size());
            Trajectory t;
            t.vehicle_id = id;
            t.frame_start = frame;
            t.frame_rate = frame_rate;
            t.poses.push_back(m);
            out.push_back(std::move(t));
        } else {
            Trajectory& t = out[it->second];
            const std::int64_t expected = t.frame_start + static_cast<std::int64_t>(t.size());
            if (frame != expected) {
                throw IoError(path + ":" + std::to_string(line_no) + ": vehicle '" + id +
                              "' expects frame " + std::to_string(expected) + ", got " +
                              std::to_string(frame) +
                              " (frames must be contiguous; mark gaps with valid=0)");
            }
            t.poses.push_back(m);
        }
    }
    return out;
}

}  // namespace dkp
