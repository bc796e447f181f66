#include "dkp/edlkf.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>

#include "dkp/errors.hpp"

namespace dkp {

Eigen::MatrixXd segment_matrix(const TrajectorySegment& seg) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(seg.size()), 4);
    for (std::size_t k = 0; k < seg.size(); ++k) {
        const Pose& p = seg.items[k].pose;
        m.row(static_cast<Eigen::Index>(k)) << p.x, p.y, p.z, p.theta;
    }
    return m;
}

EdlkfStep edlkf_step(const Eigen::Vector4d& x_prev, const Eigen::VectorXd& h,
                     const Eigen::Vector4d& residual_prev, const Eigen::Vector4d& measurement,
                     const Eigen::VectorXd& stfem_feat, const ParamStore& store,
                     const BranchParams& params, const NormStats& stats, const NetConfig& cfg) {
    const Eigen::Vector4d x_pred =
        fsp_forward_cached(x_prev, stfem_feat, store, params.fsp, stats, cfg);

    Eigen::Vector4d innovation = measurement - x_pred;
    innovation[3] = wrap_angle(innovation[3]);

    const GainStep gs = gain_step(innovation, residual_prev, h, store, params.gain, stats, cfg);

    Eigen::Matrix<double, 4, 4, Eigen::RowMajor> k_rm = gs.K;
    EdlkfStep out;
    out.x = x_pred + ad::matvec4_apply(k_rm.data(), innovation);
    out.x[3] = wrap_angle(out.x[3]);
    out.residual = out.x - x_pred;
    out.h = gs.h;
    return out;
}

namespace {

double first_valid_depth(const TrajectorySegment& seg) {
    for (const auto& m : seg.items) {
        if (m.valid) return m.pose.range();
    }
    // A mean-substituted segment always has a valid item; fall back anyway.
    return seg.items.empty() ? 0.0 : seg.items.front().pose.range();
}

void require_substituted(const TrajectorySegment& seg, const char* who) {
    for (const auto& m : seg.items) {
        if (!m.valid && !m.substituted) {
            throw InvalidInputError(std::string(who) + ": segment must be mean-substituted");
        }
    }
}

}  // namespace

BranchOutput run_branch(const TrajectorySegment& seg, const Model& model, bool zero_stfem) {
    if (seg.items.empty()) throw InvalidInputError("run_branch: empty segment");
    require_substituted(seg, "run_branch");

    const BranchParams& params = model.branch(seg.direction);
    const Eigen::MatrixXd values = segment_matrix(seg);
    Eigen::VectorXd stfem_feat =
        stfem_forward(values, model.params, params.fsp, model.stats, model.config);
    if (zero_stfem) stfem_feat.setZero();

    BranchOutput out;
    out.direction = seg.direction;
    out.start_depth = first_valid_depth(seg);
    out.states.reserve(seg.size());

    Eigen::Vector4d x = Eigen::Vector4d::Zero();
    Eigen::Vector4d residual = Eigen::Vector4d::Zero();
    Eigen::VectorXd h = Eigen::VectorXd::Zero(model.config.gain_hidden);
    for (std::size_t k = 0; k < seg.size(); ++k) {
        const EdlkfStep step = edlkf_step(x, h, residual, values.row(static_cast<Eigen::Index>(k)),
                                          stfem_feat, model.params, params, model.stats,
                                          model.config);
        x = step.x;
        residual = step.residual;
        h = step.h;
        out.states.push_back(Pose(x[0], x[1], x[2], x[3]));
    }
    return out;
}

SmoothedSegment cob_combine(const BranchOutput& fwd, const BranchOutput& bwd) {
    if (fwd.direction != Direction::Forward || bwd.direction != Direction::Backward) {
        throw InvalidInputError("cob_combine: expects a Forward and a Backward branch output");
    }
    if (fwd.states.size() != bwd.states.size()) {
        throw InvalidInputError("cob_combine: branch outputs differ in length");
    }
    SmoothedSegment out;
    if (bwd.start_depth < fwd.start_depth) {
        out.chosen_branch = Direction::Backward;
        out.poses.assign(bwd.states.rbegin(), bwd.states.rend());
    } else {
        out.chosen_branch = Direction::Forward;  // tie goes Forward
        out.poses = fwd.states;
    }
    return out;
}

SmoothedSegment smooth_segment(const TrajectorySegment& seg, const Model& model,
                               const SmoothOptions& opts) {
    if (seg.direction != Direction::Forward) {
        throw InvalidInputError("smooth_segment: expects a Forward segment");
    }
    const BranchOutput fwd = run_branch(seg, model, opts.zero_stfem);
    if (!opts.use_backward) {
        SmoothedSegment out;
        out.chosen_branch = Direction::Forward;
        out.poses = fwd.states;
        return out;
    }
    const BranchOutput bwd = run_branch(reverse_segment(seg), model, opts.zero_stfem);
    return cob_combine(fwd, bwd);
}

Trajectory aggregate_overlaps(const Trajectory& traj, const std::vector<PlacedEstimate>& windows) {
    Trajectory out = traj;
    const std::size_t len = traj.size();
    std::vector<double> sx(len, 0.0), sy(len, 0.0), sz(len, 0.0);
    std::vector<double> ssin(len, 0.0), scos(len, 0.0);
    std::vector<std::size_t> count(len, 0);

    for (const auto& w : windows) {
        if (w.offset + w.poses.size() > len) {
            throw InvalidInputError("aggregate_overlaps: window exceeds trajectory bounds");
        }
        for (std::size_t k = 0; k < w.poses.size(); ++k) {
            const Pose& p = w.poses[k];
            sx[w.offset + k] += p.x;
            sy[w.offset + k] += p.y;
            sz[w.offset + k] += p.z;
            ssin[w.offset + k] += std::sin(p.theta);
            scos[w.offset + k] += std::cos(p.theta);
            ++count[w.offset + k];
        }
    }
    for (std::size_t f = 0; f < len; ++f) {
        if (count[f] == 0) {
            warn("smooth_trajectory: frame " + std::to_string(traj.frame_start +
                 static_cast<std::int64_t>(f)) + " of '" + traj.vehicle_id +
                 "' has no usable segment; raw pose kept");
            continue;
        }
        const double inv = 1.0 / static_cast<double>(count[f]);
        double theta;
        if (std::hypot(ssin[f] * inv, scos[f] * inv) < 1e-12) {
            theta = out.poses[f].pose.theta;  // degenerate cancellation; keep input yaw
        } else {
            theta = std::atan2(ssin[f] * inv, scos[f] * inv);
        }
        out.poses[f].pose = Pose(sx[f] * inv, sy[f] * inv, sz[f] * inv, wrap_angle(theta));
        out.poses[f].substituted = !out.poses[f].valid;
        out.poses[f].valid = true;
    }
    return out;
}

namespace {

Trajectory smooth_trajectory_impl(const Trajectory& traj, const Model& model, std::size_t t_len,
                                  const SmoothOptions& opts, bool parallel) {
    if (traj.size() < t_len) {
        warn("smooth_trajectory: trajectory '" + traj.vehicle_id + "' shorter than " +
             std::to_string(t_len) + " frames; returned unmodified");
        return traj;
    }
    const auto segments = segment_trajectory(traj, t_len, 1);
    std::vector<SmoothedSegment> smoothed(segments.size());
    std::vector<char> usable(segments.size(), 0);
    std::vector<std::size_t> offsets(segments.size(), 0);

    const auto work = [&](std::size_t i) {
        offsets[i] = static_cast<std::size_t>(segments[i].frame_offset - traj.frame_start);
        try {
            const TrajectorySegment filled = mean_substitute(segments[i]);
            smoothed[i] = smooth_segment(filled, model, opts);
            usable[i] = 1;
        } catch (const UnusableSegmentError&) {
            usable[i] = 0;  // fully occluded window; reported during aggregation
        }
    };

    if (parallel) {
#ifdef _OPENMP
        const int n_threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(n_threads)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(segments.size()); ++i) {
            work(static_cast<std::size_t>(i));
        }
#else
        for (std::size_t i = 0; i < segments.size(); ++i) work(i);
#endif
    } else {
        for (std::size_t i = 0; i < segments.size(); ++i) work(i);
    }

    std::vector<PlacedEstimate> kept;
    kept.reserve(smoothed.size());
    for (std::size_t i = 0; i < smoothed.size(); ++i) {
        if (!usable[i]) continue;
        kept.push_back({offsets[i], std::move(smoothed[i].poses)});
    }
    return aggregate_overlaps(traj, kept);
}

}  // namespace

Trajectory smooth_trajectory(const Trajectory& traj, const Model& model, std::size_t t_len,
                             const SmoothOptions& opts) {
    return smooth_trajectory_impl(traj, model, t_len, opts, opts.threads != 1);
}

Trajectory smooth_trajectory_serial(const Trajectory& traj, const Model& model, std::size_t t_len,
                                    const SmoothOptions& opts) {
    return smooth_trajectory_impl(traj, model, t_len, opts, false);
}

std::vector<int> tape_branch_rollout(ad::Tape& tape, const TrajectorySegment& seg,
                                     const BranchParams& params, const NormStats& stats,
                                     const NetConfig& cfg, bool zero_stfem) {
    require_substituted(seg, "tape_branch_rollout");
    const std::size_t t_len = seg.size();
    const Eigen::MatrixXd values = segment_matrix(seg);

    Eigen::VectorXd flat(static_cast<Eigen::Index>(t_len) * 4);
    for (std::size_t k = 0; k < t_len; ++k) {
        flat.segment(static_cast<Eigen::Index>(k) * 4, 4) =
            values.row(static_cast<Eigen::Index>(k)).transpose();
    }
    const int seg_node = tape.constant(std::move(flat));
    int stfem_feat = tape_stfem(tape, seg_node, static_cast<int>(t_len), params.fsp, stats, cfg);
    if (zero_stfem) {
        stfem_feat = tape.constant(Eigen::VectorXd::Zero(cfg.stfem_c2));
    }

    int x = tape.constant(Eigen::Vector4d::Zero());
    int residual = tape.constant(Eigen::Vector4d::Zero());
    int h = tape.constant(Eigen::VectorXd::Zero(cfg.gain_hidden));

    std::vector<int> states;
    states.reserve(t_len);
    for (std::size_t k = 0; k < t_len; ++k) {
        const int x_pred = tape_fsp_cached(tape, x, stfem_feat, params.fsp, stats);
        const int meas = tape.constant(values.row(static_cast<Eigen::Index>(k)).transpose());
        const int innovation = tape.wrap_theta(tape.sub(meas, x_pred));
        const TapeGainStep gs = tape_gain_step(tape, innovation, residual, h, params.gain, stats);
        const int correction = tape.matvec4(gs.k_flat, innovation);
        x = tape.wrap_theta(tape.add(x_pred, correction));
        residual = tape.sub(x, x_pred);
        h = gs.h;
        states.push_back(x);
    }
    return states;
}

}  // namespace dkp
