#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dkp/fsp_net.hpp"
#include "dkp/pose.hpp"
#include "dkp/tape.hpp"

namespace dkp {

/// One branch's posterior states, in processing order.
struct BranchOutput {
    std::vector<Pose> states;
    Direction direction = Direction::Forward;
    double start_depth = 0.0;  // camera range of the first processed valid measurement
};

/// A segment after the conditional output block, back in chronological order.
struct SmoothedSegment {
    std::vector<Pose> poses;
    Direction chosen_branch = Direction::Forward;
};

/// Inference-time ablation switches.
struct SmoothOptions {
    bool use_backward = true;  // false: always take the forward branch
    bool zero_stfem = false;   // zero the sequence features P
    int threads = 0;           // 0 = library default; 1 = serial
};

/// One filter iteration: FSP prediction, wrapped innovation, learned-gain
/// correction. `residual_prev` is the previous posterior-minus-prior
/// difference (zero at segment start).
struct EdlkfStep {
    Eigen::Vector4d x;       // posterior
    Eigen::Vector4d residual;  // posterior - prior, input to the next gain step
    Eigen::VectorXd h;
};
EdlkfStep edlkf_step(const Eigen::Vector4d& x_prev, const Eigen::VectorXd& h,
                     const Eigen::Vector4d& residual_prev, const Eigen::Vector4d& measurement,
                     const Eigen::VectorXd& stfem_feat, const ParamStore& store,
                     const BranchParams& params, const NormStats& stats, const NetConfig& cfg);

/// Runs the T-step recursion over a mean-substituted segment with zero
/// initial state and hidden state. Uses the parameter set matching the
/// segment's direction.
BranchOutput run_branch(const TrajectorySegment& seg, const Model& model,
                        bool zero_stfem = false);

/// Selects the whole chronological sequence from the branch whose processing
/// starts closer to the camera (tie: Forward).
SmoothedSegment cob_combine(const BranchOutput& fwd, const BranchOutput& bwd);

/// Smooths one segment: forward branch on the segment, backward branch on
/// its reversal, then the conditional output block.
SmoothedSegment smooth_segment(const TrajectorySegment& seg, const Model& model,
                               const SmoothOptions& opts = {});

/// One frame-aligned smoothed window, positioned by its first frame's offset
/// from the trajectory start.
struct PlacedEstimate {
    std::size_t offset = 0;
    std::vector<Pose> poses;
};

/// Per-frame reduction of overlapping window estimates: arithmetic mean on
/// x,y,z and circular mean on yaw. Frames no window covers keep the input
/// pose (with a warning); all output frames are marked valid.
Trajectory aggregate_overlaps(const Trajectory& traj, const std::vector<PlacedEstimate>& windows);

/// Whole-trajectory smoothing: stride-1 segmentation, per-segment smoothing
/// (parallel across segments), then per-frame aggregation of overlapping
/// estimates (arithmetic mean on x,y,z, circular mean on yaw). Trajectories
/// shorter than T are returned unmodified with a warning.
Trajectory smooth_trajectory(const Trajectory& traj, const Model& model, std::size_t t_len,
                             const SmoothOptions& opts = {});

/// Serial reference implementation of smooth_trajectory (no OpenMP); kept
/// for equivalence testing and benchmarking.
Trajectory smooth_trajectory_serial(const Trajectory& traj, const Model& model, std::size_t t_len,
                                    const SmoothOptions& opts = {});

// ---- differentiable rollout for training ----

/// Builds the branch recursion on the tape and returns the T posterior state
/// node ids in processing order. `seg` must already be in the branch's
/// processing order (reversed for Backward).
std::vector<int> tape_branch_rollout(ad::Tape& tape, const TrajectorySegment& seg,
                                     const BranchParams& params, const NormStats& stats,
                                     const NetConfig& cfg, bool zero_stfem = false);

/// Segment values as a T x 4 matrix in item order.
Eigen::MatrixXd segment_matrix(const TrajectorySegment& seg);

}  // namespace dkp
