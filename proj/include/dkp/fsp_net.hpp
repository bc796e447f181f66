#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "dkp/params.hpp"
#include "dkp/pose.hpp"
#include "dkp/tape.hpp"

namespace dkp {

/// Layer widths for the learnable filter. The input (pose) dimension is
/// fixed at 4 and the gain network consumes 8 features per step.
struct NetConfig {
    int sfem_hidden = 32;
    int sfem_out = 32;
    int stfem_c1 = 16;
    int stfem_c2 = 32;
    int conv_kernel = 3;
    int sem_hidden = 32;
    int gain_hidden = 64;

    bool operator==(const NetConfig&) const = default;
};

/// Dataset-level z-score statistics for the translation components. Yaw is
/// passed through unscaled. Frozen into checkpoints at training time.
struct NormStats {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();

    void validate() const;

    /// (a, b) such that a .* pose + b z-scores the translation block.
    Eigen::Vector4d norm_scale() const;
    Eigen::Vector4d norm_shift() const;
    /// Scale-only normalization for difference vectors (innovations, residuals).
    Eigen::Vector4d diff_scale() const;
    /// De-normalization factors for predicted translation deltas.
    Eigen::Vector4d delta_scale() const;
};

/// Computes stats over every item of the given segments (population std).
NormStats compute_norm_stats(const std::vector<TrajectorySegment>& segments);

/// Tensor ids of the Future State Predictor: SFEM (state encoder), STFEM
/// (sequence encoder), and the four per-component SEM decoder heads.
struct FspParamIds {
    int sfem_w1, sfem_b1, sfem_w2, sfem_b2;
    int conv1_w, conv1_b, conv2_w, conv2_b;
    int sem_w1[4], sem_b1[4], sem_w2[4], sem_b2[4];
};

/// Tensor ids of the learned-gain recurrent cell (GRU) and its projection
/// to the flattened 4x4 gain matrix.
struct GainParamIds {
    int wz, uz, bz;
    int wr, ur, br;
    int wh, uh, bh;
    int proj_w, proj_b;
};

struct BranchParams {
    FspParamIds fsp;
    GainParamIds gain;
};

/// Registers one branch's tensors under `prefix` (e.g. "fwd"); registration
/// order is fixed and doubles as the checkpoint tensor order.
BranchParams register_branch(ParamStore& store, const std::string& prefix, const NetConfig& cfg);

/// The full model: two branch parameter sets sharing one store plus the
/// normalization statistics.
struct Model {
    NetConfig config;
    NormStats stats;
    ParamStore params;
    BranchParams fwd, bwd;

    static Model create(const NetConfig& cfg = NetConfig{});
    /// Glorot weights (gain projection at reduced scale), zero biases, and
    /// the gain projection bias opened at vec(I4) so the untrained filter
    /// starts at the stable posterior-equals-measurement point.
    void init(std::uint64_t seed);
    const BranchParams& branch(Direction d) const {
        return d == Direction::Forward ? fwd : bwd;
    }
};

// ---- plain (inference) forward path ----

/// State feature vector N from the previous state.
Eigen::VectorXd sfem_forward(const Eigen::Vector4d& x_prev, const ParamStore& store,
                             const FspParamIds& p, const NormStats& stats, const NetConfig& cfg);

/// Sequence feature vector P from the whole (T x 4) segment, rows in the
/// branch's processing order.
Eigen::VectorXd stfem_forward(const Eigen::MatrixXd& seg_values, const ParamStore& store,
                              const FspParamIds& p, const NormStats& stats, const NetConfig& cfg);

/// Predicted state: x_prev plus per-component SEM deltas (translation deltas
/// de-normalized, yaw wrapped).
Eigen::Vector4d fsp_forward(const Eigen::Vector4d& x_prev, const Eigen::MatrixXd& seg_values,
                            const ParamStore& store, const FspParamIds& p, const NormStats& stats,
                            const NetConfig& cfg);

/// fsp_forward with the sequence features P precomputed (P is constant per
/// segment; callers cache it across the T steps).
Eigen::Vector4d fsp_forward_cached(const Eigen::Vector4d& x_prev, const Eigen::VectorXd& stfem_feat,
                                   const ParamStore& store, const FspParamIds& p,
                                   const NormStats& stats, const NetConfig& cfg);

struct GainStep {
    Eigen::Matrix4d K;
    Eigen::VectorXd h;
};

/// One recurrent gain step. Inputs are scale-normalized internally; the
/// returned K applies to raw (unnormalized) innovations.
GainStep gain_step(const Eigen::Vector4d& innovation, const Eigen::Vector4d& residual_prev,
                   const Eigen::VectorXd& h, const ParamStore& store, const GainParamIds& p,
                   const NormStats& stats, const NetConfig& cfg);

// ---- tape (training) builders; same math, differentiable ----

int tape_sfem(ad::Tape& tape, int x_prev, const FspParamIds& p, const NormStats& stats);
int tape_stfem(ad::Tape& tape, int seg_flat, int t_len, const FspParamIds& p,
               const NormStats& stats, const NetConfig& cfg);
int tape_fsp_cached(ad::Tape& tape, int x_prev, int stfem_feat, const FspParamIds& p,
                    const NormStats& stats);
struct TapeGainStep {
    int k_flat;
    int h;
};
TapeGainStep tape_gain_step(ad::Tape& tape, int innovation, int residual_prev, int h,
                            const GainParamIds& p, const NormStats& stats);

}  // namespace dkp
