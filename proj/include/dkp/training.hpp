#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dkp/edlkf.hpp"
#include "dkp/fsp_net.hpp"
#include "dkp/pose.hpp"

namespace dkp {

struct TrainConfig {
    double learning_rate = 0.001;
    double weight_decay = 1e-5;
    std::size_t batch_size = 128;
    std::size_t iterations = 4000;
    std::size_t context_length = 20;
    std::uint64_t seed = 0;
    int threads = 0;      // 0 = library default; 1 = serial
    double grad_clip = 10.0;  // global L2-norm clip before Adam; 0 disables

    void validate() const;
};

/// One supervised segment: a (noisy, possibly substituted) input window and
/// its chronologically aligned ground-truth poses.
struct TrainSample {
    TrajectorySegment input_segment;  // Forward, mean-substituted
    std::vector<Pose> target;         // length T, chronological
};

/// Pairs noisy and ground-truth trajectories by vehicle id and slices both
/// into aligned stride-`stride` windows. Misaligned inputs raise an error
/// naming the offending ids; unusable (fully occluded) windows are skipped
/// with a warning.
std::vector<TrainSample> build_dataset(const std::vector<Trajectory>& noisy,
                                       const std::vector<Trajectory>& gt, std::size_t t_len,
                                       std::size_t stride);

/// Mean per-step pose loss: L1 on translations plus 1 - cos on yaw.
double segment_loss(const std::vector<Pose>& pred, const std::vector<Pose>& target);

/// Adam with coupled L2 weight decay (g += wd * theta before the moments).
class AdamOptimizer {
public:
    explicit AdamOptimizer(const ParamStore& store);

    void step(ParamStore& store, const GradBuffer& grads, const TrainConfig& cfg,
              std::size_t iteration);  // iteration is 1-based

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

private:
    GradBuffer m_, v_;
};

/// Loss of one sample, averaged over the forward branch on the segment and
/// the backward branch on its reversal. Plain (tape-free) evaluation; the
/// finite-difference oracle in grad_check perturbs parameters through this.
double sample_loss_plain(const Model& model, const TrainSample& sample);

/// Same loss built on the tape; gradients accumulate into `grads`.
double sample_loss_backward(const Model& model, const TrainSample& sample, GradBuffer& grads);

struct BatchResult {
    double mean_loss = 0.0;
    GradBuffer grads;  // already averaged over the batch
};

/// Per-sample losses/gradients (parallel across samples), reduced in index
/// order so results do not depend on the thread count.
BatchResult batch_gradients(const Model& model, const std::vector<TrainSample>& dataset,
                            const std::vector<std::size_t>& indices, int threads);

struct TrainResult {
    Model model;
    std::vector<double> loss_curve;  // one entry per iteration
};

/// Full training loop: normalization stats from the inputs, Glorot init from
/// cfg.seed, uniform-with-replacement mini-batches, Adam updates.
TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg);

struct GradCheckEntry {
    std::string tensor;
    double max_rel = 0.0;        // elements with max(|analytic|, |fd|) >= 1e-6
    double max_abs_small = 0.0;  // near-zero elements
    int checked = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error_small = 0.0;
    std::string worst_tensor;
    std::vector<GradCheckEntry> entries;

    bool pass(double rel_tol = 1e-4, double abs_tol = 1e-7) const {
        return max_rel_error < rel_tol && max_abs_error_small < abs_tol;
    }
};

/// Central finite differences of the full sample loss against the analytic
/// gradients, on a deterministic element subset of every parameter tensor.
/// `corrupt_tensor` (test hook) flips that tensor's analytic gradient sign.
GradCheckReport grad_check(Model& model, const TrainSample& sample, double epsilon,
                           int elements_per_tensor = 8, const std::string& corrupt_tensor = "");

}  // namespace dkp
