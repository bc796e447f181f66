#include "dkp/training.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dkp/errors.hpp"
#include "dkp/rng.hpp"

namespace dkp {

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw InvalidInputError("TrainConfig: learning_rate must be > 0");
    if (weight_decay < 0) throw InvalidInputError("TrainConfig: weight_decay must be >= 0");
    if (batch_size < 1) throw InvalidInputError("TrainConfig: batch_size must be >= 1");
    if (context_length < 2) throw InvalidInputError("TrainConfig: context_length must be >= 2");
    if (grad_clip < 0) throw InvalidInputError("TrainConfig: grad_clip must be >= 0");
}

// Global L2-norm gradient clipping. BPTT through the gain recursion can
// blow up when the correction loop crosses ||I - K|| = 1 mid-training.
void clip_gradients(GradBuffer& grads, double max_norm) {
    if (max_norm <= 0) return;
    double sq = 0.0;
    for (const auto& g : grads.g) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm) grads.scale(max_norm / norm);
}

std::vector<TrainSample> build_dataset(const std::vector<Trajectory>& noisy,
                                       const std::vector<Trajectory>& gt, std::size_t t_len,
                                       std::size_t stride) {
    std::map<std::string, const Trajectory*> gt_by_id;
    for (const auto& t : gt) gt_by_id.emplace(t.vehicle_id, &t);

    std::vector<std::string> offenders;
    for (const auto& n : noisy) {
        auto it = gt_by_id.find(n.vehicle_id);
        if (it == gt_by_id.end() || it->second->size() != n.size() ||
            it->second->frame_start != n.frame_start) {
            offenders.push_back(n.vehicle_id);
        }
    }
    if (noisy.size() != gt.size()) {
        for (const auto& g : gt) {
            const bool found = std::any_of(noisy.begin(), noisy.end(), [&](const Trajectory& n) {
                return n.vehicle_id == g.vehicle_id;
            });
            if (!found) offenders.push_back(g.vehicle_id);
        }
    }
    if (!offenders.empty()) {
        std::ostringstream os;
        os << "build_dataset: misaligned trajectories:";
        for (const auto& id : offenders) os << ' ' << id;
        throw InvalidInputError(os.str());
    }

    std::vector<TrainSample> out;
    for (const auto& n : noisy) {
        const Trajectory* g = gt_by_id.at(n.vehicle_id);
        const auto in_segs = segment_trajectory(n, t_len, stride);
        const auto gt_segs = segment_trajectory(*g, t_len, stride);
        for (std::size_t i = 0; i < in_segs.size(); ++i) {
            TrainSample s;
            try {
                s.input_segment = mean_substitute(in_segs[i]);
            } catch (const UnusableSegmentError&) {
                warn("build_dataset: skipping fully occluded window of '" + n.vehicle_id +
                     "' at frame " + std::to_string(in_segs[i].frame_offset));
                continue;
            }
            s.target.reserve(t_len);
            for (const auto& m : gt_segs[i].items) s.target.push_back(m.pose);
            out.push_back(std::move(s));
        }
    }
    return out;
}

double segment_loss(const std::vector<Pose>& pred, const std::vector<Pose>& target) {
    if (pred.size() != target.size()) {
        throw InvalidInputError("segment_loss: length mismatch");
    }
    if (pred.empty()) throw InvalidInputError("segment_loss: empty sequences");
    double total = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        total += std::abs(pred[k].x - target[k].x) + std::abs(pred[k].y - target[k].y) +
                 std::abs(pred[k].z - target[k].z) +
                 (1.0 - std::cos(pred[k].theta - target[k].theta));
    }
    return total * (1.0 / static_cast<double>(pred.size()));
}

AdamOptimizer::AdamOptimizer(const ParamStore& store) {
    m_.init(store);
    v_.init(store);
}

void AdamOptimizer::step(ParamStore& store, const GradBuffer& grads, const TrainConfig& cfg,
                         std::size_t iteration) {
    if (grads.g.size() != store.size()) throw InvalidInputError("adam: gradient/store mismatch");
    if (iteration < 1) throw InvalidInputError("adam: iteration must be >= 1");
    const double b1t = 1.0 - std::pow(kBeta1, static_cast<double>(iteration));
    const double b2t = 1.0 - std::pow(kBeta2, static_cast<double>(iteration));
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto& t = store.at(static_cast<int>(i));
        if (grads.g[i].size() != t.value.size()) {
            throw InvalidInputError("adam: shape mismatch on tensor '" + t.name + "'");
        }
        const Eigen::VectorXd g = grads.g[i] + cfg.weight_decay * t.value;
        m_.g[i] = kBeta1 * m_.g[i] + (1.0 - kBeta1) * g;
        v_.g[i] = kBeta2 * v_.g[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
        const Eigen::VectorXd m_hat = m_.g[i] / b1t;
        const Eigen::VectorXd v_hat = v_.g[i] / b2t;
        t.value -= cfg.learning_rate *
                   (m_hat.array() / (v_hat.array().sqrt() + kEps)).matrix();
    }
}

namespace {

// Shared tape construction: loss node of one sample (both branches averaged).
int build_sample_loss(ad::Tape& tape, const Model& model, const TrainSample& sample) {
    const std::size_t t_len = sample.input_segment.size();
    if (sample.target.size() != t_len) {
        throw InvalidInputError("TrainSample: input/target length mismatch");
    }

    const auto branch_loss = [&](const TrajectorySegment& seg, const BranchParams& params,
                                 const std::vector<Pose>& targets_proc) {
        const auto states = tape_branch_rollout(tape, seg, params, model.stats, model.config);
        int loss = -1;
        for (std::size_t k = 0; k < states.size(); ++k) {
            const Pose& tp = targets_proc[k];
            const int lk = tape.l1cos_loss(states[k], Eigen::Vector4d(tp.x, tp.y, tp.z, tp.theta));
            loss = k == 0 ? lk : tape.add(loss, lk);
        }
        return tape.scale(loss, 1.0 / static_cast<double>(t_len));
    };

    const int lf = branch_loss(sample.input_segment, model.fwd, sample.target);
    std::vector<Pose> rev_targets(sample.target.rbegin(), sample.target.rend());
    const int lb = branch_loss(reverse_segment(sample.input_segment), model.bwd, rev_targets);
    return tape.scale(tape.add(lf, lb), 0.5);
}

}  // namespace

double sample_loss_plain(const Model& model, const TrainSample& sample) {
    const std::size_t t_len = sample.input_segment.size();
    if (sample.target.size() != t_len) {
        throw InvalidInputError("TrainSample: input/target length mismatch");
    }
    const BranchOutput fwd = run_branch(sample.input_segment, model);
    const double lf = segment_loss(fwd.states, sample.target);
    const BranchOutput bwd = run_branch(reverse_segment(sample.input_segment), model);
    const std::vector<Pose> rev_targets(sample.target.rbegin(), sample.target.rend());
    const double lb = segment_loss(bwd.states, rev_targets);
    return (lf + lb) * 0.5;
}

double sample_loss_backward(const Model& model, const TrainSample& sample, GradBuffer& grads) {
    ad::Tape tape(&model.params);
    const int loss = build_sample_loss(tape, model, sample);
    tape.backward(loss, grads);
    return tape.val(loss)[0];
}

BatchResult batch_gradients(const Model& model, const std::vector<TrainSample>& dataset,
                            const std::vector<std::size_t>& indices, int threads) {
    if (indices.empty()) throw InvalidInputError("batch_gradients: empty batch");
    std::vector<GradBuffer> per_sample(indices.size());
    std::vector<double> losses(indices.size(), 0.0);
    for (auto& b : per_sample) b.init(model.params);

    const auto work = [&](std::size_t i) {
        losses[i] = sample_loss_backward(model, dataset[indices[i]], per_sample[i]);
    };

#ifdef _OPENMP
    if (threads != 1) {
        const int n_threads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(n_threads)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
            work(static_cast<std::size_t>(i));
        }
    } else {
        for (std::size_t i = 0; i < indices.size(); ++i) work(i);
    }
#else
    for (std::size_t i = 0; i < indices.size(); ++i) work(i);
#endif

    BatchResult out;
    out.grads.init(model.params);
    for (std::size_t i = 0; i < indices.size(); ++i) {  // fixed reduction order
        out.grads.add(per_sample[i]);
        out.mean_loss += losses[i];
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    out.grads.scale(inv);
    out.mean_loss *= inv;
    return out;
}

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw InvalidInputError("train: empty dataset");
    for (const auto& s : dataset) {
        if (s.input_segment.size() != cfg.context_length ||
            s.target.size() != cfg.context_length) {
            throw InvalidInputError("train: sample length differs from context_length");
        }
    }

    TrainResult result;
    result.model = Model::create();
    std::vector<TrajectorySegment> input_segments;
    input_segments.reserve(dataset.size());
    for (const auto& s : dataset) input_segments.push_back(s.input_segment);
    result.model.stats = compute_norm_stats(input_segments);
    result.model.init(cfg.seed);

    AdamOptimizer adam(result.model.params);
    Rng batch_rng(sub_seed(cfg.seed, "batch"));
    result.loss_curve.reserve(cfg.iterations);

    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        std::vector<std::size_t> indices(cfg.batch_size);
        for (auto& idx : indices) idx = batch_rng.uniform_int(dataset.size());
        const BatchResult batch = batch_gradients(result.model, dataset, indices, cfg.threads);
        if (!std::isfinite(batch.mean_loss)) {
            throw NumericalError("train: non-finite loss at iteration " + std::to_string(iter));
        }
        BatchResult clipped = batch;
        clip_gradients(clipped.grads, cfg.grad_clip);
        adam.step(result.model.params, clipped.grads, cfg, iter);
        result.loss_curve.push_back(batch.mean_loss);
    }
    return result;
}

GradCheckReport grad_check(Model& model, const TrainSample& sample, double epsilon,
                           int elements_per_tensor, const std::string& corrupt_tensor) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw InvalidInputError("grad_check: epsilon must be in [1e-7, 1e-3]");
    }

    GradBuffer analytic;
    analytic.init(model.params);
    sample_loss_backward(model, sample, analytic);
    if (!corrupt_tensor.empty()) {
        const int idx = model.params.index_of(corrupt_tensor);
        if (idx < 0) throw InvalidInputError("grad_check: unknown tensor '" + corrupt_tensor + "'");
        analytic.g[static_cast<std::size_t>(idx)] *= -1.0;
    }

    GradCheckReport report;
    for (std::size_t ti = 0; ti < model.params.size(); ++ti) {
        auto& tensor = model.params.at(static_cast<int>(ti));
        const Eigen::Index numel = tensor.value.size();
        const int n_check = std::min<Eigen::Index>(numel, elements_per_tensor);

        GradCheckEntry entry;
        entry.tensor = tensor.name;
        for (int j = 0; j < n_check; ++j) {
            const Eigen::Index e = numel <= elements_per_tensor
                                       ? j
                                       : static_cast<Eigen::Index>(
                                             (static_cast<std::int64_t>(j) * numel) / n_check);
            const double saved = tensor.value[e];
            tensor.value[e] = saved + epsilon;
            const double lp = sample_loss_plain(model, sample);
            tensor.value[e] = saved - epsilon;
            const double lm = sample_loss_plain(model, sample);
            tensor.value[e] = saved;

            const double fd = (lp - lm) / (2.0 * epsilon);
            const double an = analytic.g[ti][e];
            const double mag = std::max(std::abs(an), std::abs(fd));
            if (mag >= 1e-6) {
                entry.max_rel = std::max(entry.max_rel, std::abs(an - fd) / mag);
            } else {
                entry.max_abs_small = std::max(entry.max_abs_small, std::abs(an - fd));
            }
            ++entry.checked;
        }
        if (entry.max_rel > report.max_rel_error) {
            report.max_rel_error = entry.max_rel;
            report.worst_tensor = entry.tensor;
        }
        report.max_abs_error_small = std::max(report.max_abs_error_small, entry.max_abs_small);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace dkp
