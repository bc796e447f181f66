#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>

#include "dkp/checkpoint.hpp"
#include "dkp/classic_kf.hpp"
#include "dkp/edlkf.hpp"
#include "dkp/errors.hpp"
#include "dkp/metrics.hpp"
#include "dkp/rng.hpp"
#include "dkp/synthdata.hpp"
#include "dkp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 usage, 3 I/O, 4 data validation, 5 numerical,
// 1 internal.
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitNumerical = 5;

struct CommonOpts {
    std::uint64_t seed = 0;
    std::size_t context_length = 20;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "Root seed; all randomness derives from it");
    cmd->add_option("--context-length", opts.context_length, "Segment length T")
        ->default_val(20);
    cmd->add_option("--threads", opts.threads, "Worker threads (0 = all, 1 = serial)");
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw dkp::IoError("cannot open '" + path + "' for writing");
    f << content;
    if (!f.flush()) throw dkp::IoError("write failed for '" + path + "'");
}

// ---- generate ----

struct GenerateOpts {
    CommonOpts common;
    std::string out_dir;
    dkp::ScenarioConfig scenario;
    dkp::NoiseModel noise;
    double theta_base_deg = 2.0;
    double theta_slope_deg = 0.15;
};

int run_generate(const GenerateOpts& o) {
    dkp::ScenarioConfig sc = o.scenario;
    sc.seed = o.common.seed;
    dkp::NoiseModel noise = o.noise;
    noise.sigma_theta_base = o.theta_base_deg * M_PI / 180.0;
    noise.sigma_theta_slope = o.theta_slope_deg * M_PI / 180.0;

    fs::create_directories(o.out_dir);
    if (sc.n_trajectories == 0) dkp::warn("generate: --n 0 produces empty trajectory files");
    const auto [gts, noisies] = dkp::generate_scenario(sc, noise);
    dkp::write_trajectories(gts, (fs::path(o.out_dir) / "gt.csv").string());
    dkp::write_trajectories(noisies, (fs::path(o.out_dir) / "noisy.csv").string());

    json manifest;
    manifest["seed"] = sc.seed;
    manifest["scenario"] = {{"n_trajectories", sc.n_trajectories},
                            {"min_length", sc.min_length},
                            {"max_length", sc.max_length},
                            {"frame_rate", sc.frame_rate},
                            {"min_speed", sc.min_speed},
                            {"max_speed", sc.max_speed},
                            {"occlusion_prob", sc.occlusion.prob},
                            {"occlusion_min_len", sc.occlusion.min_len},
                            {"occlusion_max_len", sc.occlusion.max_len}};
    manifest["noise"] = {{"sigma_pos_base", noise.sigma_pos_base},
                         {"sigma_pos_slope", noise.sigma_pos_slope},
                         {"sigma_theta_base_deg", o.theta_base_deg},
                         {"sigma_theta_slope_deg", o.theta_slope_deg},
                         {"outlier_prob", noise.outlier_prob},
                         {"outlier_scale", noise.outlier_scale},
                         {"corr_frac", noise.corr_frac},
                         {"corr_rho", noise.corr_rho}};
    write_text((fs::path(o.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");

    std::printf("generated %zu trajectories into %s\n", gts.size(), o.out_dir.c_str());
    return 0;
}

// ---- train ----

struct TrainOpts {
    CommonOpts common;
    std::string data_path, gt_path, out_path, log_path;
    dkp::TrainConfig cfg;
};

int run_train(const TrainOpts& o) {
    dkp::TrainConfig cfg = o.cfg;
    cfg.seed = o.common.seed;
    cfg.context_length = o.common.context_length;
    cfg.threads = o.common.threads;
    std::printf("config: lr=%g weight_decay=%g batch_size=%zu iterations=%zu "
                "context_length=%zu seed=%llu\n",
                cfg.learning_rate, cfg.weight_decay, cfg.batch_size, cfg.iterations,
                cfg.context_length, static_cast<unsigned long long>(cfg.seed));

    const auto noisy = dkp::read_trajectories(o.data_path);
    const auto gt = dkp::read_trajectories(o.gt_path);
    const auto dataset = dkp::build_dataset(noisy, gt, cfg.context_length, 1);
    std::printf("dataset: %zu segments from %zu trajectories\n", dataset.size(), noisy.size());

    const auto result = dkp::train(dataset, cfg);
    dkp::save_checkpoint(result.model, o.out_path);

    std::string log;
    log.reserve(result.loss_curve.size() * 24);
    char line[64];
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", i + 1, result.loss_curve[i]);
        log += line;
    }
    const std::string log_path = o.log_path.empty() ? o.out_path + ".loss.csv" : o.log_path;
    write_text(log_path, log);

    std::printf("final loss: %.6g (checkpoint: %s, log: %s)\n",
                result.loss_curve.empty() ? 0.0 : result.loss_curve.back(), o.out_path.c_str(),
                log_path.c_str());
    return 0;
}

// ---- smooth ----

struct SmoothCliOpts {
    CommonOpts common;
    std::string input_path, out_path, checkpoint_path;
    std::string method = "deepkalpose";
    bool forward_only = false;
    bool zero_stfem = false;
};

int run_smooth(const SmoothCliOpts& o) {
    const auto input = dkp::read_trajectories(o.input_path);
    std::vector<dkp::Trajectory> out;
    out.reserve(input.size());

    if (o.method == "raw") {
        out = input;
    } else if (o.method == "mbkf") {
        const dkp::NoiseConfig cfg;
        for (const auto& traj : input) out.push_back(dkp::mbkf_smooth_trajectory(traj, cfg));
    } else {
        if (o.checkpoint_path.empty()) {
            throw CLI::ValidationError("smooth", "--checkpoint is required for deepkalpose");
        }
        const dkp::Model model = dkp::load_checkpoint(o.checkpoint_path);
        dkp::SmoothOptions opts;
        opts.use_backward = !o.forward_only;
        opts.zero_stfem = o.zero_stfem;
        opts.threads = o.common.threads;
        for (const auto& traj : input) {
            out.push_back(dkp::smooth_trajectory(traj, model, o.common.context_length, opts));
        }
    }
    dkp::write_trajectories(out, o.out_path);
    std::size_t frames = 0;
    for (const auto& t : out) frames += t.size();
    std::printf("smoothed %zu trajectories (%zu frames) with method %s\n", out.size(), frames,
                o.method.c_str());
    return 0;
}

// ---- eval / compare ----

std::vector<dkp::EvalPair> align_pairs(const std::vector<dkp::Trajectory>& pred,
                                       const std::vector<dkp::Trajectory>& gt,
                                       const std::vector<dkp::Trajectory>* occlusion_mask) {
    std::map<std::string, const dkp::Trajectory*> gt_by_id, mask_by_id;
    for (const auto& t : gt) gt_by_id.emplace(t.vehicle_id, &t);
    if (occlusion_mask) {
        for (const auto& t : *occlusion_mask) mask_by_id.emplace(t.vehicle_id, &t);
    }

    if (pred.size() != gt.size()) {
        throw dkp::InvalidInputError("eval: prediction lists " + std::to_string(pred.size()) +
                                     " trajectories, ground truth " + std::to_string(gt.size()));
    }
    std::vector<dkp::EvalPair> pairs;
    for (const auto& p : pred) {
        auto it = gt_by_id.find(p.vehicle_id);
        if (it == gt_by_id.end()) {
            throw dkp::InvalidInputError("eval: no ground truth for '" + p.vehicle_id + "'");
        }
        const auto& g = *it->second;
        if (g.size() != p.size() || g.frame_start != p.frame_start) {
            throw dkp::InvalidInputError("eval: frame range mismatch for '" + p.vehicle_id + "'");
        }
        const dkp::Trajectory* mask = nullptr;
        if (occlusion_mask) {
            auto mit = mask_by_id.find(p.vehicle_id);
            if (mit == mask_by_id.end() || mit->second->size() != p.size()) {
                throw dkp::InvalidInputError("eval: occlusion mask mismatch for '" +
                                             p.vehicle_id + "'");
            }
            mask = mit->second;
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            const bool occluded = mask ? !mask->poses[k].valid : false;
            pairs.push_back(dkp::EvalPair::make(p.poses[k].pose, g.poses[k].pose, occluded));
        }
    }
    return pairs;
}

void emit_reports(const std::vector<dkp::EvalPair>& pairs, const std::string& method,
                  const std::string& prefix, bool have_mask) {
    using namespace dkp;
    const auto overall = binned_report(pairs, BinSpec{});
    BinSpec depth_spec;
    depth_spec.axis = BinAxis::Depth;
    const auto by_depth = binned_report(pairs, depth_spec);
    write_text(prefix + ".overall.csv", report_table_csv(overall, method));
    write_text(prefix + ".depth.csv", report_table_csv(by_depth, method));
    if (have_mask) {
        BinSpec occ_spec;
        occ_spec.axis = BinAxis::Occlusion;
        write_text(prefix + ".occlusion.csv",
                   report_table_csv(binned_report(pairs, occ_spec), method));
    }
    write_text(prefix + ".curve.csv", curve_csv(ared_depth_curve(pairs)));
    std::fputs(report_table_csv(overall, method).c_str(), stdout);
}

struct EvalOpts {
    CommonOpts common;
    std::string pred_path, gt_path, mask_path, out_prefix;
    std::string method_label = "pred";
};

int run_eval(const EvalOpts& o) {
    const auto pred = dkp::read_trajectories(o.pred_path);
    const auto gt = dkp::read_trajectories(o.gt_path);
    std::optional<std::vector<dkp::Trajectory>> mask;
    if (!o.mask_path.empty()) mask = dkp::read_trajectories(o.mask_path);
    const auto pairs = align_pairs(pred, gt, mask ? &*mask : nullptr);
    emit_reports(pairs, o.method_label, o.out_prefix, mask.has_value());
    return 0;
}

struct CompareOpts {
    CommonOpts common;
    std::string input_path, gt_path, checkpoint_path, out_prefix;
};

int run_compare(const CompareOpts& o) {
    using namespace dkp;
    const auto noisy = read_trajectories(o.input_path);
    const auto gt = read_trajectories(o.gt_path);
    const Model model = load_checkpoint(o.checkpoint_path);

    std::map<std::string, std::vector<Trajectory>> methods;
    methods["raw"] = noisy;
    {
        std::vector<Trajectory> v;
        const NoiseConfig cfg;
        for (const auto& t : noisy) v.push_back(mbkf_smooth_trajectory(t, cfg));
        methods["mbkf"] = std::move(v);
    }
    {
        std::vector<Trajectory> v;
        SmoothOptions opts;
        opts.threads = o.common.threads;
        for (const auto& t : noisy) {
            v.push_back(smooth_trajectory(t, model, o.common.context_length, opts));
        }
        methods["deepkalpose"] = std::move(v);
    }

    std::string table = "method,bin,n,ared,acc_pi6,acc_pi18,mederr_deg\n";
    for (const auto& name : {"raw", "mbkf", "deepkalpose"}) {
        const auto pairs = align_pairs(methods.at(name), gt, &noisy);
        const auto rows = report_table_csv(binned_report(pairs, BinSpec{}), name);
        table += rows.substr(rows.find('\n') + 1);  // drop the repeated header
        emit_reports(pairs, name, o.out_prefix + "." + name, true);
    }
    write_text(o.out_prefix + ".compare.csv", table);
    return 0;
}

// ---- gradcheck ----

struct GradcheckOpts {
    CommonOpts common;
    std::string data_path, gt_path;
    double epsilon = 1e-5;
    std::string corrupt_tensor;  // fault injection, test use only
};

int run_gradcheck(const GradcheckOpts& o) {
    const auto noisy = dkp::read_trajectories(o.data_path);
    const auto gt = dkp::read_trajectories(o.gt_path);
    const auto dataset = dkp::build_dataset(noisy, gt, o.common.context_length, 1);
    if (dataset.empty()) throw dkp::InvalidInputError("gradcheck: no usable segments");
    const std::size_t idx = dkp::sub_seed(o.common.seed, "gradcheck-sample") % dataset.size();

    dkp::Model model = dkp::Model::create();
    std::vector<dkp::TrajectorySegment> segs;
    for (const auto& s : dataset) segs.push_back(s.input_segment);
    model.stats = dkp::compute_norm_stats(segs);
    model.init(o.common.seed);

    const auto report = dkp::grad_check(model, dataset[idx], o.epsilon, 8, o.corrupt_tensor);
    std::printf("gradcheck: sample %zu, epsilon %g\n", idx, o.epsilon);
    std::printf("max relative error: %.3e (tensor %s)\n", report.max_rel_error,
                report.worst_tensor.empty() ? "-" : report.worst_tensor.c_str());
    std::printf("max near-zero absolute error: %.3e\n", report.max_abs_error_small);
    if (!report.pass()) {
        std::printf("FAIL: analytic gradients disagree with finite differences\n");
        return kExitNumerical;
    }
    std::printf("PASS\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeepKalPose-style trajectory smoothing toolkit"};
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* c_gen = app.add_subcommand("generate", "Write synthetic ground-truth/noisy trajectories");
    add_common(c_gen, gen.common);
    c_gen->add_option("--out", gen.out_dir, "Output directory")->required();
    c_gen->add_option("--n", gen.scenario.n_trajectories, "Number of trajectories")
        ->default_val(50);
    c_gen->add_option("--min-len", gen.scenario.min_length)->default_val(30);
    c_gen->add_option("--max-len", gen.scenario.max_length)->default_val(80);
    c_gen->add_option("--frame-rate", gen.scenario.frame_rate)->default_val(10.0);
    c_gen->add_option("--min-speed", gen.scenario.min_speed, "m/s")->default_val(3.0);
    c_gen->add_option("--max-speed", gen.scenario.max_speed, "m/s")->default_val(20.0);
    c_gen->add_option("--occl-prob", gen.scenario.occlusion.prob)->default_val(0.3);
    c_gen->add_option("--occl-min", gen.scenario.occlusion.min_len)->default_val(2);
    c_gen->add_option("--occl-max", gen.scenario.occlusion.max_len)->default_val(8);
    c_gen->add_option("--noise-a", gen.noise.sigma_pos_base, "Position sigma base (m)")
        ->default_val(0.2);
    c_gen->add_option("--noise-b", gen.noise.sigma_pos_slope, "Position sigma per meter depth")
        ->default_val(0.04);
    c_gen->add_option("--noise-theta-base", gen.theta_base_deg, "Yaw sigma base (deg)")
        ->default_val(2.0);
    c_gen->add_option("--noise-theta-slope", gen.theta_slope_deg, "Yaw sigma slope (deg/m)")
        ->default_val(0.15);
    c_gen->add_option("--outlier-prob", gen.noise.outlier_prob)->default_val(0.05);
    c_gen->add_option("--outlier-scale", gen.noise.outlier_scale)->default_val(5.0);
    c_gen->add_option("--noise-corr-frac", gen.noise.corr_frac,
                      "Fraction of sigma assigned to AR(1) drift")->default_val(0.0);
    c_gen->add_option("--noise-corr-rho", gen.noise.corr_rho)->default_val(0.9);

    TrainOpts tr;
    auto* c_tr = app.add_subcommand("train", "Train a checkpoint on trajectory pairs");
    add_common(c_tr, tr.common);
    c_tr->add_option("--data", tr.data_path, "Noisy input trajectories")->required();
    c_tr->add_option("--gt", tr.gt_path, "Ground-truth trajectories")->required();
    c_tr->add_option("--out", tr.out_path, "Checkpoint output path")->required();
    c_tr->add_option("--log", tr.log_path, "Loss log path (default: <out>.loss.csv)");
    c_tr->add_option("--lr", tr.cfg.learning_rate)->default_val(0.001);
    c_tr->add_option("--weight-decay", tr.cfg.weight_decay)->default_val(1e-5);
    c_tr->add_option("--batch-size", tr.cfg.batch_size)->default_val(128);
    c_tr->add_option("--iterations", tr.cfg.iterations)->default_val(4000);
    c_tr->add_option("--grad-clip", tr.cfg.grad_clip,
                     "Global gradient-norm clip before Adam (0 disables)")
        ->default_val(10.0);

    SmoothCliOpts sm;
    auto* c_sm = app.add_subcommand("smooth", "Smooth a trajectory file");
    add_common(c_sm, sm.common);
    c_sm->add_option("--input", sm.input_path, "Noisy input trajectories")->required();
    c_sm->add_option("--out", sm.out_path, "Corrected trajectory output")->required();
    c_sm->add_option("--checkpoint", sm.checkpoint_path, "Trained checkpoint");
    c_sm->add_option("--method", sm.method, "raw | mbkf | deepkalpose")
        ->default_val("deepkalpose")
        ->check(CLI::IsMember({"raw", "mbkf", "deepkalpose"}));
    c_sm->add_flag("--forward-only", sm.forward_only, "Disable the backward branch");
    c_sm->add_flag("--zero-stfem", sm.zero_stfem, "Zero the sequence features (ablation)");

    EvalOpts ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate predictions against ground truth");
    add_common(c_ev, ev.common);
    c_ev->add_option("--pred", ev.pred_path, "Predicted trajectories")->required();
    c_ev->add_option("--gt", ev.gt_path, "Ground-truth trajectories")->required();
    c_ev->add_option("--occlusion-from", ev.mask_path,
                     "Noisy file whose validity flags mark occluded frames");
    c_ev->add_option("--out", ev.out_prefix, "Report file prefix")->required();
    c_ev->add_option("--label", ev.method_label, "Method label in reports")->default_val("pred");

    CompareOpts cp;
    auto* c_cp = app.add_subcommand("compare", "Side-by-side raw / mbkf / deepkalpose evaluation");
    add_common(c_cp, cp.common);
    c_cp->add_option("--input", cp.input_path, "Noisy input trajectories")->required();
    c_cp->add_option("--gt", cp.gt_path, "Ground-truth trajectories")->required();
    c_cp->add_option("--checkpoint", cp.checkpoint_path, "Trained checkpoint")->required();
    c_cp->add_option("--out", cp.out_prefix, "Report file prefix")->required();

    GradcheckOpts gc;
    auto* c_gc = app.add_subcommand("gradcheck",
                                    "Verify analytic gradients against finite differences");
    add_common(c_gc, gc.common);
    c_gc->add_option("--data", gc.data_path, "Noisy input trajectories")->required();
    c_gc->add_option("--gt", gc.gt_path, "Ground-truth trajectories")->required();
    c_gc->add_option("--epsilon", gc.epsilon)->default_val(1e-5);
    c_gc->add_option("--corrupt-tensor", gc.corrupt_tensor)->group("");  // hidden test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help path
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (c_gen->parsed()) return run_generate(gen);
        if (c_tr->parsed()) return run_train(tr);
        if (c_sm->parsed()) return run_smooth(sm);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_cp->parsed()) return run_compare(cp);
        if (c_gc->parsed()) return run_gradcheck(gc);
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const dkp::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const dkp::InvalidInputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const dkp::UnusableSegmentError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const dkp::NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return kExitUsage;
}
