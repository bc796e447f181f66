#include "dkp/fsp_net.hpp"

#include <cmath>

#include "dkp/errors.hpp"

namespace dkp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

Eigen::VectorXd linear_eval(const ParamStore& store, int w, int b, const Eigen::VectorXd& x) {
    const auto& wt = store.at(w);
    ConstMatMap W(wt.value.data(), wt.shape[0], wt.shape[1]);
    Eigen::VectorXd out;
    out.noalias() = W * x;
    if (b >= 0) out += store.at(b).value;
    return out;
}

Eigen::VectorXd tanh_eval(const Eigen::VectorXd& x) { return x.array().tanh(); }

Eigen::VectorXd sigmoid_eval(const Eigen::VectorXd& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

void check_finite(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
    if (!v.allFinite()) throw InvalidInputError(std::string(what) + ": non-finite input");
}

}  // namespace

void NormStats::validate() const {
    if (!(scale.array() > 0.0).all()) {
        throw InvalidInputError("NormStats: scales must be strictly positive");
    }
    if (!mean.allFinite() || !scale.allFinite()) {
        throw InvalidInputError("NormStats: non-finite statistics");
    }
}

Eigen::Vector4d NormStats::norm_scale() const {
    return {1.0 / scale[0], 1.0 / scale[1], 1.0 / scale[2], 1.0};
}

Eigen::Vector4d NormStats::norm_shift() const {
    return {-mean[0] / scale[0], -mean[1] / scale[1], -mean[2] / scale[2], 0.0};
}

Eigen::Vector4d NormStats::diff_scale() const {
    return {1.0 / scale[0], 1.0 / scale[1], 1.0 / scale[2], 1.0};
}

Eigen::Vector4d NormStats::delta_scale() const { return {scale[0], scale[1], scale[2], 1.0}; }

NormStats compute_norm_stats(const std::vector<TrajectorySegment>& segments) {
    double n = 0.0;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    Eigen::Vector3d sq = Eigen::Vector3d::Zero();
    for (const auto& seg : segments) {
        for (const auto& m : seg.items) {
            const Eigen::Vector3d t(m.pose.x, m.pose.y, m.pose.z);
            sum += t;
            sq += t.cwiseProduct(t);
            n += 1.0;
        }
    }
    if (n == 0.0) throw InvalidInputError("compute_norm_stats: no items");
    NormStats s;
    s.mean = sum / n;
    const Eigen::Vector3d var = (sq / n - s.mean.cwiseProduct(s.mean)).cwiseMax(0.0);
    s.scale = var.cwiseSqrt().cwiseMax(1e-6);
    return s;
}

namespace {

FspParamIds register_fsp(ParamStore& store, const std::string& prefix, const NetConfig& cfg) {
    FspParamIds p;
    p.sfem_w1 = store.add(prefix + ".sfem.w1", {cfg.sfem_hidden, 4});
    p.sfem_b1 = store.add(prefix + ".sfem.b1", {cfg.sfem_hidden});
    p.sfem_w2 = store.add(prefix + ".sfem.w2", {cfg.sfem_out, cfg.sfem_hidden});
    p.sfem_b2 = store.add(prefix + ".sfem.b2", {cfg.sfem_out});
    p.conv1_w = store.add(prefix + ".stfem.conv1.w", {cfg.stfem_c1, 4, cfg.conv_kernel});
    p.conv1_b = store.add(prefix + ".stfem.conv1.b", {cfg.stfem_c1});
    p.conv2_w = store.add(prefix + ".stfem.conv2.w", {cfg.stfem_c2, cfg.stfem_c1, cfg.conv_kernel});
    p.conv2_b = store.add(prefix + ".stfem.conv2.b", {cfg.stfem_c2});
    const int a_dim = cfg.sfem_out + cfg.stfem_c2;
    for (int c = 0; c < 4; ++c) {
        const std::string base = prefix + ".sem" + std::to_string(c);
        p.sem_w1[c] = store.add(base + ".w1", {cfg.sem_hidden, a_dim});
        p.sem_b1[c] = store.add(base + ".b1", {cfg.sem_hidden});
        p.sem_w2[c] = store.add(base + ".w2", {1, cfg.sem_hidden});
        p.sem_b2[c] = store.add(base + ".b2", {1});
    }
    return p;
}

GainParamIds register_gain(ParamStore& store, const std::string& prefix, const NetConfig& cfg) {
    GainParamIds p;
    const int h = cfg.gain_hidden;
    p.wz = store.add(prefix + ".gain.wz", {h, 8});
    p.uz = store.add(prefix + ".gain.uz", {h, h});
    p.bz = store.add(prefix + ".gain.bz", {h});
    p.wr = store.add(prefix + ".gain.wr", {h, 8});
    p.ur = store.add(prefix + ".gain.ur", {h, h});
    p.br = store.add(prefix + ".gain.br", {h});
    p.wh = store.add(prefix + ".gain.wh", {h, 8});
    p.uh = store.add(prefix + ".gain.uh", {h, h});
    p.bh = store.add(prefix + ".gain.bh", {h});
    p.proj_w = store.add(prefix + ".gain.proj.w", {16, h}, /*init_scale=*/1.0 / 16.0);
    p.proj_b = store.add(prefix + ".gain.proj.b", {16});
    return p;
}

}  // namespace

BranchParams register_branch(ParamStore& store, const std::string& prefix, const NetConfig& cfg) {
    BranchParams b;
    b.fsp = register_fsp(store, prefix, cfg);
    b.gain = register_gain(store, prefix, cfg);
    return b;
}

Model Model::create(const NetConfig& cfg) {
    Model m;
    m.config = cfg;
    m.fwd = register_branch(m.params, "fwd", cfg);
    m.bwd = register_branch(m.params, "bwd", cfg);
    return m;
}

void Model::init(std::uint64_t seed) {
    init_glorot(params, seed);
    for (const auto* br : {&fwd, &bwd}) {
        auto& bias = params.at(br->gain.proj_b).value;
        bias.setZero();
        bias[0] = bias[5] = bias[10] = bias[15] = 1.0;  // K starts at identity
    }
}

// ---- plain forward path ----

Eigen::VectorXd sfem_forward(const Eigen::Vector4d& x_prev, const ParamStore& store,
                             const FspParamIds& p, const NormStats& stats, const NetConfig&) {
    check_finite(x_prev, "sfem_forward");
    stats.validate();
    const Eigen::Vector4d xn =
        x_prev.cwiseProduct(stats.norm_scale()) + stats.norm_shift();
    Eigen::VectorXd h = tanh_eval(linear_eval(store, p.sfem_w1, p.sfem_b1, xn));
    return tanh_eval(linear_eval(store, p.sfem_w2, p.sfem_b2, h));
}

Eigen::VectorXd stfem_forward(const Eigen::MatrixXd& seg_values, const ParamStore& store,
                              const FspParamIds& p, const NormStats& stats, const NetConfig& cfg) {
    if (seg_values.cols() != 4) throw InvalidInputError("stfem_forward: expected T x 4 input");
    const int t_len = static_cast<int>(seg_values.rows());
    if (t_len < cfg.conv_kernel) {
        throw InvalidInputError("stfem_forward: sequence shorter than convolution kernel");
    }
    if (!seg_values.allFinite()) throw InvalidInputError("stfem_forward: non-finite input");
    stats.validate();

    // Flatten row-major (time-major) and z-score each row.
    const Eigen::Vector4d a = stats.norm_scale();
    const Eigen::Vector4d b = stats.norm_shift();
    Eigen::VectorXd flat(static_cast<Eigen::Index>(t_len) * 4);
    for (int t = 0; t < t_len; ++t) {
        const Eigen::Vector4d row = seg_values.row(t).transpose();
        flat.segment(static_cast<Eigen::Index>(t) * 4, 4) = row.cwiseProduct(a) + b;
    }

    Eigen::VectorXd c1 = ad::conv1d_forward(store.at(p.conv1_w).value.data(),
                                            store.at(p.conv1_b).value.data(), flat, t_len, 4,
                                            cfg.stfem_c1, cfg.conv_kernel);
    c1 = tanh_eval(c1);
    Eigen::VectorXd c2 = ad::conv1d_forward(store.at(p.conv2_w).value.data(),
                                            store.at(p.conv2_b).value.data(), c1, t_len,
                                            cfg.stfem_c1, cfg.stfem_c2, cfg.conv_kernel);
    c2 = tanh_eval(c2);

    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(cfg.stfem_c2);
    for (int t = 0; t < t_len; ++t) {
        pooled += c2.segment(static_cast<Eigen::Index>(t) * cfg.stfem_c2, cfg.stfem_c2);
    }
    pooled /= static_cast<double>(t_len);
    return pooled;
}

Eigen::Vector4d fsp_forward_cached(const Eigen::Vector4d& x_prev, const Eigen::VectorXd& stfem_feat,
                                   const ParamStore& store, const FspParamIds& p,
                                   const NormStats& stats, const NetConfig& cfg) {
    const Eigen::VectorXd n_feat = sfem_forward(x_prev, store, p, stats, cfg);
    Eigen::VectorXd a(n_feat.size() + stfem_feat.size());
    a << n_feat, stfem_feat;

    Eigen::Vector4d deltas;
    for (int c = 0; c < 4; ++c) {
        const Eigen::VectorXd h = tanh_eval(linear_eval(store, p.sem_w1[c], p.sem_b1[c], a));
        deltas[c] = linear_eval(store, p.sem_w2[c], p.sem_b2[c], h)[0];
    }
    Eigen::Vector4d out = x_prev + deltas.cwiseProduct(stats.delta_scale()).eval();
    out[3] = wrap_angle(out[3]);
    return out;
}

Eigen::Vector4d fsp_forward(const Eigen::Vector4d& x_prev, const Eigen::MatrixXd& seg_values,
                            const ParamStore& store, const FspParamIds& p, const NormStats& stats,
                            const NetConfig& cfg) {
    const Eigen::VectorXd feat = stfem_forward(seg_values, store, p, stats, cfg);
    return fsp_forward_cached(x_prev, feat, store, p, stats, cfg);
}

GainStep gain_step(const Eigen::Vector4d& innovation, const Eigen::Vector4d& residual_prev,
                   const Eigen::VectorXd& h, const ParamStore& store, const GainParamIds& p,
                   const NormStats& stats, const NetConfig& cfg) {
    check_finite(innovation, "gain_step");
    check_finite(residual_prev, "gain_step");
    check_finite(h, "gain_step");
    if (h.size() != cfg.gain_hidden) throw InvalidInputError("gain_step: bad hidden-state size");
    stats.validate();

    const Eigen::Vector4d ds = stats.diff_scale();
    Eigen::VectorXd gin(8);
    gin << innovation.cwiseProduct(ds), residual_prev.cwiseProduct(ds);

    const Eigen::VectorXd z =
        sigmoid_eval(linear_eval(store, p.wz, p.bz, gin) + linear_eval(store, p.uz, -1, h));
    const Eigen::VectorXd r =
        sigmoid_eval(linear_eval(store, p.wr, p.br, gin) + linear_eval(store, p.ur, -1, h));
    const Eigen::VectorXd rh = r.cwiseProduct(h);
    const Eigen::VectorXd ht =
        tanh_eval(linear_eval(store, p.wh, p.bh, gin) + linear_eval(store, p.uh, -1, rh));
    const Eigen::VectorXd om = (1.0 - z.array()).matrix();
    const Eigen::VectorXd h_next = om.cwiseProduct(ht) + z.cwiseProduct(h);

    const Eigen::VectorXd k_flat = linear_eval(store, p.proj_w, p.proj_b, h_next);
    GainStep out;
    out.K = Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(k_flat.data());
    out.h = h_next;
    return out;
}

// ---- tape builders ----

int tape_sfem(ad::Tape& tape, int x_prev, const FspParamIds& p, const NormStats& stats) {
    const int xn = tape.affine(x_prev, stats.norm_scale(), stats.norm_shift());
    const int h = tape.tanh_(tape.linear(p.sfem_w1, p.sfem_b1, xn));
    return tape.tanh_(tape.linear(p.sfem_w2, p.sfem_b2, h));
}

int tape_stfem(ad::Tape& tape, int seg_flat, int t_len, const FspParamIds& p,
               const NormStats& stats, const NetConfig& cfg) {
    Eigen::VectorXd scale_t(static_cast<Eigen::Index>(t_len) * 4);
    Eigen::VectorXd shift_t(static_cast<Eigen::Index>(t_len) * 4);
    for (int t = 0; t < t_len; ++t) {
        scale_t.segment(static_cast<Eigen::Index>(t) * 4, 4) = stats.norm_scale();
        shift_t.segment(static_cast<Eigen::Index>(t) * 4, 4) = stats.norm_shift();
    }
    const int xn = tape.affine(seg_flat, std::move(scale_t), std::move(shift_t));
    const int c1 = tape.tanh_(tape.conv1d(p.conv1_w, p.conv1_b, xn, t_len, 4, cfg.stfem_c1,
                                          cfg.conv_kernel));
    const int c2 = tape.tanh_(tape.conv1d(p.conv2_w, p.conv2_b, c1, t_len, cfg.stfem_c1,
                                          cfg.stfem_c2, cfg.conv_kernel));
    return tape.mean_rows(c2, t_len, cfg.stfem_c2);
}

int tape_fsp_cached(ad::Tape& tape, int x_prev, int stfem_feat, const FspParamIds& p,
                    const NormStats& stats) {
    const int n_feat = tape_sfem(tape, x_prev, p, stats);
    const int a = tape.concat(n_feat, stfem_feat);
    int deltas[4];
    for (int c = 0; c < 4; ++c) {
        const int h = tape.tanh_(tape.linear(p.sem_w1[c], p.sem_b1[c], a));
        deltas[c] = tape.linear(p.sem_w2[c], p.sem_b2[c], h);
    }
    const int stacked = tape.stack4(deltas[0], deltas[1], deltas[2], deltas[3]);
    const int scaled = tape.affine(stacked, stats.delta_scale(), Eigen::Vector4d::Zero());
    return tape.wrap_theta(tape.add(x_prev, scaled));
}

TapeGainStep tape_gain_step(ad::Tape& tape, int innovation, int residual_prev, int h,
                            const GainParamIds& p, const NormStats& stats) {
    const Eigen::Vector4d ds = stats.diff_scale();
    const Eigen::Vector4d zero = Eigen::Vector4d::Zero();
    const int in_n = tape.affine(innovation, ds, zero);
    const int res_n = tape.affine(residual_prev, ds, zero);
    const int gin = tape.concat(in_n, res_n);

    const int z = tape.sigmoid_(tape.add(tape.linear(p.wz, p.bz, gin), tape.linear(p.uz, -1, h)));
    const int r = tape.sigmoid_(tape.add(tape.linear(p.wr, p.br, gin), tape.linear(p.ur, -1, h)));
    const int rh = tape.mul(r, h);
    const int ht = tape.tanh_(tape.add(tape.linear(p.wh, p.bh, gin), tape.linear(p.uh, -1, rh)));
    const int h_next = tape.add(tape.mul(tape.one_minus(z), ht), tape.mul(z, h));

    TapeGainStep out;
    out.h = h_next;
    out.k_flat = tape.linear(p.proj_w, p.proj_b, h_next);
    return out;
}

}  // namespace dkp
