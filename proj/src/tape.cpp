#include "dkp/tape.hpp"

#include <cmath>

#include "dkp/errors.hpp"
#include "dkp/pose.hpp"

namespace dkp::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline int clamp_t(int t, int t_len) { return t < 0 ? 0 : (t >= t_len ? t_len - 1 : t); }

}  // namespace

Eigen::VectorXd conv1d_forward(const double* w, const double* b, const Eigen::VectorXd& x,
                               int t_len, int c_in, int c_out, int k) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t_len) * c_out);
    const int pad = k / 2;
    for (int t = 0; t < t_len; ++t) {
        for (int o = 0; o < c_out; ++o) {
            double acc = b ? b[o] : 0.0;
            for (int j = 0; j < k; ++j) {
                const int ts = clamp_t(t + j - pad, t_len);
                const double* xrow = x.data() + static_cast<std::ptrdiff_t>(ts) * c_in;
                const double* wrow = w + (static_cast<std::ptrdiff_t>(o) * c_in) * k + j;
                for (int ci = 0; ci < c_in; ++ci) {
                    acc += wrow[static_cast<std::ptrdiff_t>(ci) * k] * xrow[ci];
                }
            }
            out[static_cast<Eigen::Index>(t) * c_out + o] = acc;
        }
    }
    return out;
}

Eigen::Vector4d matvec4_apply(const double* k16, const Eigen::Vector4d& v) {
    Eigen::Vector4d out;
    for (int i = 0; i < 4; ++i) {
        const double* row = k16 + 4 * i;
        out[i] = ((row[0] * v[0] + row[1] * v[1]) + row[2] * v[2]) + row[3] * v[3];
    }
    return out;
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Eigen::VectorXd& Tape::grad_of(int id) {
    Node& n = node(id);
    if (n.grad.size() == 0) n.grad = Eigen::VectorXd::Zero(n.val.size());
    return n.grad;
}

int Tape::constant(Eigen::VectorXd v) {
    Node n;
    n.op = Op::Const;
    n.val = std::move(v);
    return push(n);
}

int Tape::linear(int w, int b, int x) {
    const auto& wt = params_->at(w);
    if (wt.shape.size() != 2) throw InternalError("tape.linear: weight tensor must be 2-D");
    const int out_dim = wt.shape[0], in_dim = wt.shape[1];
    const auto& xv = node(x).val;
    if (xv.size() != in_dim) throw InternalError("tape.linear: input size mismatch");

    Node n;
    n.op = Op::Linear;
    n.in[0] = x;
    n.w = w;
    n.b = b;
    ConstMatMap W(wt.value.data(), out_dim, in_dim);
    n.val.noalias() = W * xv;
    if (b >= 0) {
        const auto& bt = params_->at(b);
        if (bt.numel() != out_dim) throw InternalError("tape.linear: bias size mismatch");
        n.val += bt.value;
    }
    return push(n);
}

int Tape::conv1d(int w, int b, int x, int t_len, int c_in, int c_out, int k) {
    const auto& wt = params_->at(w);
    if (wt.shape.size() != 3 || wt.shape[0] != c_out || wt.shape[1] != c_in || wt.shape[2] != k) {
        throw InternalError("tape.conv1d: kernel tensor shape mismatch");
    }
    if (t_len < k) throw InvalidInputError("conv1d: sequence shorter than kernel");
    const auto& xv = node(x).val;
    if (xv.size() != static_cast<Eigen::Index>(t_len) * c_in) {
        throw InternalError("tape.conv1d: input size mismatch");
    }

    Node n;
    n.op = Op::Conv1d;
    n.in[0] = x;
    n.w = w;
    n.b = b;
    n.i0 = t_len;
    n.i1 = c_in;
    n.i2 = c_out;
    n.i3 = k;
    n.val = conv1d_forward(wt.value.data(), b >= 0 ? params_->at(b).value.data() : nullptr, xv,
                           t_len, c_in, c_out, k);
    return push(n);
}

int Tape::tanh_(int x) {
    Node n;
    n.op = Op::Tanh;
    n.in[0] = x;
    n.val = node(x).val.array().tanh();
    return push(n);
}

int Tape::sigmoid_(int x) {
    Node n;
    n.op = Op::Sigmoid;
    n.in[0] = x;
    n.val = (1.0 / (1.0 + (-node(x).val.array()).exp())).matrix();
    return push(n);
}

int Tape::add(int a, int b) {
    if (node(a).val.size() != node(b).val.size()) throw InternalError("tape.add: size mismatch");
    Node n;
    n.op = Op::Add;
    n.in[0] = a;
    n.in[1] = b;
    n.val = node(a).val + node(b).val;
    return push(n);
}

int Tape::sub(int a, int b) {
    if (node(a).val.size() != node(b).val.size()) throw InternalError("tape.sub: size mismatch");
    Node n;
    n.op = Op::Sub;
    n.in[0] = a;
    n.in[1] = b;
    n.val = node(a).val - node(b).val;
    return push(n);
}

int Tape::mul(int a, int b) {
    if (node(a).val.size() != node(b).val.size()) throw InternalError("tape.mul: size mismatch");
    Node n;
    n.op = Op::Mul;
    n.in[0] = a;
    n.in[1] = b;
    n.val = node(a).val.cwiseProduct(node(b).val);
    return push(n);
}

int Tape::one_minus(int x) {
    Node n;
    n.op = Op::OneMinus;
    n.in[0] = x;
    n.val = (1.0 - node(x).val.array()).matrix();
    return push(n);
}

int Tape::concat(int a, int b) {
    Node n;
    n.op = Op::Concat;
    n.in[0] = a;
    n.in[1] = b;
    n.i0 = static_cast<int>(node(a).val.size());
    n.val.resize(node(a).val.size() + node(b).val.size());
    n.val << node(a).val, node(b).val;
    return push(n);
}

int Tape::mean_rows(int x, int t_len, int c) {
    const auto& xv = node(x).val;
    if (xv.size() != static_cast<Eigen::Index>(t_len) * c) {
        throw InternalError("tape.mean_rows: size mismatch");
    }
    Node n;
    n.op = Op::MeanRows;
    n.in[0] = x;
    n.i0 = t_len;
    n.i1 = c;
    n.val = Eigen::VectorXd::Zero(c);
    for (int t = 0; t < t_len; ++t) n.val += xv.segment(static_cast<Eigen::Index>(t) * c, c);
    n.val /= static_cast<double>(t_len);
    return push(n);
}

int Tape::matvec4(int k_flat, int v) {
    if (node(k_flat).val.size() != 16 || node(v).val.size() != 4) {
        throw InternalError("tape.matvec4: expects 16-vector and 4-vector");
    }
    Node n;
    n.op = Op::MatVec4;
    n.in[0] = k_flat;
    n.in[1] = v;
    n.val = matvec4_apply(node(k_flat).val.data(), node(v).val);
    return push(n);
}

int Tape::affine(int x, Eigen::VectorXd scale_v, Eigen::VectorXd shift) {
    if (node(x).val.size() != scale_v.size() || scale_v.size() != shift.size()) {
        throw InternalError("tape.affine: size mismatch");
    }
    Node n;
    n.op = Op::Affine;
    n.in[0] = x;
    n.cvec0 = std::move(scale_v);
    n.cvec1 = std::move(shift);
    n.val = node(x).val.cwiseProduct(n.cvec0) + n.cvec1;
    return push(n);
}

int Tape::wrap_theta(int x) {
    if (node(x).val.size() != 4) throw InternalError("tape.wrap_theta: expects a 4-vector");
    Node n;
    n.op = Op::WrapTheta;
    n.in[0] = x;
    n.val = node(x).val;
    n.val[3] = wrap_angle(n.val[3]);
    return push(n);
}

int Tape::stack4(int a, int b, int c, int d) {
    const int ids[4] = {a, b, c, d};
    Node n;
    n.op = Op::Stack4;
    n.val.resize(4);
    for (int i = 0; i < 4; ++i) {
        if (node(ids[i]).val.size() != 1) throw InternalError("tape.stack4: inputs must be scalars");
        n.in[i] = ids[i];
        n.val[i] = node(ids[i]).val[0];
    }
    return push(n);
}

int Tape::scale(int x, double c) {
    Node n;
    n.op = Op::Scale;
    n.in[0] = x;
    n.c0 = c;
    n.val = node(x).val * c;
    return push(n);
}

int Tape::l1cos_loss(int pred, const Eigen::Vector4d& target) {
    if (node(pred).val.size() != 4) throw InternalError("tape.l1cos_loss: expects a 4-vector");
    Node n;
    n.op = Op::L1CosLoss;
    n.in[0] = pred;
    n.cvec0 = target;
    const auto& p = node(pred).val;
    n.val.resize(1);
    n.val[0] = std::abs(p[0] - target[0]) + std::abs(p[1] - target[1]) +
               std::abs(p[2] - target[2]) + (1.0 - std::cos(p[3] - target[3]));
    return push(n);
}

void Tape::backward(int start, GradBuffer& out, double seed) {
    if (node(start).val.size() != 1) throw InternalError("tape.backward: start node must be scalar");
    if (out.g.size() != params_->size()) throw InternalError("tape.backward: GradBuffer not initialized");
    grad_of(start)[0] = seed;

    for (int id = start; id >= 0; --id) {
        Node& n = node(id);
        if (n.grad.size() == 0) continue;  // no gradient reaches this node
        const Eigen::VectorXd& g = n.grad;
        switch (n.op) {
            case Op::Const:
                break;
            case Op::Linear: {
                const auto& wt = params_->at(n.w);
                const int out_dim = wt.shape[0], in_dim = wt.shape[1];
                ConstMatMap W(wt.value.data(), out_dim, in_dim);
                const auto& xv = node(n.in[0]).val;
                grad_of(n.in[0]).noalias() += W.transpose() * g;
                Eigen::Map<RowMat> Wg(out.g[static_cast<std::size_t>(n.w)].data(), out_dim, in_dim);
                Wg.noalias() += g * xv.transpose();
                if (n.b >= 0) out.g[static_cast<std::size_t>(n.b)] += g;
                break;
            }
            case Op::Conv1d: {
                const int t_len = n.i0, c_in = n.i1, c_out = n.i2, k = n.i3;
                const int pad = k / 2;
                const auto& wt = params_->at(n.w);
                const double* wd = wt.value.data();
                const auto& xv = node(n.in[0]).val;
                Eigen::VectorXd& xg = grad_of(n.in[0]);
                Eigen::VectorXd& wg = out.g[static_cast<std::size_t>(n.w)];
                for (int t = 0; t < t_len; ++t) {
                    for (int o = 0; o < c_out; ++o) {
                        const double go = g[static_cast<Eigen::Index>(t) * c_out + o];
                        if (go == 0.0) continue;
                        if (n.b >= 0) out.g[static_cast<std::size_t>(n.b)][o] += go;
                        for (int j = 0; j < k; ++j) {
                            const int ts = clamp_t(t + j - pad, t_len);
                            const std::ptrdiff_t xoff = static_cast<std::ptrdiff_t>(ts) * c_in;
                            const std::ptrdiff_t woff = (static_cast<std::ptrdiff_t>(o) * c_in) * k + j;
                            for (int ci = 0; ci < c_in; ++ci) {
                                wg[woff + static_cast<std::ptrdiff_t>(ci) * k] += go * xv[xoff + ci];
                                xg[xoff + ci] += go * wd[woff + static_cast<std::ptrdiff_t>(ci) * k];
                            }
                        }
                    }
                }
                break;
            }
            case Op::Tanh:
                grad_of(n.in[0]).array() += g.array() * (1.0 - n.val.array().square());
                break;
            case Op::Sigmoid:
                grad_of(n.in[0]).array() += g.array() * n.val.array() * (1.0 - n.val.array());
                break;
            case Op::Add:
                grad_of(n.in[0]) += g;
                grad_of(n.in[1]) += g;
                break;
            case Op::Sub:
                grad_of(n.in[0]) += g;
                grad_of(n.in[1]) -= g;
                break;
            case Op::Mul:
                grad_of(n.in[0]).array() += g.array() * node(n.in[1]).val.array();
                grad_of(n.in[1]).array() += g.array() * node(n.in[0]).val.array();
                break;
            case Op::OneMinus:
                grad_of(n.in[0]) -= g;
                break;
            case Op::Concat:
                grad_of(n.in[0]) += g.head(n.i0);
                grad_of(n.in[1]) += g.tail(g.size() - n.i0);
                break;
            case Op::MeanRows: {
                const double inv = 1.0 / static_cast<double>(n.i0);
                Eigen::VectorXd& xg = grad_of(n.in[0]);
                for (int t = 0; t < n.i0; ++t) {
                    xg.segment(static_cast<Eigen::Index>(t) * n.i1, n.i1) += g * inv;
                }
                break;
            }
            case Op::MatVec4: {
                Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> K(
                    node(n.in[0]).val.data());
                const auto& v = node(n.in[1]).val;
                Eigen::VectorXd& kg = grad_of(n.in[0]);
                Eigen::Map<Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> Kg(kg.data());
                Kg.noalias() += g * v.transpose();
                grad_of(n.in[1]).noalias() += K.transpose() * g;
                break;
            }
            case Op::Affine:
                grad_of(n.in[0]) += g.cwiseProduct(n.cvec0);
                break;
            case Op::WrapTheta:
                grad_of(n.in[0]) += g;  // wrapping adds a constant; derivative is 1
                break;
            case Op::Stack4:
                for (int i = 0; i < 4; ++i) grad_of(n.in[i])[0] += g[i];
                break;
            case Op::Scale:
                grad_of(n.in[0]) += g * n.c0;
                break;
            case Op::L1CosLoss: {
                const auto& p = node(n.in[0]).val;
                Eigen::VectorXd& pg = grad_of(n.in[0]);
                for (int i = 0; i < 3; ++i) {
                    const double d = p[i] - n.cvec0[i];
                    pg[i] += g[0] * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
                }
                pg[3] += g[0] * std::sin(p[3] - n.cvec0[3]);
                break;
            }
        }
    }
}

}  // namespace dkp::ad
