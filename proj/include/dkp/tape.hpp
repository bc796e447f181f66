#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dkp/params.hpp"

namespace dkp::ad {

/// Temporal convolution kernel shared by the tape and the plain inference
/// path (identical arithmetic keeps the two paths bit-equal). Input is a
/// (T x Cin) row-major flattened sequence; edges use replicate padding.
/// `w` is (Cout, Cin, k) flattened; `b` may be null.
Eigen::VectorXd conv1d_forward(const double* w, const double* b, const Eigen::VectorXd& x,
                               int t_len, int c_in, int c_out, int k);

/// Row-major 4x4 times 4-vector with a fixed accumulation order, shared by
/// both paths for the same reason.
Eigen::Vector4d matvec4_apply(const double* k16, const Eigen::Vector4d& v);

/// Reverse-mode autodiff over vector-valued nodes. Coarse ops keep the tape
/// short: a whole linear layer or temporal convolution is one node.
/// Parameters are not nodes; ops reference ParamStore tensors directly and
/// backward() scatters their gradients into a GradBuffer.
class Tape {
public:
    explicit Tape(const ParamStore* params) : params_(params) {}

    // ---- graph builders (all return node ids) ----
    int constant(Eigen::VectorXd v);
    /// W x (+ b). W is tensor id with shape (out, in); b is a tensor id or -1.
    int linear(int w, int b, int x);
    /// Temporal convolution over a (T x Cin) row-major flattened input with
    /// replicate padding at the sequence edges. Kernel tensor (Cout, Cin, k).
    int conv1d(int w, int b, int x, int t_len, int c_in, int c_out, int k);
    int tanh_(int x);
    int sigmoid_(int x);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);       // elementwise
    int one_minus(int x);        // 1 - x
    int concat(int a, int b);
    int mean_rows(int x, int t_len, int c);  // (T x C) -> C, mean over rows
    int matvec4(int k_flat, int v);          // reshape(k_flat, 4x4 row-major) * v
    /// x .* scale + shift with constant coefficients.
    int affine(int x, Eigen::VectorXd scale, Eigen::VectorXd shift);
    int wrap_theta(int x);                   // wraps component 3 of a 4-vector
    int stack4(int a, int b, int c, int d);  // four scalars -> 4-vector
    int scale(int x, double c);
    /// |dx|+|dy|+|dz| + (1 - cos(dtheta)) against a constant target; scalar node.
    int l1cos_loss(int pred, const Eigen::Vector4d& target);

    const Eigen::VectorXd& val(int node) const { return nodes_[static_cast<std::size_t>(node)].val; }

    /// Reverse sweep from `node` (must be scalar) with d(loss)/d(node) = seed.
    /// Parameter gradients accumulate into `out` (must be init()ed).
    void backward(int node, GradBuffer& out, double seed = 1.0);

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Const, Linear, Conv1d, Tanh, Sigmoid, Add, Sub, Mul, OneMinus, Concat,
        MeanRows, MatVec4, Affine, WrapTheta, Stack4, Scale, L1CosLoss,
    };

    struct Node {
        Op op;
        int in[4] = {-1, -1, -1, -1};
        int w = -1, b = -1;
        int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
        double c0 = 0.0;
        Eigen::VectorXd cvec0, cvec1;
        Eigen::VectorXd val;
        Eigen::VectorXd grad;  // allocated lazily during backward
    };

    int push(Node n);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    Eigen::VectorXd& grad_of(int id);

    const ParamStore* params_;
    std::vector<Node> nodes_;
};

}  // namespace dkp::ad
