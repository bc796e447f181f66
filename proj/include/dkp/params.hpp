#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dkp {

/// One named, flat, row-major parameter tensor with its gradient slot.
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
    // Multiplier on the Glorot bound. The gain projection starts near zero:
    // at full Glorot scale the untrained correction loop is unstable over a
    // segment (||I - K|| > 1 compounds across the recursion).
    double init_scale = 1.0;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

class ParamStore {
public:
    int add(const std::string& name, std::vector<int> shape, double init_scale = 1.0);

    ParamTensor& at(int idx) { return tensors_[static_cast<std::size_t>(idx)]; }
    const ParamTensor& at(int idx) const { return tensors_[static_cast<std::size_t>(idx)]; }

    int index_of(const std::string& name) const;  // -1 when absent
    std::size_t size() const { return tensors_.size(); }
    std::int64_t total_params() const;
    void zero_grads();

    const std::vector<ParamTensor>& tensors() const { return tensors_; }
    std::vector<ParamTensor>& tensors() { return tensors_; }

private:
    std::vector<ParamTensor> tensors_;
    std::unordered_map<std::string, int> by_name_;
};

/// Per-sample (or scratch) parameter-gradient accumulator, shaped after a
/// store. Keeps batch reductions in a fixed order independent of threading.
struct GradBuffer {
    std::vector<Eigen::VectorXd> g;

    void init(const ParamStore& store);
    void set_zero();
    void add(const GradBuffer& other);
    void scale(double c);
};

/// Glorot-uniform initialization: weights ~ U(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)); bias tensors (ndim == 1) zero.
/// Draw order follows tensor registration order, so a seed fixes the bytes.
void init_glorot(ParamStore& store, std::uint64_t seed);

}  // namespace dkp
