#include "dkp/params.hpp"

#include <cmath>

#include "dkp/errors.hpp"
#include "dkp/rng.hpp"

namespace dkp {

int ParamStore::add(const std::string& name, std::vector<int> shape, double init_scale) {
    if (by_name_.count(name)) throw InternalError("ParamStore: duplicate tensor '" + name + "'");
    if (shape.empty()) throw InternalError("ParamStore: empty shape for '" + name + "'");
    ParamTensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.init_scale = init_scale;
    t.value = Eigen::VectorXd::Zero(t.numel());
    t.grad = Eigen::VectorXd::Zero(t.numel());
    const int idx = static_cast<int>(tensors_.size());
    tensors_.push_back(std::move(t));
    by_name_.emplace(name, idx);
    return idx;
}

int ParamStore::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

std::int64_t ParamStore::total_params() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& t : tensors_) t.grad.setZero();
}

void GradBuffer::init(const ParamStore& store) {
    g.resize(store.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = Eigen::VectorXd::Zero(store.at(static_cast<int>(i)).numel());
    }
}

void GradBuffer::set_zero() {
    for (auto& v : g) v.setZero();
}

void GradBuffer::add(const GradBuffer& other) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += other.g[i];
}

void GradBuffer::scale(double c) {
    for (auto& v : g) v *= c;
}

namespace {

// fan_in/fan_out: matrices are (out, in); conv kernels are (Cout, Cin, k).
std::pair<double, double> fans(const std::vector<int>& shape) {
    if (shape.size() == 2) return {shape[1], shape[0]};
    if (shape.size() == 3) {
        return {static_cast<double>(shape[1]) * shape[2], static_cast<double>(shape[0]) * shape[2]};
    }
    return {static_cast<double>(shape[0]), static_cast<double>(shape[0])};
}

}  // namespace

void init_glorot(ParamStore& store, std::uint64_t seed) {
    Rng rng(sub_seed(seed, "init"));
    for (auto& t : store.tensors()) {
        if (t.shape.size() == 1) {  // bias
            t.value.setZero();
            continue;
        }
        const auto [fan_in, fan_out] = fans(t.shape);
        const double a = t.init_scale * std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value[i] = rng.uniform(-a, a);
    }
}

}  // namespace dkp
