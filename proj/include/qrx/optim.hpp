// Adam with bias correction, over named parameter sets.

#pragma once

#include <cmath>
#include <map>

#include "qrx/tensor.hpp"

namespace qrx {

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    struct Slot {
        std::vector<T> m, v;
    };
    std::map<std::string, Slot> slots;
    std::int64_t t = 0;
};

template <typename T>
void adam_step(const std::vector<NamedParam<T>>& params, AdamState<T>& state,
               const AdamConfig& cfg) {
    if (cfg.lr <= 0) throw std::invalid_argument("adam_step: lr must be positive");
    state.t += 1;
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.t)));
    for (const auto& p : params) {
        Tensor<T>& w = *p.tensor;
        if (!w.requires_grad || w.grad.size() != w.data.size())
            throw std::runtime_error("adam_step: parameter '" + p.name + "' has no gradient");
        auto& slot = state.slots[p.name];
        if (slot.m.empty()) {
            slot.m.assign(w.data.size(), T(0));
            slot.v.assign(w.data.size(), T(0));
        } else if (slot.m.size() != w.data.size()) {
            throw std::runtime_error("adam_step: state shape mismatch for '" + p.name + "'");
        }
        const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
        const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            const T g = w.grad[i];
            slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * g;
            slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * g * g;
            const T mhat = slot.m[i] / bc1;
            const T vhat = slot.v[i] / bc2;
            w.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<NamedParam<T>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (T g : p.tensor->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const T scale = static_cast<T>(max_norm / norm);
        for (const auto& p : params)
            for (T& g : p.tensor->grad) g *= scale;
    }
    return norm;
}

template <typename T>
void zero_grads(const std::vector<NamedParam<T>>& params) {
    for (const auto& p : params) p.tensor->zero_grad();
}

} // namespace qrx
