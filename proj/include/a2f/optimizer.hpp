#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "a2f/model.hpp"

namespace a2f {

struct NamedParam {
    std::string name;
    ParamT<float>* param = nullptr;
};

// Every learnable parameter of the model in canonical order.
std::vector<NamedParam> collect_params(Model& model);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t lr_halving_interval = 200000;
};

// First/second moment accumulators, aligned with collect_params order.
// t counts completed steps.
struct AdamState {
    std::int64_t t = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    bool initialized() const { return !m.empty(); }
};

// Effective learning rate for the given 0-based step: lr * 0.5^(step / interval).
double lr_at(const AdamConfig& config, std::int64_t step);

// One Adam update with bias correction over the populated gradients; zeroes
// the gradients afterwards. Throws NumericError (before touching any
// parameter) if a gradient is non-finite, naming the offending parameter.
void adam_step(std::span<const NamedParam> params, AdamState& state, const AdamConfig& config);

// Mean absolute error and its gradient w.r.t. pred: sign(pred - target) / N,
// with sign(0) = 0.
std::pair<float, Tensor> l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace a2f
