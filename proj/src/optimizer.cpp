#include "a2f/optimizer.hpp"

#include <cmath>

namespace a2f {

std::vector<NamedParam> collect_params(Model& model) {
    std::vector<NamedParam> out;
    model.for_each_param(
        [&out](const std::string& name, ParamT<float>& p) { out.push_back({name, &p}); });
    return out;
}

double lr_at(const AdamConfig& config, std::int64_t step) {
    if (config.lr_halving_interval <= 0) return config.lr;
    return config.lr * std::pow(0.5, static_cast<double>(step / config.lr_halving_interval));
}

void adam_step(std::span<const NamedParam> params, AdamState& state, const AdamConfig& config) {
    if (!state.initialized()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const auto& np : params) {
            state.m.emplace_back(np.param->value.shape());
            state.v.emplace_back(np.param->value.shape());
        }
    }
    if (state.m.size() != params.size()) {
        throw ConfigError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                          " parameters but " + std::to_string(params.size()) + " were given");
    }

    for (const auto& np : params) {
        const Tensor& g = np.param->grad;
        for (std::int64_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("adam_step: non-finite gradient in parameter " + np.name);
            }
        }
    }

    const double lr = lr_at(config, state.t);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& value = params[pi].param->value;
        Tensor& grad = params[pi].param->grad;
        Tensor& m = state.m[pi];
        Tensor& v = state.v[pi];
        if (!m.same_shape(value)) {
            throw ConfigError("adam_step: state shape " + m.shape().str() +
                              " does not match parameter " + params[pi].name);
        }
        for (std::int64_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            value[i] = static_cast<float>(value[i] - lr * m_hat / (std::sqrt(v_hat) + config.eps));
            grad[i] = 0.0f;
        }
    }
}

std::pair<float, Tensor> l1_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        throw ConfigError("l1_loss: shapes differ: " + pred.shape().str() + " vs " +
                          target.shape().str());
    }
    const std::int64_t n = pred.size();
    Tensor grad(pred.shape());
    double sum = 0.0;
    const float inv_n = 1.0f / static_cast<float>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const float d = pred[i] - target[i];
        sum += std::abs(static_cast<double>(d));
        grad[i] = d > 0.0f ? inv_n : (d < 0.0f ? -inv_n : 0.0f);
    }
    return {static_cast<float>(sum / static_cast<double>(n)), std::move(grad)};
}

}  // namespace a2f
