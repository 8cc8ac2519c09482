#pragma once

#include <vector>

#include "a2f/gradcheck.hpp"
#include "a2f/model.hpp"

namespace a2f {

// End-to-end finite-difference check of a whole model: the scalar objective
// is the mean of the output weighted by a fixed random projection, so every
// path of the network contributes to every parameter gradient.
template <typename S>
GradCheckReport model_gradcheck(const ModelConfig& config, Shape input_shape, double eps,
                                int samples, std::uint64_t seed, double guard_rel = 0.05) {
    ModelT<S> model = build_model_t<S>(config, seed);

    Rng rng(seed ^ 0x5bd1e995u);
    TensorT<S> input(input_shape);
    for (std::int64_t i = 0; i < input.size(); ++i) {
        input[i] = static_cast<S>(rng.unit());
    }
    const Shape out_shape{input_shape.n, 3, config.scale * input_shape.h,
                          config.scale * input_shape.w};
    TensorT<S> projection(out_shape);
    for (std::int64_t i = 0; i < projection.size(); ++i) {
        projection[i] = static_cast<S>(rng.symmetric(1.0));
    }
    const double inv_n = 1.0 / static_cast<double>(projection.size());

    auto loss = [&]() {
        TensorT<S> out = model.forward(input);
        return dot(out, projection) * inv_n;
    };
    auto compute_grads = [&]() {
        model.zero_grads();
        ForwardTraceT<S> trace;
        model.forward(input, &trace);
        TensorT<S> d_out(out_shape);
        for (std::int64_t i = 0; i < d_out.size(); ++i) {
            d_out[i] = static_cast<S>(projection[i] * inv_n);
        }
        model.backward(trace, d_out);
    };

    std::vector<ParamView<S>> views;
    model.for_each_param([&views](const std::string& name, ParamT<S>& p) {
        views.push_back({name, &p.value, &p.grad});
    });
    return finite_diff_gradcheck<S>(loss, compute_grads,
                                    std::span<const ParamView<S>>(views.data(), views.size()),
                                    eps, samples, seed + 17, guard_rel);
}

// The 2-block micro configuration used by verification and the CLI. The
// narrow residual branch keeps finite-difference sweeps fast.
inline ModelConfig micro_config() {
    ModelConfig c;
    c.variant = Variant::Custom;
    c.scale = 2;
    c.n_blocks = 2;
    c.trunk_channels = 8;
    c.res_channels = 16;
    return c;
}

}  // namespace a2f
