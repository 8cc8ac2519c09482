#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "a2f/ops.hpp"
#include "a2f/tensor.hpp"

namespace a2f {

enum class Variant { S, SD, M, L, Custom };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Architecture hyperparameters. The named variants resolve to the published
// block counts / widths; Custom takes whatever the caller sets.
struct ModelConfig {
    Variant variant = Variant::S;
    int scale = 2;                 // 2, 3 or 4
    int n_blocks = 4;              // L
    int trunk_channels = 32;       // C
    int res_channels = 128;        // hidden width of the residual branch
    int head_kernel = 3;           // 1, 3, 5 or 7
    bool projection = true;        // off: BASELINE (WDSR-style trunk)
    bool channel_attention = true; // off (with projection on): NOCA

    // Input channel count of the skip convolution. The released x2 models
    // carry a 9-input skip (fed with the channel-tripled image); x3/x4 use the
    // plain 3-input form. Kept here so parameter accounting matches the
    // published totals exactly.
    int skip_in_channels() const { return scale == 2 ? 9 : 3; }
    int upsample_channels() const { return scale * scale * 3; }

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Resolves a named variant. For Variant::Custom, n_blocks/trunk_channels must
// be supplied through the overload taking a template config.
ModelConfig variant_config(Variant v, int scale);
ModelConfig variant_config(Variant v, int scale, const ModelConfig& custom_fields);

// A learnable tensor with its additive gradient accumulator.
template <typename S>
struct ParamT {
    TensorT<S> value;
    TensorT<S> grad;

    ParamT() = default;
    explicit ParamT(Shape shape) : value(shape), grad(shape) {}
    void zero_grad() { grad.fill(S(0)); }
};

// Size-preserving convolution layer (stride 1, zero padding k/2).
template <typename S>
struct ConvLayerT {
    ParamT<S> weight;  // (out, in, k, k)
    ParamT<S> bias;    // (1, out, 1, 1)

    ConvLayerT() = default;
    ConvLayerT(int in_ch, int out_ch, int k)
        : weight(Shape{out_ch, in_ch, k, k}), bias(Shape{1, out_ch, 1, 1}) {}

    int in_channels() const { return weight.value.c(); }
    int out_channels() const { return weight.value.n(); }
    int kernel() const { return weight.value.h(); }

    TensorT<S> forward(const TensorT<S>& x) const { return conv2d(x, weight.value, bias.value); }
    std::int64_t param_count() const { return weight.value.size() + bias.value.size(); }
};

// One attentive auxiliary feature block: projection of the concatenated
// history, channel attention over the projected features, a wide residual
// branch on the previous output, and three learnable mixing factors.
template <typename S>
struct AAFBlockT {
    std::optional<ConvLayerT<S>> proj;        // 1x1, i*C -> C; absent in BASELINE
    std::optional<ConvLayerT<S>> att1, att2;  // 1x1, C -> C; absent without channel attention
    ConvLayerT<S> res1;                       // 3x3, C -> res_channels
    ConvLayerT<S> res2;                       // 3x3, res_channels -> C
    ParamT<S> lambda_res, lambda_att, lambda_x;  // scalars, init 1
};

template <typename S>
struct BlockTraceT {
    TensorT<S> x_proj;   // projected history
    TensorT<S> pooled;   // global average of x_proj
    TensorT<S> att_mid;  // relu(att1(pooled))
    TensorT<S> gate;     // sigmoid(att2(att_mid))
    TensorT<S> res_mid;  // relu(res1(x_prev))
    TensorT<S> x_res;    // res2(res_mid)
};

// Activations recorded by forward() that backward() consumes. history[i] is
// x_i (history[0] is the head output).
template <typename S>
struct ForwardTraceT {
    TensorT<S> input;
    std::vector<TensorT<S>> history;
    std::vector<BlockTraceT<S>> blocks;
    TensorT<S> output;
};

template <typename S>
struct ModelT {
    ModelConfig config;
    ConvLayerT<S> head;
    std::vector<AAFBlockT<S>> blocks;
    ConvLayerT<S> tail;
    ConvLayerT<S> skip;

    // I_LR (n,3,h,w) -> I_SR (n,3,p*h,p*w). Pass a trace to enable backward().
    TensorT<S> forward(const TensorT<S>& input, ForwardTraceT<S>* trace = nullptr) const;

    // Accumulates parameter gradients for d(loss)/d(output) = d_output.
    void backward(const ForwardTraceT<S>& trace, const TensorT<S>& d_output);

    void zero_grads();

    // Visits every parameter exactly once in a fixed canonical order
    // (head, block1..blockL each proj/att1/att2/res1/res2/lambdas, tail, skip).
    void for_each_param(const std::function<void(const std::string&, ParamT<S>&)>& fn);
    void for_each_param(const std::function<void(const std::string&, const ParamT<S>&)>& fn) const;
};

using Model = ModelT<float>;

// One attentive auxiliary feature block applied to the full history
// [x_0 .. x_{i-1}] (x_prev = history.back()):
//   x_proj = proj(concat(history))
//   x_att  = sigmoid(att2(relu(att1(avgpool(x_proj))))) (x) x_proj
//   x_res  = res2(relu(res1(x_prev)))
//   x_i    = l_res*x_res + l_att*x_att + l_x*x_prev
// Without channel attention, x_att = x_proj. Without the projection unit the
// attentive term is omitted: x_i = l_res*x_res + l_x*x_prev.
template <typename S>
TensorT<S> aaf_block_forward(const AAFBlockT<S>& block, std::span<const TensorT<S>> history,
                             bool projection, bool channel_attention,
                             BlockTraceT<S>* trace = nullptr);

// Builds a model with fan-in-scaled uniform weight init
// (bound = sqrt(1 / (in_ch * k^2))), zero biases and all lambdas = 1.
// Bit-identical for a fixed seed.
template <typename S>
ModelT<S> build_model_t(const ModelConfig& config, std::uint64_t seed);

Model build_model(const ModelConfig& config, std::uint64_t seed);

template <typename S>
std::int64_t count_params(const ModelT<S>& model);

// Multiply-accumulate count for one forward pass producing an (hr_h, hr_w)
// output. Trunk convolutions run on the (hr_h/p, hr_w/p) grid; the attention
// convolutions run on the 1x1 pooled features; pixel shuffle, pooling and
// activations cost no multiplies.
std::int64_t count_multiadds(const ModelConfig& config, int hr_h, int hr_w);

template <typename S>
std::int64_t count_multiadds(const ModelT<S>& model, int hr_h, int hr_w) {
    return count_multiadds(model.config, hr_h, hr_w);
}

struct LambdaTriple {
    int block = 0;  // 1-based
    double res = 0.0;
    double att = 0.0;
    double x = 0.0;
};

template <typename S>
std::vector<LambdaTriple> lambda_report(const ModelT<S>& model);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json_text);

#define A2F_EXTERN_MODEL(S)                                                                  \
    extern template struct ModelT<S>;                                                       \
    extern template ModelT<S> build_model_t<S>(const ModelConfig&, std::uint64_t);          \
    extern template TensorT<S> aaf_block_forward<S>(const AAFBlockT<S>&,                    \
                                                    std::span<const TensorT<S>>, bool,      \
                                                    bool, BlockTraceT<S>*);                 \
    extern template std::int64_t count_params<S>(const ModelT<S>&);                         \
    extern template std::vector<LambdaTriple> lambda_report<S>(const ModelT<S>&);

A2F_EXTERN_MODEL(float)
A2F_EXTERN_MODEL(double)
#undef A2F_EXTERN_MODEL

}  // namespace a2f
