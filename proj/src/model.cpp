#include "a2f/model.hpp"

#include <cmath>
#include <span>

#include <nlohmann/json.hpp>

#include "a2f/rng.hpp"

namespace a2f {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::S: return "S";
        case Variant::SD: return "SD";
        case Variant::M: return "M";
        case Variant::L: return "L";
        case Variant::Custom: return "custom";
    }
    throw ConfigError("unknown variant enum value");
}

Variant variant_from_name(const std::string& name) {
    if (name == "S" || name == "s") return Variant::S;
    if (name == "SD" || name == "sd") return Variant::SD;
    if (name == "M" || name == "m") return Variant::M;
    if (name == "L" || name == "l") return Variant::L;
    if (name == "custom" || name == "Custom") return Variant::Custom;
    throw ConfigError("unknown variant '" + name + "' (expected S, SD, M, L or custom)");
}

void ModelConfig::validate() const {
    if (scale < 2 || scale > 4) {
        throw ConfigError("scale must be 2, 3 or 4, got " + std::to_string(scale));
    }
    if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1, got " + std::to_string(n_blocks));
    if (trunk_channels < 1 || res_channels < 1) {
        throw ConfigError("channel widths must be >= 1");
    }
    if (head_kernel != 1 && head_kernel != 3 && head_kernel != 5 && head_kernel != 7) {
        throw ConfigError("head kernel must be one of {1,3,5,7}, got " +
                          std::to_string(head_kernel));
    }
    if (channel_attention && !projection) {
        throw ConfigError("channel attention requires the projection unit");
    }
}

ModelConfig variant_config(Variant v, int scale) {
    ModelConfig c;
    c.variant = v;
    c.scale = scale;
    switch (v) {
        case Variant::S:  c.n_blocks = 4;  c.trunk_channels = 32; break;
        case Variant::SD: c.n_blocks = 8;  c.trunk_channels = 16; break;
        case Variant::M:  c.n_blocks = 12; c.trunk_channels = 32; break;
        case Variant::L:  c.n_blocks = 16; c.trunk_channels = 32; break;
        case Variant::Custom:
            throw ConfigError("custom variant requires explicit n_blocks/trunk_channels");
    }
    c.validate();
    return c;
}

ModelConfig variant_config(Variant v, int scale, const ModelConfig& custom_fields) {
    if (v != Variant::Custom) {
        ModelConfig c = variant_config(v, scale);
        c.head_kernel = custom_fields.head_kernel;
        c.projection = custom_fields.projection;
        c.channel_attention = custom_fields.channel_attention;
        c.validate();
        return c;
    }
    ModelConfig c = custom_fields;
    c.variant = Variant::Custom;
    c.scale = scale;
    c.validate();
    return c;
}

namespace {

template <typename S>
void init_conv(ConvLayerT<S>& layer, Rng& rng) {
    const double fan_in = static_cast<double>(layer.in_channels()) * layer.kernel() * layer.kernel();
    const double bound = std::sqrt(1.0 / fan_in);
    for (std::int64_t i = 0; i < layer.weight.value.size(); ++i) {
        layer.weight.value[i] = static_cast<S>(rng.symmetric(bound));
    }
    layer.bias.value.fill(S(0));
}

// y = la*a + lc*c, the block combination when the attentive term is absent.
template <typename S>
TensorT<S> weighted_sum2(const TensorT<S>& a, const TensorT<S>& c, S la, S lc) {
    TensorT<S> y(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = la * a[i] + lc * c[i];
    return y;
}

template <typename S>
TensorT<S> scaled(const TensorT<S>& t, S s) {
    TensorT<S> y(t.shape());
    for (std::int64_t i = 0; i < t.size(); ++i) y[i] = s * t[i];
    return y;
}

// x2 models feed the skip convolution with the channel-tripled image.
template <typename S>
TensorT<S> skip_input(const ModelConfig& config, const TensorT<S>& input) {
    if (config.skip_in_channels() == input.c()) return input;
    const TensorT<S> parts[3] = {input, input, input};
    return channel_concat(std::span<const TensorT<S>>(parts, 3));
}

}  // namespace

template <typename S>
ModelT<S> build_model_t(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelT<S> m;
    m.config = config;
    Rng rng(seed);

    const int C = config.trunk_channels;
    const int R = config.res_channels;
    const int up = config.upsample_channels();

    m.head = ConvLayerT<S>(3, C, config.head_kernel);
    init_conv(m.head, rng);

    m.blocks.reserve(static_cast<std::size_t>(config.n_blocks));
    for (int i = 1; i <= config.n_blocks; ++i) {
        AAFBlockT<S> b;
        if (config.projection) {
            b.proj.emplace(i * C, C, 1);
            init_conv(*b.proj, rng);
            if (config.channel_attention) {
                b.att1.emplace(C, C, 1);
                b.att2.emplace(C, C, 1);
                init_conv(*b.att1, rng);
                init_conv(*b.att2, rng);
            }
        }
        b.res1 = ConvLayerT<S>(C, R, 3);
        b.res2 = ConvLayerT<S>(R, C, 3);
        init_conv(b.res1, rng);
        init_conv(b.res2, rng);
        b.lambda_res = ParamT<S>(Shape{1, 1, 1, 1});
        b.lambda_att = ParamT<S>(Shape{1, 1, 1, 1});
        b.lambda_x = ParamT<S>(Shape{1, 1, 1, 1});
        b.lambda_res.value[0] = S(1);
        b.lambda_att.value[0] = S(1);
        b.lambda_x.value[0] = S(1);
        m.blocks.push_back(std::move(b));
    }

    m.tail = ConvLayerT<S>(C, up, 3);
    init_conv(m.tail, rng);
    m.skip = ConvLayerT<S>(config.skip_in_channels(), up, 3);
    init_conv(m.skip, rng);
    return m;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    return build_model_t<float>(config, seed);
}

template <typename S>
TensorT<S> aaf_block_forward(const AAFBlockT<S>& block, std::span<const TensorT<S>> history,
                             bool projection, bool channel_attention,
                             BlockTraceT<S>* trace) {
    if (history.empty()) throw ConfigError("aaf block: history must be non-empty");
    const TensorT<S>& x_prev = history.back();

    TensorT<S> res_mid = relu(block.res1.forward(x_prev));
    TensorT<S> x_res = block.res2.forward(res_mid);

    const S l_res = block.lambda_res.value[0];
    const S l_att = block.lambda_att.value[0];
    const S l_x = block.lambda_x.value[0];

    TensorT<S> out;
    if (projection) {
        if (!block.proj) throw ConfigError("aaf block: projection enabled but layer missing");
        const int expect = block.proj->in_channels();
        int have = 0;
        for (const auto& t : history) have += t.c();
        if (have != expect) {
            throw ConfigError("aaf block: projection expects " + std::to_string(expect) +
                              " channels but history provides " + std::to_string(have));
        }
        TensorT<S> cat = channel_concat(history);
        TensorT<S> x_proj = block.proj->forward(cat);

        TensorT<S> x_att;
        TensorT<S> pooled, att_mid, gate;
        if (channel_attention) {
            if (!block.att1 || !block.att2) {
                throw ConfigError("aaf block: channel attention enabled but layers missing");
            }
            pooled = global_avg_pool(x_proj);
            att_mid = relu(block.att1->forward(pooled));
            gate = sigmoid(block.att2->forward(att_mid));
            x_att = channel_scale(x_proj, gate);
        } else {
            x_att = x_proj;
        }
        out = weighted_sum3(x_res, x_att, x_prev, l_res, l_att, l_x);
        if (trace) {
            trace->x_proj = std::move(x_proj);
            trace->pooled = std::move(pooled);
            trace->att_mid = std::move(att_mid);
            trace->gate = std::move(gate);
        }
    } else {
        out = weighted_sum2(x_res, x_prev, l_res, l_x);
    }
    if (trace) {
        trace->res_mid = std::move(res_mid);
        trace->x_res = std::move(x_res);
    }
    return out;
}

template <typename S>
TensorT<S> ModelT<S>::forward(const TensorT<S>& input, ForwardTraceT<S>* trace) const {
    if (input.c() != 3) {
        throw ConfigError("model forward expects 3 input channels, got " +
                          std::to_string(input.c()));
    }
    std::vector<TensorT<S>> history;
    history.reserve(blocks.size() + 1);
    history.push_back(head.forward(input));

    std::vector<BlockTraceT<S>> block_traces;
    if (trace) block_traces.resize(blocks.size());

    for (std::size_t i = 0; i < blocks.size(); ++i) {
        TensorT<S> xi = aaf_block_forward(
            blocks[i], std::span<const TensorT<S>>(history.data(), history.size()),
            config.projection, config.channel_attention,
            trace ? &block_traces[i] : nullptr);
        history.push_back(std::move(xi));
    }

    TensorT<S> x_tail = pixel_shuffle(tail.forward(history.back()), config.scale);
    TensorT<S> x_skip = pixel_shuffle(skip.forward(skip_input(config, input)), config.scale);
    TensorT<S> out = add(x_tail, x_skip);

    if (trace) {
        trace->input = input;
        trace->history = std::move(history);
        trace->blocks = std::move(block_traces);
        trace->output = out;
    }
    return out;
}

template <typename S>
void ModelT<S>::backward(const ForwardTraceT<S>& trace, const TensorT<S>& d_output) {
    if (trace.history.size() != blocks.size() + 1) {
        throw ConfigError("backward: trace does not match model block count");
    }
    const int L = static_cast<int>(blocks.size());

    // Tail and skip both feed the elementwise add, so each sees d_output.
    TensorT<S> d_pre = pixel_unshuffle(d_output, config.scale);

    std::vector<TensorT<S>> d_hist;
    d_hist.reserve(trace.history.size());
    for (const auto& h : trace.history) d_hist.emplace_back(h.shape());

    conv2d_backward(trace.history.back(), tail.weight.value, d_pre, &d_hist[L],
                    &tail.weight.grad, &tail.bias.grad);
    const TensorT<S> skip_in = skip_input(config, trace.input);
    conv2d_backward<S>(skip_in, skip.weight.value, d_pre, nullptr, &skip.weight.grad,
                    &skip.bias.grad);

    for (int i = L; i >= 1; --i) {
        AAFBlockT<S>& b = blocks[static_cast<std::size_t>(i - 1)];
        const BlockTraceT<S>& t = trace.blocks[static_cast<std::size_t>(i - 1)];
        const TensorT<S>& d_xi = d_hist[static_cast<std::size_t>(i)];
        const TensorT<S>& x_prev = trace.history[static_cast<std::size_t>(i - 1)];

        const S l_res = b.lambda_res.value[0];
        const S l_att = b.lambda_att.value[0];
        const S l_x = b.lambda_x.value[0];

        TensorT<S> d_xres(t.x_res.shape());
        if (config.projection) {
            TensorT<S> x_att = config.channel_attention ? channel_scale(t.x_proj, t.gate)
                                                        : t.x_proj;
            TensorT<S> d_xatt(x_att.shape());
            weighted_sum3_backward(t.x_res, x_att, x_prev, l_res, l_att, l_x, d_xi,
                                   &d_xres, &d_xatt, &d_hist[static_cast<std::size_t>(i - 1)],
                                   &b.lambda_res.grad[0], &b.lambda_att.grad[0],
                                   &b.lambda_x.grad[0]);

            TensorT<S> d_xproj(t.x_proj.shape());
            if (config.channel_attention) {
                TensorT<S> d_gate(t.gate.shape());
                channel_scale_backward(t.x_proj, t.gate, d_xatt, &d_xproj, &d_gate);

                TensorT<S> d_att2_out(t.gate.shape());
                sigmoid_backward(t.gate, d_gate, &d_att2_out);

                TensorT<S> d_att_mid(t.att_mid.shape());
                conv2d_backward(t.att_mid, b.att2->weight.value, d_att2_out, &d_att_mid,
                                &b.att2->weight.grad, &b.att2->bias.grad);

                TensorT<S> d_att1_out(t.att_mid.shape());
                relu_backward(t.att_mid, d_att_mid, &d_att1_out);

                TensorT<S> d_pooled(t.pooled.shape());
                conv2d_backward(t.pooled, b.att1->weight.value, d_att1_out, &d_pooled,
                                &b.att1->weight.grad, &b.att1->bias.grad);
                global_avg_pool_backward(t.x_proj.shape(), d_pooled, &d_xproj);
            } else {
                accumulate(d_xproj, d_xatt);
            }

            std::span<const TensorT<S>> past(trace.history.data(), static_cast<std::size_t>(i));
            TensorT<S> cat = channel_concat(past);
            TensorT<S> d_cat(cat.shape());
            conv2d_backward(cat, b.proj->weight.value, d_xproj, &d_cat, &b.proj->weight.grad,
                            &b.proj->bias.grad);

            std::vector<TensorT<S>*> d_parts;
            d_parts.reserve(static_cast<std::size_t>(i));
            for (int j = 0; j < i; ++j) d_parts.push_back(&d_hist[static_cast<std::size_t>(j)]);
            channel_concat_backward(d_cat, std::span<TensorT<S>* const>(d_parts.data(),
                                                                        d_parts.size()));
        } else {
            b.lambda_res.grad[0] += static_cast<S>(dot(d_xi, t.x_res));
            b.lambda_x.grad[0] += static_cast<S>(dot(d_xi, x_prev));
            accumulate_scaled(d_xres, d_xi, l_res);
            accumulate_scaled(d_hist[static_cast<std::size_t>(i - 1)], d_xi, l_x);
        }

        TensorT<S> d_res_mid(t.res_mid.shape());
        conv2d_backward(t.res_mid, b.res2.weight.value, d_xres, &d_res_mid, &b.res2.weight.grad,
                        &b.res2.bias.grad);
        TensorT<S> d_res1_out(t.res_mid.shape());
        relu_backward(t.res_mid, d_res_mid, &d_res1_out);
        conv2d_backward(x_prev, b.res1.weight.value, d_res1_out,
                        &d_hist[static_cast<std::size_t>(i - 1)], &b.res1.weight.grad,
                        &b.res1.bias.grad);
    }

    conv2d_backward<S>(trace.input, head.weight.value, d_hist[0], nullptr, &head.weight.grad,
                    &head.bias.grad);
}

template <typename S>
void ModelT<S>::zero_grads() {
    for_each_param([](const std::string&, ParamT<S>& p) { p.zero_grad(); });
}

namespace {

template <typename S, typename Fn>
void visit_params(ModelT<S>& m, Fn&& fn) {
    fn("head.weight", m.head.weight);
    fn("head.bias", m.head.bias);
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i + 1) + ".";
        AAFBlockT<S>& b = m.blocks[i];
        if (b.proj) {
            fn(prefix + "proj.weight", b.proj->weight);
            fn(prefix + "proj.bias", b.proj->bias);
        }
        if (b.att1) {
            fn(prefix + "att1.weight", b.att1->weight);
            fn(prefix + "att1.bias", b.att1->bias);
        }
        if (b.att2) {
            fn(prefix + "att2.weight", b.att2->weight);
            fn(prefix + "att2.bias", b.att2->bias);
        }
        fn(prefix + "res1.weight", b.res1.weight);
        fn(prefix + "res1.bias", b.res1.bias);
        fn(prefix + "res2.weight", b.res2.weight);
        fn(prefix + "res2.bias", b.res2.bias);
        fn(prefix + "lambda_res", b.lambda_res);
        fn(prefix + "lambda_att", b.lambda_att);
        fn(prefix + "lambda_x", b.lambda_x);
    }
    fn("tail.weight", m.tail.weight);
    fn("tail.bias", m.tail.bias);
    fn("skip.weight", m.skip.weight);
    fn("skip.bias", m.skip.bias);
}

}  // namespace

template <typename S>
void ModelT<S>::for_each_param(const std::function<void(const std::string&, ParamT<S>&)>& fn) {
    visit_params(*this, fn);
}

template <typename S>
void ModelT<S>::for_each_param(
    const std::function<void(const std::string&, const ParamT<S>&)>& fn) const {
    visit_params(const_cast<ModelT<S>&>(*this),
                 [&fn](const std::string& name, ParamT<S>& p) { fn(name, p); });
}

template <typename S>
std::int64_t count_params(const ModelT<S>& model) {
    std::int64_t total = 0;
    model.for_each_param(
        [&total](const std::string&, const ParamT<S>& p) { total += p.value.size(); });
    return total;
}

std::int64_t count_multiadds(const ModelConfig& config, int hr_h, int hr_w) {
    config.validate();
    if (hr_h % config.scale != 0 || hr_w % config.scale != 0) {
        throw ConfigError("resolution " + std::to_string(hr_w) + "x" + std::to_string(hr_h) +
                          " not divisible by scale " + std::to_string(config.scale));
    }
    const std::int64_t C = config.trunk_channels;
    const std::int64_t R = config.res_channels;
    const std::int64_t L = config.n_blocks;
    const std::int64_t up = config.upsample_channels();
    const std::int64_t px =
        (static_cast<std::int64_t>(hr_h) / config.scale) * (hr_w / config.scale);

    std::int64_t per_px = 3 * C * config.head_kernel * config.head_kernel;
    if (config.projection) {
        for (std::int64_t i = 1; i <= L; ++i) per_px += (i * C) * C;
    }
    per_px += L * (C * R * 9 + R * C * 9);
    per_px += C * up * 9;
    per_px += static_cast<std::int64_t>(config.skip_in_channels()) * up * 9;

    // The attention convolutions see the pooled 1x1 features, so they cost a
    // fixed 2*C^2 multiplies per block regardless of resolution.
    std::int64_t pooled = 0;
    if (config.projection && config.channel_attention) pooled = L * 2 * C * C;

    return per_px * px + pooled;
}

std::string config_to_json(const ModelConfig& config) {
    nlohmann::json j;
    j["variant"] = variant_name(config.variant);
    j["scale"] = config.scale;
    j["n_blocks"] = config.n_blocks;
    j["trunk_channels"] = config.trunk_channels;
    j["res_channels"] = config.res_channels;
    j["head_kernel"] = config.head_kernel;
    j["projection"] = config.projection;
    j["channel_attention"] = config.channel_attention;
    return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ModelConfig c;
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.scale = j.at("scale").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.trunk_channels = j.at("trunk_channels").get<int>();
    c.res_channels = j.at("res_channels").get<int>();
    c.head_kernel = j.at("head_kernel").get<int>();
    c.projection = j.at("projection").get<bool>();
    c.channel_attention = j.at("channel_attention").get<bool>();
    c.validate();
    return c;
}

template <typename S>
std::vector<LambdaTriple> lambda_report(const ModelT<S>& model) {
    std::vector<LambdaTriple> out;
    out.reserve(model.blocks.size());
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const AAFBlockT<S>& b = model.blocks[i];
        out.push_back({static_cast<int>(i + 1), static_cast<double>(b.lambda_res.value[0]),
                       static_cast<double>(b.lambda_att.value[0]),
                       static_cast<double>(b.lambda_x.value[0])});
    }
    return out;
}

#define A2F_INSTANTIATE_MODEL(S)                                                             \
    template struct ModelT<S>;                                                               \
    template ModelT<S> build_model_t<S>(const ModelConfig&, std::uint64_t);                  \
    template TensorT<S> aaf_block_forward<S>(const AAFBlockT<S>&, std::span<const TensorT<S>>, \
                                             bool, bool, BlockTraceT<S>*);                   \
    template std::int64_t count_params<S>(const ModelT<S>&);                                 \
    template std::vector<LambdaTriple> lambda_report<S>(const ModelT<S>&);

A2F_INSTANTIATE_MODEL(float)
A2F_INSTANTIATE_MODEL(double)
#undef A2F_INSTANTIATE_MODEL

}  // namespace a2f
