// Command-line front end: dataset preparation, training, evaluation,
// single-image super-resolution, model inspection and gradient checking.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "a2f/checkpoint.hpp"
#include "a2f/dataset.hpp"
#include "a2f/model.hpp"
#include "a2f/model_check.hpp"
#include "a2f/runtime.hpp"
#include "a2f/train.hpp"

namespace {

using namespace a2f;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct ModelFlags {
    std::string variant = "S";
    int scale = 2;
    int blocks = 0;    // custom only
    int channels = 0;  // custom only
    int res_channels = 128;
    int head_kernel = 3;
    bool no_projection = false;
    bool no_attention = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
    cmd->add_option("--variant", flags.variant, "Model variant: S, SD, M, L or custom")
        ->check(CLI::IsMember({"S", "SD", "M", "L", "custom"}));
    cmd->add_option("--scale", flags.scale, "Upscaling factor")->check(CLI::IsMember({2, 3, 4}));
    cmd->add_option("--blocks", flags.blocks, "Block count (custom variant)");
    cmd->add_option("--channels", flags.channels, "Trunk channels (custom variant)");
    cmd->add_option("--res-channels", flags.res_channels,
                    "Residual branch width (custom variant)");
    cmd->add_option("--head-kernel", flags.head_kernel, "Head convolution kernel size")
        ->check(CLI::IsMember({1, 3, 5, 7}));
    cmd->add_flag("--no-projection", flags.no_projection,
                  "Drop the projection unit and the attentive term (BASELINE ablation)");
    cmd->add_flag("--no-attention", flags.no_attention,
                  "Drop the channel attention (NOCA ablation)");
}

ModelConfig resolve_config(const ModelFlags& flags) {
    ModelConfig custom;
    custom.head_kernel = flags.head_kernel;
    custom.projection = !flags.no_projection;
    custom.channel_attention = custom.projection && !flags.no_attention;
    const Variant v = variant_from_name(flags.variant);
    if (v == Variant::Custom) {
        if (flags.blocks < 1 || flags.channels < 1) {
            throw ConfigError("custom variant requires --blocks and --channels");
        }
        custom.n_blocks = flags.blocks;
        custom.trunk_channels = flags.channels;
        custom.res_channels = flags.res_channels;
    }
    return variant_config(v, flags.scale, custom);
}

std::string human_count(std::int64_t v) {
    char buf[32];
    if (v >= 1000000000) {
        std::snprintf(buf, sizeof(buf), "%.1fG", static_cast<double>(v) / 1e9);
    } else if (v >= 1000000) {
        std::snprintf(buf, sizeof(buf), "%.1fM", static_cast<double>(v) / 1e6);
    } else {
        std::snprintf(buf, sizeof(buf), "%.1fk", static_cast<double>(v) / 1e3);
    }
    return buf;
}

std::pair<int, int> parse_resolution(const std::string& text) {
    const std::size_t x = text.find('x');
    if (x == std::string::npos) {
        throw ConfigError("resolution must look like 1280x720, got '" + text + "'");
    }
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
}

int cmd_prepare(const std::string& hr_dir, int scale, const std::string& out) {
    Manifest manifest = prepare_dataset(hr_dir, scale, out);
    for (const std::string& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "manifest: " << manifest.file.string() << "\n";
    std::cout << "pairs: " << manifest.pairs.size() << "\n";
    return kExitOk;
}

int cmd_info(const ModelFlags& flags, const std::string& model_path, const std::string& resolution,
             bool as_json) {
    ModelConfig config;
    std::optional<Model> model;
    if (!model_path.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(model_path);
        model = std::move(loaded.model);
        config = model->config;
    } else {
        config = resolve_config(flags);
        model = build_model(config, 0);
    }
    const auto [rw, rh] = parse_resolution(resolution);
    const std::int64_t params = count_params(*model);
    const std::int64_t madds = count_multiadds(config, rh, rw);
    const auto lambdas = lambda_report(*model);

    if (as_json) {
        nlohmann::json j;
        j["config"] = nlohmann::json::parse(config_to_json(config));
        j["params"] = params;
        j["multiadds"] = madds;
        j["resolution"] = resolution;
        j["layers"] = nlohmann::json::array();
        model->for_each_param([&j](const std::string& name, const ParamT<float>& p) {
            j["layers"].push_back({{"name", name}, {"shape", p.value.shape().str()}});
        });
        j["lambda"] = nlohmann::json::array();
        for (const auto& t : lambdas) {
            j["lambda"].push_back(
                {{"block", t.block}, {"res", t.res}, {"att", t.att}, {"x", t.x}});
        }
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }

    std::cout << "variant:    " << variant_name(config.variant) << " x" << config.scale << "\n";
    std::cout << "blocks:     " << config.n_blocks << "  trunk channels: " << config.trunk_channels
              << "  res channels: " << config.res_channels << "\n";
    std::cout << "head:       " << config.head_kernel << "x" << config.head_kernel
              << "  projection: " << (config.projection ? "on" : "off")
              << "  channel attention: " << (config.channel_attention ? "on" : "off") << "\n";
    std::cout << "params:     " << params << " (" << human_count(params) << ")\n";
    std::cout << "multi-adds: " << madds << " (" << human_count(madds) << " at " << resolution
              << ")\n";
    std::cout << "layers:\n";
    model->for_each_param([](const std::string& name, const ParamT<float>& p) {
        if (name.find("lambda") == std::string::npos && name.find(".bias") == std::string::npos) {
            std::cout << "  " << name << " " << p.value.shape().str() << "\n";
        }
    });
    std::cout << "lambda (block, res, att, x):\n";
    for (const auto& t : lambdas) {
        std::printf("  %d, %.6f, %.6f, %.6f\n", t.block, t.res, t.att, t.x);
    }
    return kExitOk;
}

int cmd_train(const ModelFlags& flags, const TrainConfig& base, const std::string& data_dir,
              const std::string& resume, const std::string& eval_dir) {
    TrainConfig config = base;
    Model model = build_model(resolve_config(flags), config.seed);

    AdamState state;
    AdamState* resume_state = nullptr;
    std::uint64_t start_step = 0;
    if (!resume.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(resume);
        if (!(loaded.model.config == model.config)) {
            throw ConfigError("checkpoint " + resume + " holds a " +
                              variant_name(loaded.model.config.variant) + " x" +
                              std::to_string(loaded.model.config.scale) +
                              " model; it does not match the requested configuration");
        }
        model = std::move(loaded.model);
        if (loaded.optimizer) state = std::move(*loaded.optimizer);
        resume_state = &state;
        start_step = loaded.meta.step;
        config.seed = loaded.meta.seed;
        std::cout << "resuming from step " << start_step << "\n";
    }

    Manifest manifest = load_dataset(data_dir, model.config.scale);
    std::vector<LoadedPair> data = load_pairs(manifest);
    std::vector<LoadedPair> eval_pairs;
    if (!eval_dir.empty()) {
        eval_pairs = load_pairs(load_dataset(eval_dir, model.config.scale));
    }

    TrainLog log = train(model, data, config, resume_state, start_step,
                         eval_pairs.empty() ? nullptr : &eval_pairs);
    if (!log.last_checkpoint.empty()) {
        std::cout << "checkpoint: " << log.last_checkpoint.string() << "\n";
    }
    return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, int shave, bool as_json) {
    LoadedCheckpoint loaded = load_checkpoint(model_path);
    const int scale = loaded.model.config.scale;
    std::vector<LoadedPair> pairs = load_pairs(load_dataset(data_dir, scale));
    MetricsReport report = evaluate(loaded.model, pairs, shave < 0 ? scale : shave);
    report.scale = scale;
    if (as_json) {
        std::cout << report.to_json() << "\n";
    } else {
        std::cout << report.to_csv();
    }
    return kExitOk;
}

int cmd_sr(const std::string& model_path, const std::string& input, const std::string& output) {
    LoadedCheckpoint loaded = load_checkpoint(model_path);
    const ImagePlane lr = load_png(input);
    if (lr.channels != 3) throw ConfigError("super-resolution input must be an RGB PNG");
    const Tensor sr = loaded.model.forward(image_to_tensor(lr));
    save_png(tensor_to_image(sr), output);
    std::cout << output << ": " << sr.w() << "x" << sr.h() << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& config_name, const ModelFlags& flags,
                  const std::string& precision, int samples, int seeds) {
    ModelConfig config;
    if (config_name == "micro") {
        config = micro_config();
    } else {
        config = resolve_config(flags);
    }
    const bool wide = precision == "wide";
    const double eps = wide ? 1e-5 : 2e-2;
    const double threshold = wide ? 1e-6 : 1e-2;
    const Shape input{1, 3, 8, 8};

    double worst = 0.0;
    std::string worst_param;
    std::int64_t checked = 0, skipped = 0;
    for (int s = 0; s < seeds; ++s) {
        GradCheckReport report =
            wide ? model_gradcheck<double>(config, input, eps, samples, 1000 + s, threshold / 2)
                 : model_gradcheck<float>(config, input, eps, samples, 1000 + s, threshold / 2);
        if (report.max_rel_err >= worst) {
            worst = report.max_rel_err;
            worst_param = report.worst_param;
        }
        checked += report.checked;
        skipped += report.skipped;
    }
    std::printf(
        "gradcheck %s precision=%s seeds=%d coords=%lld skipped=%lld max_rel_err=%.3e "
        "(worst: %s) threshold=%.0e\n",
        config_name.c_str(), precision.c_str(), seeds, static_cast<long long>(checked),
        static_cast<long long>(skipped), worst, worst_param.c_str(), threshold);
    if (worst >= threshold || checked == 0) {
        std::cerr << "gradient check failed: " << worst << " >= " << threshold << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"A2F single-image super-resolution engine"};
    app.require_subcommand(1);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Build an HR/LR training set from HR images");
    std::string hr_dir, prep_out;
    int prep_scale = 2;
    prepare->add_option("--hr-dir", hr_dir, "Directory of HR PNG images")->required();
    prepare->add_option("--scale", prep_scale, "Downsampling factor")
        ->check(CLI::IsMember({2, 3, 4}));
    prepare->add_option("--out", prep_out, "Output dataset root")->required();
    prepare->set_config("--config-file");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    ModelFlags train_flags;
    add_model_flags(train_cmd, train_flags);
    TrainConfig train_config;
    std::string data_dir, resume, eval_dir, out_dir;
    train_cmd->add_option("--data", data_dir, "Prepared dataset root")->required();
    train_cmd->add_option("--steps", train_config.total_steps, "Optimization steps");
    train_cmd->add_option("--batch", train_config.batch_size, "Batch size");
    train_cmd->add_option("--lr", train_config.lr, "Initial learning rate");
    train_cmd->add_option("--lr-halving", train_config.lr_halving_interval,
                          "Steps between learning-rate halvings");
    train_cmd->add_option("--patch", train_config.lr_patch, "LR patch edge length");
    train_cmd->add_option("--seed", train_config.seed, "RNG seed");
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
    train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and logs")
        ->required();
    train_cmd->add_option("--checkpoint-interval", train_config.checkpoint_interval,
                          "Steps between checkpoints");
    train_cmd->add_option("--eval-interval", train_config.eval_interval,
                          "Steps between evaluations (needs --eval-data)");
    train_cmd->add_option("--eval-data", eval_dir, "Prepared dataset root for evaluation");
    train_cmd->add_option("--log-interval", train_config.log_interval,
                          "Steps between progress lines");
    bool no_augment = false;
    train_cmd->add_flag("--no-augment", no_augment, "Disable flip/rotation augmentation");
    train_cmd->add_flag("--deterministic", train_config.deterministic,
                        "Single-threaded, bit-reproducible run");
    train_cmd->set_config("--config-file");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a prepared dataset");
    std::string eval_model, eval_data;
    int shave = -1;
    bool eval_json = false;
    eval_cmd->add_option("--model", eval_model, "Checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "Prepared dataset root")->required();
    eval_cmd->add_option("--shave", shave, "Border pixels excluded per side (default: scale)");
    eval_cmd->add_flag("--json", eval_json, "Machine-readable report");
    eval_cmd->set_config("--config-file");

    // sr
    auto* sr_cmd = app.add_subcommand("sr", "Super-resolve one PNG");
    std::string sr_model, sr_input, sr_output;
    sr_cmd->add_option("--model", sr_model, "Checkpoint path")->required();
    sr_cmd->add_option("--input", sr_input, "Input PNG")->required();
    sr_cmd->add_option("--output", sr_output, "Output PNG")->required();
    sr_cmd->set_config("--config-file");

    // info
    auto* info_cmd = app.add_subcommand("info", "Model summary: parameters, multi-adds, lambdas");
    ModelFlags info_flags;
    add_model_flags(info_cmd, info_flags);
    std::string info_model, resolution = "1280x720";
    bool info_json = false;
    info_cmd->add_option("--model", info_model, "Read the configuration from a checkpoint");
    info_cmd->add_option("--resolution", resolution, "HR resolution for the multi-adds count");
    info_cmd->add_flag("--json", info_json, "Machine-readable report");
    info_cmd->set_config("--config-file");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    ModelFlags gc_flags;
    add_model_flags(gc_cmd, gc_flags);
    std::string gc_config = "micro", precision = "wide";
    int gc_samples = 16, gc_seeds = 3;
    gc_cmd->add_option("--config", gc_config, "micro or custom")
        ->check(CLI::IsMember({"micro", "custom"}));
    gc_cmd->add_option("--precision", precision, "wide (f64, 1e-6) or standard (f32, 1e-2)")
        ->check(CLI::IsMember({"wide", "standard"}));
    gc_cmd->add_option("--samples", gc_samples, "Sampled coordinates per parameter tensor");
    gc_cmd->add_option("--seeds", gc_seeds, "Independent random repetitions");
    gc_cmd->set_config("--config-file");

    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (threads > 0) a2f::runtime::set_thread_count(threads);

    try {
        if (prepare->parsed()) return cmd_prepare(hr_dir, prep_scale, prep_out);
        if (train_cmd->parsed()) {
            train_config.augment = !no_augment;
            train_config.out_dir = out_dir;
            return cmd_train(train_flags, train_config, data_dir, resume, eval_dir);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_data, shave, eval_json);
        if (sr_cmd->parsed()) return cmd_sr(sr_model, sr_input, sr_output);
        if (info_cmd->parsed()) return cmd_info(info_flags, info_model, resolution, info_json);
        if (gc_cmd->parsed()) {
            return cmd_gradcheck(gc_config, gc_flags, precision, gc_samples, gc_seeds);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
