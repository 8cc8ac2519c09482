#include "a2f/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "a2f/checkpoint.hpp"
#include "a2f/runtime.hpp"

namespace a2f {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (lr_halving_interval <= 0) throw ConfigError("lr halving interval must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (lr_patch < 1) throw ConfigError("patch size must be >= 1");
    if (total_steps < 0) throw ConfigError("total steps must be >= 0");
}

PatchPair sample_patch(const ImagePlane& hr, const ImagePlane& lr, int scale, int lr_patch,
                       Rng& rng) {
    if (lr.width * scale != hr.width || lr.height * scale != hr.height) {
        throw EvalError("LR image " + std::to_string(lr.width) + "x" + std::to_string(lr.height) +
                        " is not the 1/" + std::to_string(scale) + " downsample of HR " +
                        std::to_string(hr.width) + "x" + std::to_string(hr.height));
    }
    if (lr.width < lr_patch || lr.height < lr_patch) {
        throw EvalError("image too small for a " + std::to_string(lr_patch) + "px patch");
    }
    const int x = static_cast<int>(rng.below(static_cast<std::uint32_t>(lr.width - lr_patch + 1)));
    const int y = static_cast<int>(rng.below(static_cast<std::uint32_t>(lr.height - lr_patch + 1)));

    PatchPair pair;
    pair.lr = Tensor({1, 3, lr_patch, lr_patch});
    pair.hr = Tensor({1, 3, scale * lr_patch, scale * lr_patch});
    constexpr float kInv255 = 1.0f / 255.0f;
    for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < lr_patch; ++r) {
            for (int q = 0; q < lr_patch; ++q) {
                pair.lr.at(0, c, r, q) =
                    static_cast<float>(lr.value(y + r, x + q, c)) * kInv255;
            }
        }
        for (int r = 0; r < scale * lr_patch; ++r) {
            for (int q = 0; q < scale * lr_patch; ++q) {
                pair.hr.at(0, c, r, q) =
                    static_cast<float>(hr.value(scale * y + r, scale * x + q, c)) * kInv255;
            }
        }
    }
    return pair;
}

Tensor dihedral_transform(const Tensor& t, int k) {
    if (k < 0 || k >= 8) throw ConfigError("dihedral transform index must be in [0,8)");
    const bool flip = (k & 4) != 0;
    const int rot = k & 3;
    const int h = t.h(), w = t.w();
    const bool swap = (rot % 2) == 1;
    Tensor out({t.n(), t.c(), swap ? w : h, swap ? h : w});
    for (int n = 0; n < t.n(); ++n) {
        for (int c = 0; c < t.c(); ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const int sx = flip ? w - 1 - x : x;
                    int oy = 0, ox = 0;
                    switch (rot) {
                        case 0: oy = y; ox = sx; break;
                        case 1: oy = w - 1 - sx; ox = y; break;          // 90 deg ccw
                        case 2: oy = h - 1 - y; ox = w - 1 - sx; break;  // 180 deg
                        case 3: oy = sx; ox = h - 1 - y; break;          // 270 deg ccw
                    }
                    out.at(n, c, oy, ox) = t.at(n, c, y, x);
                }
            }
        }
    }
    return out;
}

void augment_pair(PatchPair& pair, Rng& rng) {
    const int k = static_cast<int>(rng.below(8));
    if (k == 0) return;
    pair.lr = dihedral_transform(pair.lr, k);
    pair.hr = dihedral_transform(pair.hr, k);
}

namespace {

void copy_into_batch(Tensor& batch, int slot, const Tensor& item) {
    const std::int64_t stride = item.size();
    std::copy(item.data(), item.data() + stride, batch.data() + slot * stride);
}

struct StepBatch {
    Tensor lr;
    Tensor hr;
};

StepBatch assemble_batch(const std::vector<LoadedPair>& data, const TrainConfig& config,
                         int scale, Rng& rng) {
    StepBatch batch{Tensor({config.batch_size, 3, config.lr_patch, config.lr_patch}),
                    Tensor({config.batch_size, 3, scale * config.lr_patch,
                            scale * config.lr_patch})};
    for (int b = 0; b < config.batch_size; ++b) {
        PatchPair pair;
        bool sampled = false;
        for (std::size_t attempt = 0; attempt < data.size(); ++attempt) {
            const auto& img = data[rng.below(static_cast<std::uint32_t>(data.size()))];
            try {
                pair = sample_patch(img.hr, img.lr, scale, config.lr_patch, rng);
                sampled = true;
                break;
            } catch (const EvalError&) {
                // image smaller than the patch; try another
            }
        }
        if (!sampled) {
            throw EvalError("no training image is large enough for a " +
                            std::to_string(config.lr_patch) + "px patch");
        }
        if (config.augment) augment_pair(pair, rng);
        copy_into_batch(batch.lr, b, pair.lr);
        copy_into_batch(batch.hr, b, pair.hr);
    }
    return batch;
}

void append_lambda_snapshot(std::ofstream& out, std::uint64_t step, const Model& model) {
    for (const LambdaTriple& t : lambda_report(model)) {
        out << step << "," << t.block << "," << t.res << "," << t.att << "," << t.x << "\n";
    }
    out.flush();
}

}  // namespace

TrainLog train(Model& model, const std::vector<LoadedPair>& data, const TrainConfig& config,
               AdamState* resume_state, std::uint64_t start_step,
               const std::vector<LoadedPair>* eval_data) {
    config.validate();
    if (data.empty()) throw ConfigError("training dataset is empty");
    const int scale = model.config.scale;

    int saved_threads = runtime::thread_count();
    if (config.deterministic) runtime::set_thread_count(1);

    TrainLog log;
    std::ofstream progress, lambdas;
    const bool to_disk = !config.out_dir.empty();
    if (to_disk) {
        fs::create_directories(config.out_dir);
        log.log_file = config.out_dir / "train_log.txt";
        log.lambda_file = config.out_dir / "lambda_history.csv";
        progress.open(log.log_file, start_step == 0 ? std::ios::trunc : std::ios::app);
        const bool fresh = start_step == 0 || !fs::exists(log.lambda_file);
        lambdas.open(log.lambda_file, fresh ? std::ios::trunc : std::ios::app);
        if (fresh) lambdas << "step,block,lambda_res,lambda_att,lambda_x\n";
    }

    std::vector<NamedParam> params = collect_params(model);
    AdamState local_state;
    AdamState& state = resume_state ? *resume_state : local_state;
    const AdamConfig adam = config.adam();

    CheckpointMeta meta;
    meta.seed = config.seed;

    auto write_checkpoint = [&](std::uint64_t step, const char* tag) {
        if (!to_disk) return;
        meta.step = step;
        meta.loss_tail.assign(
            log.losses.end() - std::min<std::size_t>(log.losses.size(), 32), log.losses.end());
        const fs::path path =
            config.out_dir / ("checkpoint_" + std::string(tag) + ".a2f");
        save_checkpoint(model, &state, meta, path);
        log.last_checkpoint = path;
    };

    auto log_line = [&](const std::string& line) {
        std::cout << line << "\n";
        if (progress.is_open()) {
            progress << line << "\n";
            progress.flush();
        }
    };

    using Clock = std::chrono::steady_clock;
    auto window_start = Clock::now();
    std::int64_t window_steps = 0;

    for (std::uint64_t step = start_step; step < static_cast<std::uint64_t>(config.total_steps);
         ++step) {
        // A fresh generator per step keyed by (seed, step): resuming from a
        // checkpoint replays the identical sampling sequence.
        Rng rng = Rng::substream(config.seed, step);
        StepBatch batch = assemble_batch(data, config, scale, rng);

        ForwardTraceT<float> trace;
        Tensor pred = model.forward(batch.lr, &trace);
        auto [loss, d_pred] = l1_loss(pred, batch.hr);
        if (!std::isfinite(loss)) {
            if (config.deterministic) runtime::set_thread_count(saved_threads);
            throw NumericError("training aborted at step " + std::to_string(step) +
                               ": non-finite loss" +
                               (log.last_checkpoint.empty()
                                    ? std::string()
                                    : "; last good checkpoint " + log.last_checkpoint.string()));
        }
        model.backward(trace, d_pred);
        adam_step(params, state, adam);
        log.losses.push_back(loss);
        ++window_steps;

        const std::uint64_t done = step + 1;
        if (config.log_interval > 0 &&
            (done % static_cast<std::uint64_t>(config.log_interval) == 0 ||
             done == static_cast<std::uint64_t>(config.total_steps))) {
            const double ms =
                std::chrono::duration<double, std::milli>(Clock::now() - window_start).count() /
                static_cast<double>(window_steps);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "step=%llu loss=%.6f lr=%.3e ms_per_step=%.1f",
                          static_cast<unsigned long long>(done), static_cast<double>(loss),
                          lr_at(adam, static_cast<std::int64_t>(step)), ms);
            log_line(buf);
            window_start = Clock::now();
            window_steps = 0;
            if (lambdas.is_open()) append_lambda_snapshot(lambdas, done, model);
        }
        if (config.checkpoint_interval > 0 &&
            done % static_cast<std::uint64_t>(config.checkpoint_interval) == 0) {
            write_checkpoint(done, "latest");
        }
        if (eval_data && config.eval_interval > 0 &&
            done % static_cast<std::uint64_t>(config.eval_interval) == 0) {
            MetricsReport report = evaluate(model, *eval_data, scale);
            char buf[120];
            std::snprintf(buf, sizeof(buf), "eval step=%llu psnr=%.3f ssim=%.5f",
                          static_cast<unsigned long long>(done), report.mean_psnr,
                          report.mean_ssim);
            log_line(buf);
        }
    }

    write_checkpoint(static_cast<std::uint64_t>(config.total_steps), "final");
    if (config.deterministic) runtime::set_thread_count(saved_threads);
    return log;
}

MetricsReport evaluate_with(const std::function<Tensor(const Tensor&)>& super_resolve, int scale,
                            const std::vector<LoadedPair>& eval_pairs, int shave) {
    MetricsReport report;
    report.scale = scale;
    report.shave = shave;
    using Clock = std::chrono::steady_clock;
    for (const LoadedPair& pair : eval_pairs) {
        const Tensor lr = image_to_tensor(pair.lr);
        const auto t0 = Clock::now();
        const Tensor sr = super_resolve(lr);
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        if (sr.h() != pair.hr.height || sr.w() != pair.hr.width) {
            throw EvalError("super-resolved " + pair.name + " is " + std::to_string(sr.w()) +
                            "x" + std::to_string(sr.h()) + " but HR is " +
                            std::to_string(pair.hr.width) + "x" +
                            std::to_string(pair.hr.height));
        }
        const ImagePlane sr_img = tensor_to_image(sr);
        report.entries.push_back(
            {pair.name, psnr_y(sr_img, pair.hr, shave), ssim_y(sr_img, pair.hr, shave), ms});
    }
    report.finalize();
    return report;
}

MetricsReport evaluate(const Model& model, const std::vector<LoadedPair>& eval_pairs, int shave) {
    return evaluate_with([&model](const Tensor& lr) { return model.forward(lr); },
                         model.config.scale, eval_pairs, shave);
}

}  // namespace a2f
