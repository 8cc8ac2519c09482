#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "a2f/dataset.hpp"
#include "a2f/metrics.hpp"
#include "a2f/model.hpp"
#include "a2f/optimizer.hpp"
#include "a2f/rng.hpp"

namespace a2f {

struct TrainConfig {
    double lr = 1e-3;
    std::int64_t lr_halving_interval = 200000;
    int batch_size = 16;
    int lr_patch = 48;  // LR-space patch edge
    std::int64_t total_steps = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t checkpoint_interval = 10000;
    std::int64_t eval_interval = 0;  // 0: only at the end
    std::int64_t log_interval = 100;
    bool augment = true;
    bool deterministic = false;  // single-threaded ops, reproducible bit-for-bit
    std::filesystem::path out_dir;  // empty: no checkpoints/log files

    AdamConfig adam() const { return {lr, beta1, beta2, adam_eps, lr_halving_interval}; }
    void validate() const;
};

struct PatchPair {
    Tensor lr;  // (1, 3, patch, patch), values in [0,1]
    Tensor hr;  // (1, 3, p*patch, p*patch)
};

// Aligned LR/HR crop: LR offset (x, y), HR offset (p*x, p*y). Throws
// EvalError if the image is smaller than the patch (caller picks another
// image).
PatchPair sample_patch(const ImagePlane& hr, const ImagePlane& lr, int scale, int lr_patch,
                       Rng& rng);

// One of the 8 dihedral transforms (identity, rotations, flips) on a
// (n,c,h,w) tensor; pure index permutation. k in [0,8): bit 2 flips
// horizontally first, bits 0-1 then rotate by 90 degrees counterclockwise
// k&3 times.
Tensor dihedral_transform(const Tensor& t, int k);

// Applies one uniformly drawn dihedral transform to both patches.
void augment_pair(PatchPair& pair, Rng& rng);

struct TrainLog {
    std::vector<float> losses;          // one entry per step
    std::filesystem::path last_checkpoint;
    std::filesystem::path log_file;
    std::filesystem::path lambda_file;
};

// Optimization loop: sample batch -> augment -> forward -> L1 -> backward ->
// Adam. Emits line-delimited progress records, lambda snapshots (CSV) and
// periodic checkpoints under config.out_dir. `start_state` resumes from a
// loaded optimizer state at meta.step.
TrainLog train(Model& model, const std::vector<LoadedPair>& data, const TrainConfig& config,
               AdamState* resume_state = nullptr, std::uint64_t start_step = 0,
               const std::vector<LoadedPair>* eval_data = nullptr);

// Per-image and mean PSNR/SSIM plus wall-clock forward time (image decode /
// encode excluded from the timing).
MetricsReport evaluate(const Model& model, const std::vector<LoadedPair>& eval_pairs, int shave);

// Same report with an arbitrary LR -> SR map; lets tests drive the metrics
// path with stub models.
MetricsReport evaluate_with(const std::function<Tensor(const Tensor&)>& super_resolve, int scale,
                            const std::vector<LoadedPair>& eval_pairs, int shave);

}  // namespace a2f
