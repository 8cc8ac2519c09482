#pragma once

#include <filesystem>
#include <optional>

#include "a2f/model.hpp"
#include "a2f/optimizer.hpp"

namespace a2f {

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::vector<float> loss_tail;  // most recent losses, capped at 32 entries
};

// Binary ".a2f" container. Layout, all integers little-endian:
//   magic "A2FC" | u32 version | u32 json_len + config/metadata JSON |
//   u32 entry_count | entries | u64 FNV-1a checksum of all preceding bytes.
// Each entry: u32 name_len + name | u32 rank | rank u32 dims | f32 payload.
// Every model parameter (lambdas included, stored as 1-element tensors)
// appears exactly once; Adam moments are stored under "adam.m."/"adam.v."
// prefixes when optimizer state is included.
void save_checkpoint(const Model& model, const AdamState* optimizer, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
    Model model;
    std::optional<AdamState> optimizer;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace a2f
