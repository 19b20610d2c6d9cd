#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sfl/model.hpp"

namespace sfl {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Training snapshot.
///
/// Binary layout, little-endian throughout:
///
///   "SFLC"                      magic
///   u16 version, u32 epoch
///   f64 learning_rate, f64 momentum, f64 init_std, u64 seed,
///   u8 sfl_enabled, u32 mini_batch
///   u32 n, f64 w_pl[n]
///   u32 m, f64 scales[m], f64 w_sfl[m]
///   u32 layer count, then per layer:
///     u32 in, u32 out, u32 half_size, u8 stride, u8 activation, u8 padding,
///     u8 trainable, f32 weights[(c, c', alpha, beta) order], f32 biases[out]
///   bank descriptor (same header fields as a layer), u64 bank weight checksum
///   per layer: f32 weight velocities, f32 bias velocities
///   u64 FNV-1a of every preceding byte
///
/// Bank weights are not stored; they are re-synthesized from the scales and
/// verified against the checksum.
struct Checkpoint {
  std::uint32_t epoch = 0;
  TrainConfig config;
  CaeModel<float> model;
  OptimizerState<float> state;
};

std::vector<std::uint8_t> encode_checkpoint(const CaeModel<float>& model,
                                            const OptimizerState<float>& state,
                                            std::uint32_t epoch, const TrainConfig& config);

// Throws CheckpointError naming the failure; never returns a partial model.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// Written to a temporary file first and renamed into place.
void save_checkpoint(const CaeModel<float>& model, const OptimizerState<float>& state,
                     std::uint32_t epoch, const TrainConfig& config,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfl
