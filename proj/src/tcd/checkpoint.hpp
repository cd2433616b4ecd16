// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcd/denoiser.hpp"
#include "tcd/schedule.hpp"
#include "tcd/sequence.hpp"

namespace tcd {

// What a trained block is for. The role fixes how training canvases are
// assembled and how the block is driven at prediction time:
//   short   forecasts the first cascade_overlap future frames (O+K canvas)
//   long    forecasts all P future frames given O+K observed (O+P canvas)
//   direct  forecasts all P future frames given only O observed (O+P canvas)
//   pre     repairs occluded observations (O-frame canvas, no future)
//   refine  re-predicts the future given an initial prediction as guide
enum class BlockRole : uint8_t { short_block, long_block, direct, pre, refine };

BlockRole block_role_from_name(const std::string& name);
const char* block_role_name(BlockRole role);

// Optimization hyperparameters. The mask spec drives training-time occlusion
// of the observed window (future frames are always unavailable).
struct TrainConfig {
  int epochs = 16;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double decay_factor = 0.1;
  std::vector<double> decay_milestones = {0.75, 0.9};
  uint64_t seed = 1;
  int workers = 1;
  OcclusionSpec mask;
  std::string refine_predictor = "zero_vel";  // guide source for refine blocks
  void validate() const;
};

// Everything needed to resume training or to sample: weights, optimizer
// moments, RNG state, and the data geometry the block was trained for.
struct Checkpoint {
  BlockRole role = BlockRole::short_block;
  DenoiserParams params;
  ScheduleKind schedule_kind = ScheduleKind::cosine;
  int schedule_steps = 50;
  NormalizationState normalization;
  SkeletonSpec skeleton;
  int observation_len = 0;
  int prediction_len = 0;
  int cascade_overlap = 0;  // K frames shared between the two cascade stages
  double fps = 25.0;
  TrainConfig train;
  int epochs_done = 0;
  int64_t adam_step = 0;
  DenoiserParams adam_m, adam_v;
  std::string rng_state;
  std::vector<double> loss_trace;  // mean training loss per completed epoch

  NoiseSchedule schedule() const { return make_schedule(schedule_kind, schedule_steps); }
  // Canvas length the block's network operates on.
  int canvas_frames() const;
  void validate() const;
};

// Binary container: magic "TCDCKPT1", JSON manifest, float32 tensor payload.
// save(load(file)) reproduces the file byte for byte.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tcd
