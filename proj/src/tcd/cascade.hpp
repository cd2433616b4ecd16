// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tcd/checkpoint.hpp"
#include "tcd/diffusion.hpp"

namespace tcd {

// Wraps a trained block as a batch denoiser over normalized canvases. For
// refine blocks, `guide` carries the normalized initial prediction on the
// same canvas (guide presence is 1 exactly on future frames).
BatchDenoiser net_denoiser(const Checkpoint& ckpt);
BatchDenoiser net_denoiser(const Checkpoint& ckpt, const Tensor3& guide);

// Constant-pose baseline: every future frame repeats the last available
// value of each joint (scanning backward per joint under the mask).
Tensor3 zero_vel_predict(const Tensor3& observation, const AvailabilityMask& obs_mask,
                         int prediction_len);

// Fills the occluded entries of an observation by sampling a repair block
// over the observation-only canvas. Available entries of the result are
// bit-equal to the input; the rest are denoised estimates.
Tensor3 preprocess_repair(const Tensor3& observation, const AvailabilityMask& obs_mask,
                          const Checkpoint& pre, uint64_t seed);

// Two-stage cascade on normalized canvases (also the oracle-test entry
// point; tcd_predict wraps it with checkpoints and normalization). Stage 1
// samples the short block `average_count` times over the (O+K)-frame canvas
// and averages elementwise, which both repairs occluded observation entries
// and estimates the first K future frames. Stage 2 marks those O+K frames
// observed and samples the long block for the remaining frames. Each of the
// n_samples outputs is an independent cascade run seeded from
// derive_seed(seed, {sample}) and spans all O+P frames.
std::vector<Tensor3> cascade_canvases(const BatchDenoiser& short_net,
                                      const NoiseSchedule& short_schedule,
                                      const BatchDenoiser& long_net,
                                      const NoiseSchedule& long_schedule,
                                      const Tensor3& norm_obs,
                                      const AvailabilityMask& obs_mask, int overlap,
                                      int prediction_len, int n_samples,
                                      int average_count, uint64_t seed);

// Checkpoint-driven cascade in raw coordinates. Returns n_samples tensors of
// O+P frames: a repaired observation window followed by the forecast.
// Available observation entries pass through bit-exactly.
std::vector<Tensor3> tcd_predict(const Tensor3& observation,
                                 const AvailabilityMask& obs_mask,
                                 const Checkpoint& short_block,
                                 const Checkpoint& long_block, int n_samples,
                                 int average_count, uint64_t seed);

// Single-stage forecast with a direct block (no overlap averaging).
std::vector<Tensor3> direct_predict(const Tensor3& observation,
                                    const AvailabilityMask& obs_mask,
                                    const Checkpoint& block, int n_samples,
                                    uint64_t seed);

// Re-predicts the future with a refine block, conditioning on an initial
// prediction as guide channels.
Tensor3 postprocess_refine(const Tensor3& observation, const AvailabilityMask& obs_mask,
                           const Tensor3& initial_prediction, const Checkpoint& refine,
                           uint64_t seed);

// Parsed pipeline recipe, e.g. "pre(a.ckpt)+tcd(s.ckpt,l.ckpt)+refine(r.ckpt)"
// or "zero_vel", "direct(d.ckpt)", "exec(mypredict {input} {output} {frames})".
struct PipelineSpec {
  enum class Core { zero_vel, tcd, direct, exec };
  std::string pre_path;  // empty = no repair stage
  Core core = Core::zero_vel;
  std::string short_path, long_path, direct_path;
  std::string exec_command;
  std::string refine_path;  // empty = no refinement stage
  std::string text;         // original spec string
};
PipelineSpec parse_pipeline_spec(const std::string& text);

// A ready-to-run pipeline with its checkpoints loaded. Checkpoints must
// agree on skeleton, geometry, and normalization.
struct Pipeline {
  PipelineSpec spec;
  std::optional<Checkpoint> pre, short_block, long_block, direct_block, refine;
  int average_count = 5;  // short-block samples averaged per cascade run

  // Geometry the pipeline serves; filled from the checkpoints (an
  // exec/zero_vel-only pipeline takes them from the caller's data instead).
  int observation_len = 0, prediction_len = 0;
  SkeletonSpec skeleton;  // exec stages serialize observations with this
  double fps = 0;

  void validate() const;
};
Pipeline load_pipeline(const PipelineSpec& spec, int average_count);

struct PredictorResult {
  Tensor3 observation;           // O frames, raw; occlusions repaired if pre ran
  std::vector<Tensor3> futures;  // n_samples x (P frames, raw)
};

// Runs the full pipeline on one raw observation window. Available entries
// of `result.observation` are bit-equal to the input observation.
PredictorResult predict(const Pipeline& pipeline, const Tensor3& observation,
                        const AvailabilityMask& obs_mask, int n_samples, uint64_t seed);

}  // namespace tcd
