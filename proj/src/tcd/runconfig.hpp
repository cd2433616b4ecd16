// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tcd/checkpoint.hpp"
#include "tcd/metrics.hpp"

namespace tcd {

// One JSON document drives a whole experiment; subcommands read the
// sections they need. Key names mirror the owning struct's fields, so a
// config delta reads like the code it configures.
struct RunConfig {
  struct Data {
    int observation_len = 0;  // required
    int prediction_len = 0;   // required
    double fps = 25.0;
    int count = 200;  // sequences per synthesized corpus
    uint64_t seed = 1;
  } data;

  OcclusionSpec mask;      // shared occlusion regime (train, mask, evaluate)
  uint64_t mask_seed = 1;  // corruption seed for the mask subcommand

  ScheduleKind schedule_kind = ScheduleKind::cosine;
  int schedule_steps = 50;

  DenoiserConfig denoiser;  // refine_mode is derived from the trained role
  TrainConfig train;        // train.mask is filled from the mask section

  struct Cascade {
    int short_samples_to_average = 5;
    int overlap = 0;  // K frames; 0 derives round(0.2 * prediction_len)
  } cascade;

  EvalProtocol eval;  // eval.mask is filled from the mask section

  int resolved_overlap() const;
  void validate() const;
};

// Parses the config document. Unknown keys are rejected and missing
// required keys reported, both by full dotted path. `overrides` are
// "section.key=value" pairs applied on top (values parsed as JSON, so
// numbers, booleans, strings, and arrays all work). Seed keys left unset
// fall back to the TCD_SEED environment variable, then to 1.
RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

}  // namespace tcd
