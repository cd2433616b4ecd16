// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tcd/cascade.hpp"
#include "tcd/sequence_io.hpp"

namespace tcd {

// All displacement metrics are in raw coordinate units (millimeters for the
// built-in skeleton) and aggregate joints by mean, so values stay on the
// scale of a single joint's error regardless of skeleton size.

// Mean over joints of the per-joint Euclidean distance at one frame.
double displacement_error(const Tensor3& pred, const Tensor3& truth, int frame);

// Mean of displacement_error over all frames / at the final frame.
double ade(const Tensor3& pred, const Tensor3& truth);
double fde(const Tensor3& pred, const Tensor3& truth);

// Diversity: mean over unordered sample pairs of the Euclidean norm between
// flattened predictions. Needs at least two samples.
double apd(const std::vector<Tensor3>& samples);

// Multimodal ADE/FDE. The ground-truth set for `query` contains every pool
// future whose matching pose (one frame, usually the last observed pose in
// normalized root-relative coordinates) lies within `threshold` of the
// query's; the query always matches itself. For each matched future the
// best sample is taken; matches are then averaged.
double mmade(const std::vector<Tensor3>& samples, const std::vector<Tensor3>& pool_poses,
             const std::vector<Tensor3>& pool_futures, size_t query, double threshold);
double mmfde(const std::vector<Tensor3>& samples, const std::vector<Tensor3>& pool_poses,
             const std::vector<Tensor3>& pool_futures, size_t query, double threshold);

// Mean per-joint Euclidean distance over (frame, joint) cells that are
// unavailable in the mask. Absent when nothing is missing.
std::optional<double> repair_ade(const Tensor3& repaired, const Tensor3& truth,
                                 const AvailabilityMask& m);

// Index of the sample with the lowest ADE against the ground truth; ties
// resolve to the lowest index.
size_t best_of(const std::vector<Tensor3>& samples, const Tensor3& truth);

// 1-based future frame index for a horizon in milliseconds.
int horizon_frame(int horizon_ms, double fps);

// Best-of-N evaluation protocol over a held-out set.
struct EvalProtocol {
  int n_samples = 5;
  std::vector<int> horizons_ms;  // empty = full window only
  OcclusionSpec mask;            // occlusion regime applied to observations
  uint64_t seed = 1;
  double mmade_threshold = 0.5;  // in normalized root-relative units
  int workers = 1;

  void validate(int prediction_len, double fps) const;
};

struct EvalReport {
  std::string pipeline;  // spec string of the evaluated pipeline
  std::string regime;    // occlusion pattern name
  int n_sequences = 0;
  int n_samples = 0;
  uint64_t seed = 0;
  int full_window_ms = 0;
  // metric name -> horizon ms -> value. FDE carries one entry per horizon;
  // whole-window metrics (ade, apd, mmade, mmfde, repair_ade) are keyed by
  // the full window. repair_ade appears only when the regime left gaps.
  std::map<std::string, std::map<int, double>> metrics;

  std::string to_json() const;
};
EvalReport eval_report_from_json(const std::string& text);

// Runs the pipeline over every record (each O+P frames, ground-truth
// futures), applying the occlusion regime to the observation windows, and
// aggregates all metrics. Deterministic for a given seed regardless of
// worker count.
EvalReport evaluate(const Pipeline& pipeline, const std::vector<SequenceRecord>& test_set,
                    const EvalProtocol& protocol);

}  // namespace tcd
