// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tcd/tensor.hpp"

namespace tcd {

// Kinematic tree description. parent_index[root] == -1; every other joint
// points at an earlier-validated parent (tree, no cycles). Limb groups name
// joint subsets used by structured occlusions and by the motion generator.
struct SkeletonSpec {
  std::vector<std::string> joint_names;
  std::vector<int> parent_index;
  std::map<std::string, std::vector<int>> limb_groups;

  int joints() const { return static_cast<int>(joint_names.size()); }
  int root() const;
  void validate() const;

  // Built-in 17-joint humanoid used by the synthetic gait corpus.
  static SkeletonSpec humanoid17();
};

// Whether a sequence carries only observed history or history plus future.
enum class RoleTag : uint8_t { observation_only = 0, full = 1 };

struct PoseSequence {
  Tensor3 coords;
  double fps = 25.0;
  RoleTag role_tag = RoleTag::full;

  int frames() const { return coords.frames; }
  int joints() const { return coords.joints; }
  void validate() const;
};

// Per-entry availability: 1 = trusted coordinate, 0 = unavailable (occluded,
// corrupted, or still to be predicted). All three coordinates of a joint
// share one value; frames at index >= observation_len are always 0.
struct AvailabilityMask {
  int frames = 0;
  int joints = 0;
  int observation_len = 0;
  std::vector<uint8_t> bits;  // frames*joints*3, values 0/1

  AvailabilityMask() = default;
  AvailabilityMask(int f, int j, int observed);

  uint8_t at(int f, int j, int c) const {
    return bits[(static_cast<size_t>(f) * joints + j) * 3 + c];
  }
  void set_joint(int f, int j, uint8_t v);
  void validate() const;
  size_t count_zero() const;
  size_t count_one() const;
};

// Occlusion patterns applied to the observation window.
//   full               no occlusion (only future frames are unavailable)
//   random_joint       each (frame, joint) in joint_set dropped with prob
//   structured_limb    one limb group fully dropped for a consecutive span
//   missing_frames     a consecutive run of whole frames dropped
enum class MaskPattern : uint8_t { full, random_joint, structured_limb, missing_frames };

struct OcclusionSpec {
  MaskPattern pattern = MaskPattern::full;
  double prob = 0.4;              // random_joint: per-entry drop probability
  std::vector<int> joint_set;     // random_joint: candidate joints (empty = limbs)
  std::string limb = "right_leg"; // structured_limb: which group
  double span_frac = 0.4;         // structured_limb: span length / observation
  double frame_frac = 0.2;        // missing_frames: span length / observation
  double noise_std = 0.0;         // corruption noise on surviving entries
};

MaskPattern mask_pattern_from_name(const std::string& name);
const char* mask_pattern_name(MaskPattern p);

// Builds an availability mask over a frames-long canvas whose first
// observation_len frames are the observation window. Future frames are
// always 0; the occlusion applies inside the observation only.
AvailabilityMask make_mask(const OcclusionSpec& spec, int frames, int observation_len,
                           const SkeletonSpec& skeleton, uint64_t seed);

// X~ = M (.) (X + noise) + (1 - M) (.) eps: surviving entries are optionally
// perturbed with N(0, noise_std^2), unavailable entries are replaced by
// standard normal draws. Inputs are expected in normalized coordinates.
Tensor3 apply_mask(const Tensor3& x, const AvailabilityMask& m, double noise_std,
                   uint64_t seed);

// Translation/scale bringing a corpus to roughly unit spread. shift is the
// root position at the anchor frame of each sequence (applied per sequence);
// scale is one scalar for the whole corpus.
struct NormalizationState {
  int root_joint = 0;
  double scale = 1.0;
};

// Root position at the last observed frame. If the root is unavailable
// there, earlier observed frames are scanned; if the root is never
// available the shift is zero.
std::array<double, 3> anchor_shift(const Tensor3& x, const AvailabilityMask& m,
                                   int root_joint);
std::array<double, 3> anchor_shift(const Tensor3& x, int observation_len, int root_joint);

// Pooled standard deviation of root-centered coordinates over a corpus.
NormalizationState compute_normalization(const std::vector<PoseSequence>& corpus,
                                         const SkeletonSpec& skeleton,
                                         int observation_len);

Tensor3 normalize(const Tensor3& x, const std::array<double, 3>& shift, double scale);
Tensor3 denormalize(const Tensor3& x, const std::array<double, 3>& shift, double scale);

// Synthetic gait generator parameters. Ranges are sampled per sequence.
struct GaitParams {
  double frequency_lo = 0.7, frequency_hi = 1.5;   // stride cycles per second
  double amplitude_lo = 0.3, amplitude_hi = 0.7;   // leg swing amplitude, rad
  double speed_lo = 400.0, speed_hi = 1600.0;      // forward speed, mm/s
  double bone_jitter = 0.1;                        // +-10% per-sequence bone scale
};

// Deterministic walking sequence: root translates at constant speed along +y
// while limbs swing sinusoidally about the lateral axis. Same seed, same
// bytes. Coordinates are in millimetres and snapped to float32.
PoseSequence generate_synthetic_motion(const SkeletonSpec& skeleton, int frames,
                                       double fps, const GaitParams& params,
                                       uint64_t seed);

}  // namespace tcd
