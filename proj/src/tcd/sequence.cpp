// SPDX-License-Identifier: Apache-2.0
#include "tcd/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "tcd/rng.hpp"

namespace tcd {

int SkeletonSpec::root() const {
  for (size_t i = 0; i < parent_index.size(); ++i)
    if (parent_index[i] < 0) return static_cast<int>(i);
  fail(ErrorCode::structure, "SkeletonSpec: no root joint");
}

void SkeletonSpec::validate() const {
  int j = joints();
  if (j < 2) fail(ErrorCode::structure, "SkeletonSpec: needs at least 2 joints");
  if (static_cast<int>(parent_index.size()) != j)
    fail(ErrorCode::structure, "SkeletonSpec: parent_index size != joint count");
  std::set<std::string> names(joint_names.begin(), joint_names.end());
  if (static_cast<int>(names.size()) != j)
    fail(ErrorCode::structure, "SkeletonSpec: duplicate joint names");
  int roots = 0;
  for (int i = 0; i < j; ++i) {
    int p = parent_index[i];
    if (p < 0) {
      ++roots;
      continue;
    }
    if (p >= j) fail(ErrorCode::structure, "SkeletonSpec: parent index out of range");
    if (p == i) fail(ErrorCode::structure, "SkeletonSpec: joint is its own parent");
  }
  if (roots != 1) fail(ErrorCode::structure, "SkeletonSpec: exactly one root required");
  // Cycle check: walking up from any joint must reach the root within j steps.
  for (int i = 0; i < j; ++i) {
    int cur = i;
    for (int steps = 0; parent_index[cur] >= 0; ++steps) {
      if (steps > j) fail(ErrorCode::structure, "SkeletonSpec: cycle in parent chain");
      cur = parent_index[cur];
    }
  }
  for (const auto& [name, group] : limb_groups) {
    if (group.empty()) fail(ErrorCode::structure, "SkeletonSpec: empty limb group " + name);
    for (int g : group)
      if (g < 0 || g >= j)
        fail(ErrorCode::structure, "SkeletonSpec: limb group " + name + " joint out of range");
  }
}

SkeletonSpec SkeletonSpec::humanoid17() {
  SkeletonSpec s;
  s.joint_names = {"pelvis",     "spine",      "chest",   "neck",    "head",
                   "l_shoulder", "l_elbow",    "l_wrist", "r_shoulder", "r_elbow",
                   "r_wrist",    "l_hip",      "l_knee",  "l_ankle", "r_hip",
                   "r_knee",     "r_ankle"};
  s.parent_index = {-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15};
  s.limb_groups = {{"left_arm", {5, 6, 7}},
                   {"right_arm", {8, 9, 10}},
                   {"left_leg", {11, 12, 13}},
                   {"right_leg", {14, 15, 16}},
                   {"torso", {0, 1, 2, 3, 4}}};
  return s;
}

void PoseSequence::validate() const {
  if (frames() < 2) fail(ErrorCode::structure, "PoseSequence: needs at least 2 frames");
  if (joints() < 2) fail(ErrorCode::structure, "PoseSequence: needs at least 2 joints");
  if (!(fps > 0.0)) fail(ErrorCode::invalid_argument, "PoseSequence: fps must be positive");
  if (!coords.all_finite()) fail(ErrorCode::numeric, "PoseSequence: non-finite coordinate");
}

AvailabilityMask::AvailabilityMask(int f, int j, int observed)
    : frames(f), joints(j), observation_len(observed) {
  if (f <= 0 || j <= 0) fail(ErrorCode::structure, "AvailabilityMask: empty shape");
  if (observed < 0 || observed > f)
    fail(ErrorCode::invalid_argument, "AvailabilityMask: observation_len out of range");
  bits.assign(static_cast<size_t>(f) * j * 3, 0);
  for (int fr = 0; fr < observed; ++fr)
    for (int jo = 0; jo < j; ++jo) set_joint(fr, jo, 1);
}

void AvailabilityMask::set_joint(int f, int j, uint8_t v) {
  size_t base = (static_cast<size_t>(f) * joints + j) * 3;
  bits[base] = bits[base + 1] = bits[base + 2] = v;
}

void AvailabilityMask::validate() const {
  if (bits.size() != static_cast<size_t>(frames) * joints * 3)
    fail(ErrorCode::structure, "AvailabilityMask: bit count != shape");
  if (observation_len < 0 || observation_len > frames)
    fail(ErrorCode::invalid_argument, "AvailabilityMask: observation_len out of range");
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < joints; ++j) {
      uint8_t v = at(f, j, 0);
      if (v > 1) fail(ErrorCode::corrupt, "AvailabilityMask: bit outside {0,1}");
      if (at(f, j, 1) != v || at(f, j, 2) != v)
        fail(ErrorCode::corrupt, "AvailabilityMask: coordinate triple disagrees");
      if (f >= observation_len && v != 0)
        fail(ErrorCode::corrupt, "AvailabilityMask: future frame marked available");
    }
}

size_t AvailabilityMask::count_zero() const { return bits.size() - count_one(); }

size_t AvailabilityMask::count_one() const {
  size_t n = 0;
  for (uint8_t b : bits) n += b;
  return n;
}

MaskPattern mask_pattern_from_name(const std::string& name) {
  if (name == "full") return MaskPattern::full;
  if (name == "random_joint") return MaskPattern::random_joint;
  if (name == "structured_limb") return MaskPattern::structured_limb;
  if (name == "missing_frames") return MaskPattern::missing_frames;
  fail(ErrorCode::invalid_argument, "unknown mask pattern: " + name);
}

const char* mask_pattern_name(MaskPattern p) {
  switch (p) {
    case MaskPattern::full: return "full";
    case MaskPattern::random_joint: return "random_joint";
    case MaskPattern::structured_limb: return "structured_limb";
    case MaskPattern::missing_frames: return "missing_frames";
  }
  return "unknown";
}

namespace {

// Joints eligible for random occlusion when no explicit set is given: every
// limb group except the torso.
std::vector<int> default_occludable(const SkeletonSpec& skeleton) {
  std::set<int> set;
  for (const auto& [name, group] : skeleton.limb_groups) {
    if (name == "torso") continue;
    set.insert(group.begin(), group.end());
  }
  return {set.begin(), set.end()};
}

int span_frames(double frac, int observation_len) {
  int n = static_cast<int>(std::lround(frac * observation_len));
  return std::clamp(n, 1, observation_len);
}

}  // namespace

AvailabilityMask make_mask(const OcclusionSpec& spec, int frames, int observation_len,
                           const SkeletonSpec& skeleton, uint64_t seed) {
  if (observation_len <= 0)
    fail(ErrorCode::invalid_argument, "make_mask: observation_len must be positive");
  AvailabilityMask m(frames, skeleton.joints(), observation_len);
  Rng rng(seed);
  switch (spec.pattern) {
    case MaskPattern::full:
      break;
    case MaskPattern::random_joint: {
      if (spec.prob < 0.0 || spec.prob > 1.0)
        fail(ErrorCode::invalid_argument, "make_mask: prob must lie in [0,1]");
      std::vector<int> set = spec.joint_set.empty() ? default_occludable(skeleton)
                                                    : spec.joint_set;
      for (int j : set)
        if (j < 0 || j >= skeleton.joints())
          fail(ErrorCode::invalid_argument, "make_mask: joint_set index out of range");
      for (int f = 0; f < observation_len; ++f)
        for (int j : set)
          if (rng.uniform() < spec.prob) m.set_joint(f, j, 0);
      break;
    }
    case MaskPattern::structured_limb: {
      auto it = skeleton.limb_groups.find(spec.limb);
      if (it == skeleton.limb_groups.end())
        fail(ErrorCode::invalid_argument, "make_mask: unknown limb group " + spec.limb);
      int span = span_frames(spec.span_frac, observation_len);
      int start = static_cast<int>(rng.integer(observation_len - span + 1));
      for (int f = start; f < start + span; ++f)
        for (int j : it->second) m.set_joint(f, j, 0);
      break;
    }
    case MaskPattern::missing_frames: {
      int span = span_frames(spec.frame_frac, observation_len);
      int start = static_cast<int>(rng.integer(observation_len - span + 1));
      for (int f = start; f < start + span; ++f)
        for (int j = 0; j < skeleton.joints(); ++j) m.set_joint(f, j, 0);
      break;
    }
  }
  return m;
}

Tensor3 apply_mask(const Tensor3& x, const AvailabilityMask& m, double noise_std,
                   uint64_t seed) {
  if (x.frames != m.frames || x.joints != m.joints)
    fail(ErrorCode::structure, "apply_mask: tensor/mask shape mismatch");
  if (noise_std < 0.0)
    fail(ErrorCode::invalid_argument, "apply_mask: noise_std must be non-negative");
  Tensor3 out = x;
  Rng rng(seed);
  // One draw per entry regardless of the mask, so the stream layout does not
  // depend on mask content.
  for (size_t i = 0; i < out.data.size(); ++i) {
    double z = rng.normal();
    if (m.bits[i]) {
      if (noise_std > 0.0) out.data[i] += noise_std * z;
    } else {
      out.data[i] = z;
    }
  }
  return out;
}

std::array<double, 3> anchor_shift(const Tensor3& x, const AvailabilityMask& m,
                                   int root_joint) {
  if (root_joint < 0 || root_joint >= x.joints)
    fail(ErrorCode::invalid_argument, "anchor_shift: root joint out of range");
  for (int f = std::min(m.observation_len, x.frames) - 1; f >= 0; --f)
    if (m.at(f, root_joint, 0))
      return {x.at(f, root_joint, 0), x.at(f, root_joint, 1), x.at(f, root_joint, 2)};
  return {0.0, 0.0, 0.0};
}

std::array<double, 3> anchor_shift(const Tensor3& x, int observation_len, int root_joint) {
  if (root_joint < 0 || root_joint >= x.joints)
    fail(ErrorCode::invalid_argument, "anchor_shift: root joint out of range");
  int f = std::min(observation_len, x.frames) - 1;
  if (f < 0) fail(ErrorCode::invalid_argument, "anchor_shift: empty observation");
  return {x.at(f, root_joint, 0), x.at(f, root_joint, 1), x.at(f, root_joint, 2)};
}

NormalizationState compute_normalization(const std::vector<PoseSequence>& corpus,
                                         const SkeletonSpec& skeleton,
                                         int observation_len) {
  if (corpus.empty()) fail(ErrorCode::degenerate, "compute_normalization: empty corpus");
  NormalizationState state;
  state.root_joint = skeleton.root();
  double sum = 0.0, sum_sq = 0.0;
  size_t n = 0;
  for (const PoseSequence& seq : corpus) {
    auto shift = anchor_shift(seq.coords, std::min(observation_len, seq.frames()),
                              state.root_joint);
    for (int f = 0; f < seq.frames(); ++f)
      for (int j = 0; j < seq.joints(); ++j)
        for (int c = 0; c < 3; ++c) {
          double v = seq.coords.at(f, j, c) - shift[c];
          sum += v;
          sum_sq += v * v;
          ++n;
        }
  }
  double mean = sum / static_cast<double>(n);
  double var = sum_sq / static_cast<double>(n) - mean * mean;
  if (!(var > 1e-12))
    fail(ErrorCode::degenerate, "compute_normalization: corpus has no spread");
  state.scale = std::sqrt(var);
  return state;
}

Tensor3 normalize(const Tensor3& x, const std::array<double, 3>& shift, double scale) {
  if (!(scale > 0.0)) fail(ErrorCode::invalid_argument, "normalize: scale must be positive");
  Tensor3 out(x.frames, x.joints);
  for (int f = 0; f < x.frames; ++f)
    for (int j = 0; j < x.joints; ++j)
      for (int c = 0; c < 3; ++c) out.at(f, j, c) = (x.at(f, j, c) - shift[c]) / scale;
  return out;
}

Tensor3 denormalize(const Tensor3& x, const std::array<double, 3>& shift, double scale) {
  if (!(scale > 0.0)) fail(ErrorCode::invalid_argument, "denormalize: scale must be positive");
  Tensor3 out(x.frames, x.joints);
  for (int f = 0; f < x.frames; ++f)
    for (int j = 0; j < x.joints; ++j)
      for (int c = 0; c < 3; ++c) out.at(f, j, c) = x.at(f, j, c) * scale + shift[c];
  return out;
}

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Rest-pose offset of each humanoid17 joint from its parent, millimetres.
// x: lateral (left negative), y: walking direction, z: up.
Vec3 rest_offset(int joint) {
  switch (joint) {
    case 0: return {0, 0, 1000};     // pelvis from world origin
    case 1: return {0, 0, 150};      // spine
    case 2: return {0, 0, 150};      // chest
    case 3: return {0, 0, 150};      // neck
    case 4: return {0, 0, 150};      // head
    case 5: return {-200, 0, 100};   // l_shoulder
    case 6: return {0, 0, -280};     // l_elbow
    case 7: return {0, 0, -250};     // l_wrist
    case 8: return {200, 0, 100};    // r_shoulder
    case 9: return {0, 0, -280};     // r_elbow
    case 10: return {0, 0, -250};    // r_wrist
    case 11: return {-100, 0, -40};  // l_hip
    case 12: return {0, 0, -420};    // l_knee
    case 13: return {0, 0, -430};    // l_ankle
    case 14: return {100, 0, -40};   // r_hip
    case 15: return {0, 0, -420};    // r_knee
    case 16: return {0, 0, -430};    // r_ankle
  }
  fail(ErrorCode::internal, "rest_offset: joint out of range");
}

// Rotate the limb joints about the lateral (x) axis through the pivot.
void swing(std::vector<Vec3>& pos, const std::vector<int>& limb_joints, int pivot,
           double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  for (int j : limb_joints) {
    double dy = pos[j].y - pos[pivot].y;
    double dz = pos[j].z - pos[pivot].z;
    pos[j].y = pos[pivot].y + c * dy - s * dz;
    pos[j].z = pos[pivot].z + s * dy + c * dz;
  }
}

}  // namespace

PoseSequence generate_synthetic_motion(const SkeletonSpec& skeleton, int frames,
                                       double fps, const GaitParams& params,
                                       uint64_t seed) {
  skeleton.validate();
  if (skeleton.joints() != 17)
    fail(ErrorCode::structure, "generate_synthetic_motion: expects the 17-joint humanoid");
  if (frames < 2) fail(ErrorCode::invalid_argument, "generate_synthetic_motion: frames < 2");
  if (!(fps > 0.0)) fail(ErrorCode::invalid_argument, "generate_synthetic_motion: fps <= 0");

  Rng rng(seed);
  auto pick = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  double freq = pick(params.frequency_lo, params.frequency_hi);
  double amp = pick(params.amplitude_lo, params.amplitude_hi);
  double speed = pick(params.speed_lo, params.speed_hi);
  double phase = 2.0 * std::numbers::pi * rng.uniform();

  // Per-bone length jitter, one factor per non-root joint.
  std::vector<double> bone_scale(17, 1.0);
  for (int j = 1; j < 17; ++j)
    bone_scale[j] = 1.0 + params.bone_jitter * (2.0 * rng.uniform() - 1.0);

  // Rest pose assembled parent-first (parents precede children in humanoid17
  // except shoulders/hips, which still follow their parents by index).
  std::vector<Vec3> rest(17);
  for (int j = 0; j < 17; ++j) {
    Vec3 off = rest_offset(j);
    double s = bone_scale[j];
    int p = skeleton.parent_index[j];
    Vec3 base = (p < 0) ? Vec3{} : rest[p];
    rest[j] = {base.x + off.x * s, base.y + off.y * s, base.z + off.z * s};
  }

  PoseSequence seq;
  seq.fps = fps;
  seq.coords = Tensor3(frames, 17);
  std::vector<Vec3> pos(17);
  for (int f = 0; f < frames; ++f) {
    double tau = static_cast<double>(f) / fps;
    double theta = 2.0 * std::numbers::pi * freq * tau + phase;
    double drift = speed * tau;
    double bob = 20.0 * std::sin(2.0 * theta);
    for (int j = 0; j < 17; ++j)
      pos[j] = {rest[j].x, rest[j].y + drift, rest[j].z + bob};
    double leg = amp * std::sin(theta);
    double arm = 0.6 * amp * std::sin(theta);
    swing(pos, {12, 13}, 11, leg);    // left leg
    swing(pos, {15, 16}, 14, -leg);   // right leg, opposite phase
    swing(pos, {6, 7}, 5, -arm);      // left arm counter-swings its leg
    swing(pos, {9, 10}, 8, arm);      // right arm
    for (int j = 0; j < 17; ++j) {
      seq.coords.at(f, j, 0) = pos[j].x;
      seq.coords.at(f, j, 1) = pos[j].y;
      seq.coords.at(f, j, 2) = pos[j].z;
    }
  }
  seq.coords.snap_f32();
  seq.validate();
  return seq;
}

}  // namespace tcd
