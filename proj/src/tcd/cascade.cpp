// SPDX-License-Identifier: Apache-2.0
#include "tcd/cascade.hpp"

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "tcd/rng.hpp"
#include "tcd/sequence_io.hpp"

namespace tcd {

namespace {

// Packs a lockstep batch of normalized canvases into network input.
DenoiserInput<float> pack_input(const Checkpoint& ckpt, const std::vector<Tensor3>& s_t,
                                int t, const AvailabilityMask& m, const Tensor3* guide) {
  const int B = static_cast<int>(s_t.size());
  const int F = s_t[0].frames, J = s_t[0].joints;
  const int64_t elem_rows = static_cast<int64_t>(F) * J;
  DenoiserInput<float> in;
  in.batch = B;
  in.frames = F;
  in.joints = J;
  in.steps.assign(B, t);
  in.values.resize(B * elem_rows, 3);
  in.mask.resize(B * elem_rows, 1);
  if (guide) in.guide = MatX<float>::Zero(B * elem_rows, 4);
  for (int b = 0; b < B; ++b) {
    if (!s_t[b].same_shape(s_t[0]))
      fail(ErrorCode::structure, "net_denoiser: ragged chain batch");
    int64_t row0 = b * elem_rows;
    for (int64_t r = 0; r < elem_rows; ++r) {
      for (int c = 0; c < 3; ++c)
        in.values(row0 + r, c) = static_cast<float>(s_t[b].data[r * 3 + c]);
      in.mask(row0 + r, 0) = static_cast<float>(m.bits[r * 3]);
    }
    if (guide) {
      for (int f = ckpt.observation_len; f < F; ++f)
        for (int j = 0; j < J; ++j) {
          int64_t r = row0 + static_cast<int64_t>(f) * J + j;
          for (int c = 0; c < 3; ++c)
            in.guide(r, c) = static_cast<float>(guide->at(f, j, c));
          in.guide(r, 3) = 1.0f;
        }
    }
  }
  return in;
}

BatchDenoiser make_net_denoiser(const Checkpoint* ckpt, std::optional<Tensor3> guide) {
  return [ckpt, guide = std::move(guide)](const std::vector<Tensor3>& s_t, int t,
                                          const AvailabilityMask& m,
                                          std::vector<Tensor3>& out) {
    DenoiserInput<float> in =
        pack_input(*ckpt, s_t, t, m, guide ? &guide.value() : nullptr);
    MatX<float> eps =
        denoiser_forward(ckpt->params, in, static_cast<DenoiserCache<float>*>(nullptr));
    const int F = s_t[0].frames, J = s_t[0].joints;
    const int64_t elem_rows = static_cast<int64_t>(F) * J;
    out.assign(s_t.size(), Tensor3(F, J));
    for (size_t b = 0; b < s_t.size(); ++b) {
      int64_t row0 = static_cast<int64_t>(b) * elem_rows;
      for (int64_t r = 0; r < elem_rows; ++r)
        for (int c = 0; c < 3; ++c)
          out[b].data[r * 3 + c] = static_cast<double>(eps(row0 + r, c));
    }
  };
}

void check_observation(const Tensor3& obs, const AvailabilityMask& m, int expect_frames,
                       const char* where) {
  if (obs.frames != m.frames || obs.joints != m.joints)
    fail(ErrorCode::structure, std::string(where) + ": observation/mask shape mismatch");
  if (m.observation_len != m.frames)
    fail(ErrorCode::structure,
         std::string(where) + ": expected an observation-only mask");
  if (expect_frames > 0 && obs.frames != expect_frames)
    fail(ErrorCode::structure, std::string(where) + ": observation has " +
                                   std::to_string(obs.frames) + " frames, block expects " +
                                   std::to_string(expect_frames));
}

// Copies observed frames into the head of a larger canvas.
Tensor3 embed_observation(const Tensor3& norm_obs, int canvas_frames) {
  Tensor3 canvas(canvas_frames, norm_obs.joints);
  std::copy(norm_obs.data.begin(), norm_obs.data.end(), canvas.data.begin());
  return canvas;
}

AvailabilityMask embed_mask(const AvailabilityMask& obs_mask, int canvas_frames,
                            int available_frames) {
  AvailabilityMask m(canvas_frames, obs_mask.joints, available_frames);
  for (int f = 0; f < obs_mask.frames; ++f)
    for (int j = 0; j < obs_mask.joints; ++j)
      if (!obs_mask.at(f, j, 0)) m.set_joint(f, j, 0);
  return m;
}

// Raw-space output assembly: denormalize, snap to float32 storage precision.
Tensor3 to_raw(const Tensor3& norm, const std::array<double, 3>& shift, double scale) {
  Tensor3 raw = denormalize(norm, shift, scale);
  raw.snap_f32();
  return raw;
}

}  // namespace

BatchDenoiser net_denoiser(const Checkpoint& ckpt) {
  if (ckpt.params.config.refine_mode)
    fail(ErrorCode::mode, "net_denoiser: refine block needs a guide");
  return make_net_denoiser(&ckpt, std::nullopt);
}

BatchDenoiser net_denoiser(const Checkpoint& ckpt, const Tensor3& guide) {
  if (!ckpt.params.config.refine_mode)
    fail(ErrorCode::mode, "net_denoiser: guide given to a non-refine block");
  return make_net_denoiser(&ckpt, guide);
}

Tensor3 zero_vel_predict(const Tensor3& observation, const AvailabilityMask& obs_mask,
                         int prediction_len) {
  check_observation(observation, obs_mask, 0, "zero_vel_predict");
  if (prediction_len < 1)
    fail(ErrorCode::invalid_argument, "zero_vel_predict: prediction_len must be >= 1");
  Tensor3 out(prediction_len, observation.joints);
  for (int j = 0; j < observation.joints; ++j) {
    // Last available value per joint; an entirely unavailable joint falls
    // back to the (noise-filled) last frame rather than inventing data.
    int src = observation.frames - 1;
    for (int f = observation.frames - 1; f >= 0; --f)
      if (obs_mask.at(f, j, 0)) {
        src = f;
        break;
      }
    for (int f = 0; f < prediction_len; ++f)
      for (int c = 0; c < 3; ++c) out.at(f, j, c) = observation.at(src, j, c);
  }
  return out;
}

Tensor3 preprocess_repair(const Tensor3& observation, const AvailabilityMask& obs_mask,
                          const Checkpoint& pre, uint64_t seed) {
  if (pre.role != BlockRole::pre)
    fail(ErrorCode::mode, "preprocess_repair: checkpoint is not a repair block");
  check_observation(observation, obs_mask, pre.observation_len, "preprocess_repair");
  if (obs_mask.count_zero() == 0) return observation;

  int root = pre.skeleton.root();
  auto shift = anchor_shift(observation, obs_mask, root);
  Tensor3 norm = normalize(observation, shift, pre.normalization.scale);
  NoiseSchedule schedule = pre.schedule();
  Tensor3 filled =
      sample_chains(net_denoiser(pre), norm, obs_mask, schedule, 1, seed)[0];
  Tensor3 raw = to_raw(filled, shift, pre.normalization.scale);
  // Available entries pass through bit-exactly.
  for (size_t i = 0; i < raw.data.size(); ++i)
    if (obs_mask.bits[i]) raw.data[i] = observation.data[i];
  return raw;
}

std::vector<Tensor3> cascade_canvases(const BatchDenoiser& short_net,
                                      const NoiseSchedule& short_schedule,
                                      const BatchDenoiser& long_net,
                                      const NoiseSchedule& long_schedule,
                                      const Tensor3& norm_obs,
                                      const AvailabilityMask& obs_mask, int overlap,
                                      int prediction_len, int n_samples,
                                      int average_count, uint64_t seed) {
  const int O = norm_obs.frames, K = overlap, P = prediction_len;
  check_observation(norm_obs, obs_mask, 0, "cascade");
  if (K < 1 || K >= P)
    fail(ErrorCode::invalid_argument, "cascade: overlap must satisfy 1 <= K < P");
  if (n_samples < 1 || average_count < 1)
    fail(ErrorCode::invalid_argument, "cascade: sample counts must be >= 1");

  const int J = norm_obs.joints;
  Tensor3 canvas1 = embed_observation(norm_obs, O + K);
  AvailabilityMask m1 = embed_mask(obs_mask, O + K, O);
  // Stage 2 treats the whole stage-1 window as observed: occluded
  // observation entries now carry their stage-1 repairs.
  AvailabilityMask m2(O + P, J, O + K);

  std::vector<Tensor3> out;
  out.reserve(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    uint64_t sample_seed = derive_seed(seed, {static_cast<uint64_t>(s)});

    // Stage 1: average several short-range samples into one estimate of the
    // repaired observation plus the first K future frames.
    std::vector<Tensor3> chains = sample_chains(short_net, canvas1, m1, short_schedule,
                                                average_count, derive_seed(sample_seed, {0}));
    Tensor3 head(O + K, J);
    for (const Tensor3& c : chains)
      for (size_t i = 0; i < head.data.size(); ++i) head.data[i] += c.data[i];
    for (double& v : head.data) v /= average_count;
    // Observed entries stay exactly the observation (averaging identical
    // values can still perturb the last bit).
    for (size_t i = 0; i < head.data.size(); ++i)
      if (m1.bits[i]) head.data[i] = canvas1.data[i];

    // Stage 2: long-range forecast conditioned on the stage-1 window.
    Tensor3 canvas2(O + P, J);
    std::copy(head.data.begin(), head.data.end(), canvas2.data.begin());
    out.push_back(sample_chains(long_net, canvas2, m2, long_schedule, 1,
                                derive_seed(sample_seed, {1}))[0]);
  }
  return out;
}

std::vector<Tensor3> tcd_predict(const Tensor3& observation,
                                 const AvailabilityMask& obs_mask,
                                 const Checkpoint& short_block,
                                 const Checkpoint& long_block, int n_samples,
                                 int average_count, uint64_t seed) {
  if (short_block.role != BlockRole::short_block)
    fail(ErrorCode::mode, "tcd_predict: first checkpoint is not a short block");
  if (long_block.role != BlockRole::long_block)
    fail(ErrorCode::mode, "tcd_predict: second checkpoint is not a long block");
  const int O = short_block.observation_len;
  const int K = short_block.cascade_overlap;
  const int P = long_block.prediction_len;
  if (long_block.observation_len != O || long_block.cascade_overlap != K)
    fail(ErrorCode::structure, "tcd_predict: blocks disagree on geometry");
  if (short_block.normalization.scale != long_block.normalization.scale ||
      short_block.normalization.root_joint != long_block.normalization.root_joint)
    fail(ErrorCode::structure, "tcd_predict: blocks disagree on normalization");
  check_observation(observation, obs_mask, O, "tcd_predict");

  auto shift = anchor_shift(observation, obs_mask, short_block.skeleton.root());
  double scale = short_block.normalization.scale;
  std::vector<Tensor3> canvases = cascade_canvases(
      net_denoiser(short_block), short_block.schedule(), net_denoiser(long_block),
      long_block.schedule(), normalize(observation, shift, scale), obs_mask, K, P,
      n_samples, average_count, seed);

  std::vector<Tensor3> out;
  out.reserve(n_samples);
  for (Tensor3& c : canvases) {
    Tensor3 raw = to_raw(c, shift, scale);
    // Available observation entries pass through bit-exactly.
    for (size_t i = 0; i < obs_mask.bits.size(); ++i)
      if (obs_mask.bits[i]) raw.data[i] = observation.data[i];
    out.push_back(std::move(raw));
  }
  return out;
}

std::vector<Tensor3> direct_predict(const Tensor3& observation,
                                    const AvailabilityMask& obs_mask,
                                    const Checkpoint& block, int n_samples,
                                    uint64_t seed) {
  if (block.role != BlockRole::direct)
    fail(ErrorCode::mode, "direct_predict: checkpoint is not a direct block");
  if (n_samples < 1)
    fail(ErrorCode::invalid_argument, "direct_predict: n_samples must be >= 1");
  const int O = block.observation_len, P = block.prediction_len;
  check_observation(observation, obs_mask, O, "direct_predict");

  auto shift = anchor_shift(observation, obs_mask, block.skeleton.root());
  double scale = block.normalization.scale;
  Tensor3 canvas = embed_observation(normalize(observation, shift, scale), O + P);
  AvailabilityMask m = embed_mask(obs_mask, O + P, O);
  NoiseSchedule schedule = block.schedule();
  std::vector<Tensor3> chains =
      sample_chains(net_denoiser(block), canvas, m, schedule, n_samples, seed);
  std::vector<Tensor3> futures;
  futures.reserve(n_samples);
  for (Tensor3& c : chains)
    futures.push_back(to_raw(c.slice_frames(O, O + P), shift, scale));
  return futures;
}

Tensor3 postprocess_refine(const Tensor3& observation, const AvailabilityMask& obs_mask,
                           const Tensor3& initial_prediction, const Checkpoint& refine,
                           uint64_t seed) {
  if (refine.role != BlockRole::refine)
    fail(ErrorCode::mode, "postprocess_refine: checkpoint is not a refine block");
  const int O = refine.observation_len, P = refine.prediction_len;
  check_observation(observation, obs_mask, O, "postprocess_refine");
  if (initial_prediction.frames != P || initial_prediction.joints != observation.joints)
    fail(ErrorCode::structure, "postprocess_refine: initial prediction has wrong shape");

  auto shift = anchor_shift(observation, obs_mask, refine.skeleton.root());
  double scale = refine.normalization.scale;
  Tensor3 canvas = embed_observation(normalize(observation, shift, scale), O + P);
  AvailabilityMask m = embed_mask(obs_mask, O + P, O);

  // Guide canvas: normalized initial prediction on the future frames.
  Tensor3 guide(O + P, observation.joints);
  Tensor3 norm_init = normalize(initial_prediction, shift, scale);
  for (int f = 0; f < P; ++f)
    for (int j = 0; j < observation.joints; ++j)
      for (int c = 0; c < 3; ++c) guide.at(O + f, j, c) = norm_init.at(f, j, c);

  NoiseSchedule schedule = refine.schedule();
  Tensor3 full = sample_chains(net_denoiser(refine, guide), canvas, m, schedule, 1,
                               seed)[0];
  return to_raw(full.slice_frames(O, O + P), shift, scale);
}

PipelineSpec parse_pipeline_spec(const std::string& text) {
  PipelineSpec spec;
  spec.text = text;
  // Shorthand for a bare external predictor: "exec:<command template>".
  if (text.rfind("exec:", 0) == 0) {
    if (text.size() == 5)
      fail(ErrorCode::invalid_argument, "pipeline spec: exec: needs a command");
    spec.core = PipelineSpec::Core::exec;
    spec.exec_command = text.substr(5);
    return spec;
  }
  // Grammar: stage('+')... each stage is name or name(args). Parentheses in
  // args (e.g. shell commands) must be balanced.
  std::vector<std::pair<std::string, std::string>> stages;
  size_t i = 0;
  while (i < text.size()) {
    size_t name_end = i;
    while (name_end < text.size() && text[name_end] != '(' && text[name_end] != '+')
      ++name_end;
    std::string name = text.substr(i, name_end - i);
    std::string args;
    i = name_end;
    if (i < text.size() && text[i] == '(') {
      int depth = 1;
      size_t j = i + 1;
      for (; j < text.size() && depth > 0; ++j) {
        if (text[j] == '(') ++depth;
        if (text[j] == ')') --depth;
      }
      if (depth != 0)
        fail(ErrorCode::invalid_argument, "pipeline spec: unbalanced parentheses");
      args = text.substr(i + 1, j - i - 2);
      i = j;
    }
    if (i < text.size()) {
      if (text[i] != '+')
        fail(ErrorCode::invalid_argument, "pipeline spec: expected '+' between stages");
      ++i;
    }
    if (name.empty()) fail(ErrorCode::invalid_argument, "pipeline spec: empty stage name");
    stages.emplace_back(name, args);
  }
  if (stages.empty()) fail(ErrorCode::invalid_argument, "pipeline spec: empty");

  bool have_core = false;
  for (size_t s = 0; s < stages.size(); ++s) {
    const auto& [name, args] = stages[s];
    if (name == "pre") {
      if (have_core || !spec.pre_path.empty())
        fail(ErrorCode::invalid_argument, "pipeline spec: pre() must come first, once");
      if (args.empty()) fail(ErrorCode::invalid_argument, "pipeline spec: pre() needs a path");
      spec.pre_path = args;
    } else if (name == "refine") {
      if (!have_core || !spec.refine_path.empty())
        fail(ErrorCode::invalid_argument,
             "pipeline spec: refine() must follow the core predictor, once");
      if (args.empty())
        fail(ErrorCode::invalid_argument, "pipeline spec: refine() needs a path");
      spec.refine_path = args;
    } else if (name == "zero_vel" || name == "tcd" || name == "direct" || name == "exec") {
      if (have_core)
        fail(ErrorCode::invalid_argument, "pipeline spec: more than one core predictor");
      have_core = true;
      if (name == "zero_vel") {
        if (!args.empty())
          fail(ErrorCode::invalid_argument, "pipeline spec: zero_vel takes no arguments");
        spec.core = PipelineSpec::Core::zero_vel;
      } else if (name == "tcd") {
        size_t comma = args.find(',');
        if (comma == std::string::npos)
          fail(ErrorCode::invalid_argument,
               "pipeline spec: tcd needs (short.ckpt,long.ckpt)");
        spec.core = PipelineSpec::Core::tcd;
        spec.short_path = args.substr(0, comma);
        spec.long_path = args.substr(comma + 1);
      } else if (name == "direct") {
        if (args.empty())
          fail(ErrorCode::invalid_argument, "pipeline spec: direct() needs a path");
        spec.core = PipelineSpec::Core::direct;
        spec.direct_path = args;
      } else {
        if (args.empty())
          fail(ErrorCode::invalid_argument, "pipeline spec: exec() needs a command");
        spec.core = PipelineSpec::Core::exec;
        spec.exec_command = args;
      }
    } else {
      fail(ErrorCode::invalid_argument, "pipeline spec: unknown stage " + name);
    }
  }
  if (!have_core) fail(ErrorCode::invalid_argument, "pipeline spec: no core predictor");
  return spec;
}

void Pipeline::validate() const {
  auto expect_role = [](const std::optional<Checkpoint>& c, BlockRole role) {
    if (c && c->role != role)
      fail(ErrorCode::mode, std::string("pipeline: ") + block_role_name(c->role) +
                                " checkpoint in the " + block_role_name(role) + " slot");
  };
  expect_role(pre, BlockRole::pre);
  expect_role(short_block, BlockRole::short_block);
  expect_role(long_block, BlockRole::long_block);
  expect_role(direct_block, BlockRole::direct);
  expect_role(refine, BlockRole::refine);

  std::vector<const Checkpoint*> cks;
  for (const auto* c : {&pre, &short_block, &long_block, &direct_block, &refine})
    if (c->has_value()) cks.push_back(&c->value());
  for (const Checkpoint* c : cks) {
    if (c->observation_len != observation_len)
      fail(ErrorCode::structure, "pipeline: checkpoints disagree on observation_len");
    if (c->role != BlockRole::pre && c->prediction_len != prediction_len)
      fail(ErrorCode::structure, "pipeline: checkpoints disagree on prediction_len");
    if (c->skeleton.joint_names != cks[0]->skeleton.joint_names ||
        c->skeleton.parent_index != cks[0]->skeleton.parent_index)
      fail(ErrorCode::structure, "pipeline: checkpoints disagree on skeleton");
    if (c->normalization.scale != cks[0]->normalization.scale ||
        c->normalization.root_joint != cks[0]->normalization.root_joint)
      fail(ErrorCode::structure, "pipeline: checkpoints disagree on normalization");
  }
  if (observation_len < 1 || prediction_len < 1)
    fail(ErrorCode::invalid_argument, "pipeline: geometry not set");
  if (average_count < 1)
    fail(ErrorCode::invalid_argument, "pipeline: average_count must be >= 1");
}

Pipeline load_pipeline(const PipelineSpec& spec, int average_count) {
  Pipeline p;
  p.spec = spec;
  p.average_count = average_count;
  if (!spec.pre_path.empty()) p.pre = load_checkpoint(spec.pre_path);
  if (spec.core == PipelineSpec::Core::tcd) {
    p.short_block = load_checkpoint(spec.short_path);
    p.long_block = load_checkpoint(spec.long_path);
  } else if (spec.core == PipelineSpec::Core::direct) {
    p.direct_block = load_checkpoint(spec.direct_path);
  }
  if (!spec.refine_path.empty()) p.refine = load_checkpoint(spec.refine_path);

  for (const auto* c : {&p.pre, &p.short_block, &p.long_block, &p.direct_block, &p.refine})
    if (c->has_value()) {
      p.observation_len = c->value().observation_len;
      p.prediction_len = c->value().prediction_len;
      p.skeleton = c->value().skeleton;
      p.fps = c->value().fps;
      break;
    }
  return p;
}

namespace {

Tensor3 run_exec_predictor(const std::string& command_template, const Tensor3& obs,
                           const AvailabilityMask& obs_mask, int prediction_len,
                           const SkeletonSpec& skeleton, double fps) {
  namespace fs = std::filesystem;
  std::string dir_template =
      (fs::temp_directory_path() / "tcd-exec-XXXXXX").string();
  std::vector<char> dir_buf(dir_template.begin(), dir_template.end());
  dir_buf.push_back('\0');
  if (!mkdtemp(dir_buf.data()))
    fail(ErrorCode::io, "exec predictor: cannot create temp directory");
  fs::path dir(dir_buf.data());
  fs::path in_path = dir / "observation.pseq";
  fs::path out_path = dir / "prediction.pseq";

  SequenceRecord rec;
  rec.sequence.coords = obs;
  rec.sequence.fps = fps;
  rec.sequence.role_tag = RoleTag::observation_only;
  rec.skeleton = skeleton;
  rec.observation_len = obs.frames;
  rec.mask = obs_mask;

  Tensor3 result;
  try {
    write_sequence(rec, in_path.string());
    std::string cmd = command_template;
    auto substitute = [&cmd](const std::string& key, const std::string& value) {
      size_t pos;
      while ((pos = cmd.find(key)) != std::string::npos)
        cmd.replace(pos, key.size(), value);
    };
    substitute("{input}", in_path.string());
    substitute("{output}", out_path.string());
    substitute("{frames}", std::to_string(prediction_len));

    int rc = std::system(cmd.c_str());
    if (rc == -1) fail(ErrorCode::io, "exec predictor: could not launch command");
    if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0)
      fail(ErrorCode::external,
           "exec predictor: command failed with status " +
               std::to_string(WIFEXITED(rc) ? WEXITSTATUS(rc) : -1) + ": " + cmd);
    if (!fs::exists(out_path))
      fail(ErrorCode::external, "exec predictor: command wrote no output file");
    SequenceRecord out = read_sequence(out_path.string());
    if (out.sequence.frames() != prediction_len ||
        out.sequence.joints() != obs.joints)
      fail(ErrorCode::external, "exec predictor: output must be prediction_len x joints");
    result = out.sequence.coords;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw;
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return result;
}

}  // namespace

PredictorResult predict(const Pipeline& pipeline, const Tensor3& observation,
                        const AvailabilityMask& obs_mask, int n_samples, uint64_t seed) {
  pipeline.validate();
  if (n_samples < 1)
    fail(ErrorCode::invalid_argument, "predict: n_samples must be >= 1");
  check_observation(observation, obs_mask, pipeline.observation_len, "predict");

  PredictorResult result;
  AvailabilityMask work_mask = obs_mask;
  if (pipeline.pre) {
    result.observation = preprocess_repair(observation, obs_mask, *pipeline.pre,
                                           derive_seed(seed, {0}));
    // Everything is trusted after repair.
    work_mask = AvailabilityMask(obs_mask.frames, obs_mask.joints, obs_mask.frames);
  } else {
    result.observation = observation;
  }

  uint64_t core_seed = derive_seed(seed, {1});
  switch (pipeline.spec.core) {
    case PipelineSpec::Core::zero_vel: {
      Tensor3 p = zero_vel_predict(result.observation, work_mask, pipeline.prediction_len);
      p.snap_f32();
      result.futures.assign(n_samples, p);
      break;
    }
    case PipelineSpec::Core::tcd: {
      std::vector<Tensor3> canvases =
          tcd_predict(result.observation, work_mask, *pipeline.short_block,
                      *pipeline.long_block, n_samples, pipeline.average_count, core_seed);
      for (Tensor3& c : canvases)
        result.futures.push_back(c.slice_frames(pipeline.observation_len,
                                                c.frames));
      break;
    }
    case PipelineSpec::Core::direct:
      result.futures = direct_predict(result.observation, work_mask,
                                      *pipeline.direct_block, n_samples, core_seed);
      break;
    case PipelineSpec::Core::exec: {
      Tensor3 p = run_exec_predictor(pipeline.spec.exec_command, result.observation,
                                     work_mask, pipeline.prediction_len,
                                     pipeline.skeleton, pipeline.fps);
      result.futures.assign(n_samples, p);
      break;
    }
  }

  if (pipeline.refine) {
    for (int s = 0; s < n_samples; ++s)
      result.futures[s] = postprocess_refine(
          result.observation, work_mask, result.futures[s], *pipeline.refine,
          derive_seed(seed, {2, static_cast<uint64_t>(s)}));
  }
  return result;
}

}  // namespace tcd
