// SPDX-License-Identifier: Apache-2.0
#include "tcd/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tcd {

namespace {
using json = nlohmann::json;
constexpr char kMagic[8] = {'T', 'C', 'D', 'C', 'K', 'P', 'T', '1'};
}  // namespace

BlockRole block_role_from_name(const std::string& name) {
  if (name == "short") return BlockRole::short_block;
  if (name == "long") return BlockRole::long_block;
  if (name == "direct") return BlockRole::direct;
  if (name == "pre") return BlockRole::pre;
  if (name == "refine") return BlockRole::refine;
  fail(ErrorCode::invalid_argument, "unknown block role: " + name);
}

const char* block_role_name(BlockRole role) {
  switch (role) {
    case BlockRole::short_block: return "short";
    case BlockRole::long_block: return "long";
    case BlockRole::direct: return "direct";
    case BlockRole::pre: return "pre";
    case BlockRole::refine: return "refine";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::invalid_argument, "TrainConfig: epochs must be >= 1");
  if (batch_size < 1) fail(ErrorCode::invalid_argument, "TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0))
    fail(ErrorCode::invalid_argument, "TrainConfig: learning_rate must be positive");
  if (!(decay_factor > 0.0) || decay_factor > 1.0)
    fail(ErrorCode::invalid_argument, "TrainConfig: decay_factor must lie in (0,1]");
  for (double m : decay_milestones)
    if (m <= 0.0 || m >= 1.0)
      fail(ErrorCode::invalid_argument, "TrainConfig: milestones must lie in (0,1)");
  if (workers < 1) fail(ErrorCode::invalid_argument, "TrainConfig: workers must be >= 1");
}

int Checkpoint::canvas_frames() const {
  switch (role) {
    case BlockRole::short_block: return observation_len + cascade_overlap;
    case BlockRole::long_block:
    case BlockRole::direct:
    case BlockRole::refine: return observation_len + prediction_len;
    case BlockRole::pre: return observation_len;
  }
  fail(ErrorCode::internal, "Checkpoint: bad role");
}

void Checkpoint::validate() const {
  params.config.validate();
  skeleton.validate();
  train.validate();
  if (skeleton.joints() != params.config.joints)
    fail(ErrorCode::structure, "Checkpoint: skeleton joints disagree with network");
  if (observation_len < 1) fail(ErrorCode::invalid_argument, "Checkpoint: observation_len < 1");
  if (role != BlockRole::pre && prediction_len < 1)
    fail(ErrorCode::invalid_argument, "Checkpoint: prediction_len < 1");
  if (role == BlockRole::short_block && cascade_overlap < 1)
    fail(ErrorCode::invalid_argument, "Checkpoint: short block needs cascade_overlap >= 1");
  if (schedule_steps < 1) fail(ErrorCode::invalid_argument, "Checkpoint: schedule_steps < 1");
  if (!(fps > 0.0)) fail(ErrorCode::invalid_argument, "Checkpoint: fps <= 0");
  if (!(normalization.scale > 0.0))
    fail(ErrorCode::invalid_argument, "Checkpoint: normalization scale <= 0");
  if ((role == BlockRole::refine) != params.config.refine_mode)
    fail(ErrorCode::mode, "Checkpoint: refine role requires refine-mode network");
}

namespace {

json skeleton_json(const SkeletonSpec& s) {
  json groups = json::object();
  for (const auto& [name, joints] : s.limb_groups) groups[name] = joints;
  return json{{"joint_names", s.joint_names},
              {"parent_index", s.parent_index},
              {"limb_groups", groups}};
}

SkeletonSpec skeleton_from(const json& j) {
  SkeletonSpec s;
  s.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  s.parent_index = j.at("parent_index").get<std::vector<int>>();
  for (const auto& [name, joints] : j.at("limb_groups").items())
    s.limb_groups[name] = joints.get<std::vector<int>>();
  return s;
}

json occlusion_json(const OcclusionSpec& o) {
  return json{{"pattern", mask_pattern_name(o.pattern)}, {"prob", o.prob},
              {"joint_set", o.joint_set},               {"limb", o.limb},
              {"span_frac", o.span_frac},               {"frame_frac", o.frame_frac},
              {"noise_std", o.noise_std}};
}

OcclusionSpec occlusion_from(const json& j) {
  OcclusionSpec o;
  o.pattern = mask_pattern_from_name(j.at("pattern").get<std::string>());
  o.prob = j.at("prob").get<double>();
  o.joint_set = j.at("joint_set").get<std::vector<int>>();
  o.limb = j.at("limb").get<std::string>();
  o.span_frac = j.at("span_frac").get<double>();
  o.frame_frac = j.at("frame_frac").get<double>();
  o.noise_std = j.at("noise_std").get<double>();
  return o;
}

json denoiser_json(const DenoiserConfig& c) {
  return json{{"joints", c.joints},
              {"channels", c.channels},
              {"heads", c.heads},
              {"residual_layers", c.residual_layers},
              {"feedforward_mult", c.feedforward_mult},
              {"step_embed_dim", c.step_embed_dim},
              {"temporal_attention", c.temporal_attention},
              {"spatial_attention", c.spatial_attention},
              {"refine_mode", c.refine_mode}};
}

DenoiserConfig denoiser_from(const json& j) {
  DenoiserConfig c;
  c.joints = j.at("joints").get<int>();
  c.channels = j.at("channels").get<int>();
  c.heads = j.at("heads").get<int>();
  c.residual_layers = j.at("residual_layers").get<int>();
  c.feedforward_mult = j.at("feedforward_mult").get<int>();
  c.step_embed_dim = j.at("step_embed_dim").get<int>();
  c.temporal_attention = j.at("temporal_attention").get<bool>();
  c.spatial_attention = j.at("spatial_attention").get<bool>();
  c.refine_mode = j.at("refine_mode").get<bool>();
  return c;
}

json train_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"decay_factor", t.decay_factor},
              {"decay_milestones", t.decay_milestones},
              {"seed", t.seed},
              {"workers", t.workers},
              {"mask", occlusion_json(t.mask)},
              {"refine_predictor", t.refine_predictor}};
}

TrainConfig train_from(const json& j) {
  TrainConfig t;
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.decay_factor = j.at("decay_factor").get<double>();
  t.decay_milestones = j.at("decay_milestones").get<std::vector<double>>();
  t.seed = j.at("seed").get<uint64_t>();
  t.workers = j.at("workers").get<int>();
  t.mask = occlusion_from(j.at("mask"));
  t.refine_predictor = j.at("refine_predictor").get<std::string>();
  return t;
}

void append_tensors(json& list, std::string& payload, const char* section,
                    const DenoiserParams& p) {
  for (const auto& [name, m] : p.named_tensors()) {
    json entry{{"name", std::string(section) + "/" + name},
               {"rows", m->rows()},
               {"cols", m->cols()},
               {"offset", payload.size()}};
    list.push_back(entry);
    size_t bytes = static_cast<size_t>(m->size()) * 4;
    size_t at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, m->data(), bytes);
  }
}

void extract_tensors(const json& list, const std::string& payload, const char* section,
                     DenoiserParams& p, const std::string& path) {
  for (auto& [name, m] : p.named_tensors()) {
    std::string want = std::string(section) + "/" + name;
    const json* found = nullptr;
    for (const json& e : list)
      if (e.at("name").get<std::string>() == want) {
        found = &e;
        break;
      }
    if (!found)
      fail(ErrorCode::header_mismatch, path + ": manifest lacks tensor " + want);
    if (found->at("rows").get<Eigen::Index>() != m->rows() ||
        found->at("cols").get<Eigen::Index>() != m->cols())
      fail(ErrorCode::header_mismatch, path + ": tensor " + want + " has wrong shape");
    size_t offset = found->at("offset").get<size_t>();
    size_t bytes = static_cast<size_t>(m->size()) * 4;
    if (offset + bytes > payload.size())
      fail(ErrorCode::truncated, path + ": tensor " + want + " extends past payload");
    std::memcpy(m->data(), payload.data() + offset, bytes);
    if (!m->allFinite())
      fail(ErrorCode::corrupt, path + ": tensor " + want + " holds non-finite values");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.validate();
  json tensors = json::array();
  std::string payload;
  append_tensors(tensors, payload, "param", ckpt.params);
  append_tensors(tensors, payload, "adam_m", ckpt.adam_m);
  append_tensors(tensors, payload, "adam_v", ckpt.adam_v);

  json manifest{
      {"version", 1},
      {"role", block_role_name(ckpt.role)},
      {"denoiser", denoiser_json(ckpt.params.config)},
      {"schedule", {{"kind", schedule_kind_name(ckpt.schedule_kind)},
                    {"steps", ckpt.schedule_steps}}},
      {"normalization", {{"root_joint", ckpt.normalization.root_joint},
                         {"scale", ckpt.normalization.scale}}},
      {"skeleton", skeleton_json(ckpt.skeleton)},
      {"data", {{"observation_len", ckpt.observation_len},
                {"prediction_len", ckpt.prediction_len},
                {"cascade_overlap", ckpt.cascade_overlap},
                {"fps", ckpt.fps}}},
      {"train", train_json(ckpt.train)},
      {"progress", {{"epochs_done", ckpt.epochs_done},
                    {"adam_step", ckpt.adam_step},
                    {"rng", ckpt.rng_state},
                    {"loss_trace", ckpt.loss_trace}}},
      {"tensors", tensors}};

  std::string head = manifest.dump();
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  uint32_t len = static_cast<uint32_t>(head.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += head;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::io, path + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) fail(ErrorCode::io, path + ": write failure");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::io, path + ": cannot open for reading");
  std::ostringstream buf;
  buf << f.rdbuf();
  if (f.bad()) fail(ErrorCode::io, path + ": read failure");
  std::string bytes = buf.str();

  if (bytes.size() < sizeof(kMagic) + 4) {
    // A non-empty prefix of the magic is a valid file cut short, not an
    // unrecognized one.
    size_t n = std::min(bytes.size(), sizeof(kMagic));
    if (n > 0 && std::memcmp(bytes.data(), kMagic, n) == 0)
      fail(ErrorCode::truncated, path + ": file too short");
    fail(ErrorCode::format, path + ": unrecognized format (bad magic)");
  }
  if (std::memcmp(bytes.data(), "TCDCKPT", 7) != 0)
    fail(ErrorCode::format, path + ": unrecognized format (bad magic)");
  if (bytes[7] != '1')
    fail(ErrorCode::version, path + ": unsupported checkpoint version");

  size_t off = sizeof(kMagic);
  uint32_t head_len = 0;
  for (int i = 0; i < 4; ++i)
    head_len |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
  off += 4;
  if (off + head_len > bytes.size())
    fail(ErrorCode::truncated, path + ": manifest extends past end of file");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(off, head_len));
  } catch (const json::exception& e) {
    fail(ErrorCode::header_mismatch,
         path + ": manifest is not valid JSON (" + std::string(e.what()) + ")");
  }
  std::string payload = bytes.substr(off + head_len);

  Checkpoint ckpt;
  try {
    if (manifest.at("version").get<int>() != 1)
      fail(ErrorCode::version, path + ": unsupported manifest version");
    ckpt.role = block_role_from_name(manifest.at("role").get<std::string>());
    DenoiserConfig cfg = denoiser_from(manifest.at("denoiser"));
    ckpt.params = DenoiserParams::make(cfg);
    ckpt.adam_m = DenoiserParams::make(cfg);
    ckpt.adam_v = DenoiserParams::make(cfg);
    const json& sch = manifest.at("schedule");
    ckpt.schedule_kind = schedule_kind_from_name(sch.at("kind").get<std::string>());
    ckpt.schedule_steps = sch.at("steps").get<int>();
    const json& nr = manifest.at("normalization");
    ckpt.normalization.root_joint = nr.at("root_joint").get<int>();
    ckpt.normalization.scale = nr.at("scale").get<double>();
    ckpt.skeleton = skeleton_from(manifest.at("skeleton"));
    const json& d = manifest.at("data");
    ckpt.observation_len = d.at("observation_len").get<int>();
    ckpt.prediction_len = d.at("prediction_len").get<int>();
    ckpt.cascade_overlap = d.at("cascade_overlap").get<int>();
    ckpt.fps = d.at("fps").get<double>();
    ckpt.train = train_from(manifest.at("train"));
    const json& pr = manifest.at("progress");
    ckpt.epochs_done = pr.at("epochs_done").get<int>();
    ckpt.adam_step = pr.at("adam_step").get<int64_t>();
    ckpt.rng_state = pr.at("rng").get<std::string>();
    ckpt.loss_trace = pr.at("loss_trace").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::header_mismatch,
         path + ": manifest missing fields (" + std::string(e.what()) + ")");
  }

  const json& tensors = manifest.at("tensors");
  size_t expect =
      (ckpt.params.parameter_count() + ckpt.adam_m.parameter_count() +
       ckpt.adam_v.parameter_count()) * 4;
  if (payload.size() != expect)
    fail(ErrorCode::truncated, path + ": payload size disagrees with architecture");
  extract_tensors(tensors, payload, "param", ckpt.params, path);
  extract_tensors(tensors, payload, "adam_m", ckpt.adam_m, path);
  extract_tensors(tensors, payload, "adam_v", ckpt.adam_v, path);

  ckpt.validate();
  return ckpt;
}

}  // namespace tcd
