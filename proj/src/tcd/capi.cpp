// SPDX-License-Identifier: Apache-2.0
#include "tcd/tcd.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcd/cascade.hpp"
#include "tcd/metrics.hpp"
#include "tcd/runconfig.hpp"
#include "tcd/trainer.hpp"

namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error;

struct ConfigHandle {
  tcd::RunConfig cfg;
};
struct PipelineHandle {
  tcd::Pipeline pipeline;
};

// Runs the body, translating exceptions into status codes and stashing the
// message for tcd_last_error.
template <typename Fn>
tcd_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TCD_OK;
  } catch (const tcd::Error& e) {
    g_last_error = e.what();
    return static_cast<tcd_status>(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TCD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return TCD_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) tcd::fail(tcd::ErrorCode::invalid_argument, what);
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Serialized view of a config, for tcd_config_get.
nlohmann::json config_to_json(const tcd::RunConfig& c) {
  nlohmann::json j;
  j["data"] = {{"observation_len", c.data.observation_len},
               {"prediction_len", c.data.prediction_len},
               {"fps", c.data.fps},
               {"count", c.data.count},
               {"seed", c.data.seed}};
  j["mask"] = {{"pattern", tcd::mask_pattern_name(c.mask.pattern)},
               {"prob", c.mask.prob},
               {"joint_set", c.mask.joint_set},
               {"limb", c.mask.limb},
               {"span_frac", c.mask.span_frac},
               {"frame_frac", c.mask.frame_frac},
               {"noise_std", c.mask.noise_std},
               {"seed", c.mask_seed}};
  j["schedule"] = {{"kind", tcd::schedule_kind_name(c.schedule_kind)},
                   {"steps", c.schedule_steps}};
  j["denoiser"] = {{"joints", c.denoiser.joints},
                   {"channels", c.denoiser.channels},
                   {"heads", c.denoiser.heads},
                   {"residual_layers", c.denoiser.residual_layers},
                   {"feedforward_mult", c.denoiser.feedforward_mult},
                   {"step_embed_dim", c.denoiser.step_embed_dim},
                   {"temporal_attention", c.denoiser.temporal_attention},
                   {"spatial_attention", c.denoiser.spatial_attention}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"decay_factor", c.train.decay_factor},
                {"decay_milestones", c.train.decay_milestones},
                {"seed", c.train.seed},
                {"workers", c.train.workers},
                {"refine_predictor", c.train.refine_predictor}};
  j["cascade"] = {{"short_samples_to_average", c.cascade.short_samples_to_average},
                  {"overlap", c.resolved_overlap()}};
  j["eval"] = {{"n_samples", c.eval.n_samples},
               {"horizons_ms", c.eval.horizons_ms},
               {"seed", c.eval.seed},
               {"mmade_threshold", c.eval.mmade_threshold},
               {"workers", c.eval.workers}};
  return j;
}

// All .pseq files in a directory in filename order.
std::vector<std::string> list_sequence_files(const std::string& dir) {
  if (!fs::is_directory(dir))
    tcd::fail(tcd::ErrorCode::io, "not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pseq")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    tcd::fail(tcd::ErrorCode::io, "no .pseq files in " + dir);
  return paths;
}

std::vector<tcd::SequenceRecord> read_corpus(const std::string& dir) {
  std::vector<tcd::SequenceRecord> records;
  for (const std::string& p : list_sequence_files(dir))
    records.push_back(tcd::read_sequence_auto(p));
  return records;
}

// Completes pipelines that carry no checkpoints (zero_vel, bare exec) with
// geometry from the config.
tcd::Pipeline load_pipeline_for(const tcd::RunConfig& cfg, const std::string& spec) {
  tcd::Pipeline p = tcd::load_pipeline(tcd::parse_pipeline_spec(spec),
                                       cfg.cascade.short_samples_to_average);
  if (p.observation_len == 0) {
    p.observation_len = cfg.data.observation_len;
    p.prediction_len = cfg.data.prediction_len;
    p.skeleton = tcd::SkeletonSpec::humanoid17();
    p.fps = cfg.data.fps;
  }
  return p;
}

}  // namespace

extern "C" {

const char* tcd_status_name(tcd_status status) {
  return tcd::error_code_name(static_cast<tcd::ErrorCode>(status));
}

const char* tcd_last_error(void) { return g_last_error.c_str(); }

void tcd_string_free(char* text) { delete[] text; }

tcd_status tcd_config_load(const char* path, const char* const* overrides,
                           size_t n_overrides, tcd_config** out_config) {
  return guarded([&] {
    require(path && out_config, "tcd_config_load: null argument");
    require(n_overrides == 0 || overrides, "tcd_config_load: null overrides");
    std::vector<std::string> ov(overrides, overrides + n_overrides);
    auto* handle = new ConfigHandle{tcd::load_run_config(path, ov)};
    *out_config = reinterpret_cast<tcd_config*>(handle);
  });
}

void tcd_config_free(tcd_config* config) {
  delete reinterpret_cast<ConfigHandle*>(config);
}

tcd_status tcd_config_get(const tcd_config* config, const char* dotted_key,
                          char** out_json) {
  return guarded([&] {
    require(config && dotted_key && out_json, "tcd_config_get: null argument");
    nlohmann::json j = config_to_json(reinterpret_cast<const ConfigHandle*>(config)->cfg);
    const nlohmann::json* cur = &j;
    std::string path(dotted_key);
    size_t start = 0;
    while (true) {
      size_t dot = path.find('.', start);
      std::string seg = path.substr(start, dot - start);
      if (!cur->is_object() || !cur->contains(seg))
        tcd::fail(tcd::ErrorCode::invalid_argument,
                  "config: no such key: " + path);
      cur = &cur->at(seg);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *out_json = copy_string(cur->dump());
  });
}

tcd_status tcd_synth(const tcd_config* config, const char* out_dir, int* out_count) {
  return guarded([&] {
    require(config && out_dir, "tcd_synth: null argument");
    const tcd::RunConfig& cfg = reinterpret_cast<const ConfigHandle*>(config)->cfg;
    fs::create_directories(out_dir);
    tcd::SkeletonSpec skeleton = tcd::SkeletonSpec::humanoid17();
    int frames = cfg.data.observation_len + cfg.data.prediction_len;
    for (int i = 0; i < cfg.data.count; ++i) {
      tcd::SequenceRecord rec;
      rec.sequence = tcd::generate_synthetic_motion(
          skeleton, frames, cfg.data.fps, tcd::GaitParams{},
          tcd::derive_seed(cfg.data.seed, {static_cast<uint64_t>(i)}));
      rec.skeleton = skeleton;
      rec.observation_len = cfg.data.observation_len;
      char name[32];
      std::snprintf(name, sizeof(name), "seq_%05d.pseq", i);
      tcd::write_sequence(rec, (fs::path(out_dir) / name).string());
    }
    if (out_count) *out_count = cfg.data.count;
  });
}

tcd_status tcd_mask_file(const tcd_config* config, const char* in_path,
                         const char* out_path) {
  return guarded([&] {
    require(config && in_path && out_path, "tcd_mask_file: null argument");
    const tcd::RunConfig& cfg = reinterpret_cast<const ConfigHandle*>(config)->cfg;
    tcd::SequenceRecord rec = tcd::read_sequence_auto(in_path);
    tcd::AvailabilityMask mask =
        tcd::make_mask(cfg.mask, rec.sequence.frames(), rec.observation_len,
                       rec.skeleton, cfg.mask_seed);
    // Occluded entries are destroyed outright; surviving entries optionally
    // pick up sensor noise (raw units here, unlike normalized training).
    tcd::Rng noise(tcd::derive_seed(cfg.mask_seed, {1}));
    for (size_t i = 0; i < mask.bits.size(); ++i) {
      if (!mask.bits[i])
        rec.sequence.coords.data[i] = 0.0;
      else if (cfg.mask.noise_std > 0)
        rec.sequence.coords.data[i] += cfg.mask.noise_std * noise.normal();
    }
    rec.sequence.coords.snap_f32();
    rec.mask = std::move(mask);
    tcd::write_sequence_auto(rec, out_path);
  });
}

tcd_status tcd_train(const tcd_config* config, const char* role,
                     const char* corpus_dir, const char* checkpoint_path,
                     int resume, int max_epochs, double* out_final_loss) {
  return guarded([&] {
    require(config && role && corpus_dir && checkpoint_path,
            "tcd_train: null argument");
    const tcd::RunConfig& cfg = reinterpret_cast<const ConfigHandle*>(config)->cfg;
    std::vector<tcd::SequenceRecord> records = read_corpus(corpus_dir);
    std::vector<tcd::PoseSequence> corpus;
    corpus.reserve(records.size());
    for (tcd::SequenceRecord& r : records) corpus.push_back(std::move(r.sequence));

    tcd::Checkpoint ckpt;
    if (resume) {
      ckpt = tcd::load_checkpoint(checkpoint_path);
      if (ckpt.role != tcd::block_role_from_name(role))
        tcd::fail(tcd::ErrorCode::mode,
                  std::string("tcd_train: checkpoint role is ") +
                      tcd::block_role_name(ckpt.role) + ", asked to resume " + role);
    } else {
      tcd::BlockRole r = tcd::block_role_from_name(role);
      tcd::DenoiserConfig net = cfg.denoiser;
      net.refine_mode = (r == tcd::BlockRole::refine);
      ckpt = tcd::make_block(
          r, net, cfg.schedule_kind, cfg.schedule_steps, cfg.train, corpus,
          records[0].skeleton, cfg.data.observation_len, cfg.data.prediction_len,
          cfg.resolved_overlap(), cfg.data.fps,
          tcd::derive_seed(cfg.train.seed, {static_cast<uint64_t>(r)}));
    }
    std::vector<double> losses = tcd::train_block(ckpt, corpus, max_epochs);
    tcd::save_checkpoint(ckpt, checkpoint_path);
    if (out_final_loss) *out_final_loss = losses.empty() ? 0.0 : losses.back();
  });
}

tcd_status tcd_pipeline_load(const tcd_config* config, const char* spec,
                             tcd_pipeline** out_pipeline) {
  return guarded([&] {
    require(config && spec && out_pipeline, "tcd_pipeline_load: null argument");
    const tcd::RunConfig& cfg = reinterpret_cast<const ConfigHandle*>(config)->cfg;
    auto* handle = new PipelineHandle{load_pipeline_for(cfg, spec)};
    try {
      handle->pipeline.validate();
    } catch (...) {
      delete handle;
      throw;
    }
    *out_pipeline = reinterpret_cast<tcd_pipeline*>(handle);
  });
}

void tcd_pipeline_free(tcd_pipeline* pipeline) {
  delete reinterpret_cast<PipelineHandle*>(pipeline);
}

tcd_status tcd_sample(const tcd_config* config, tcd_pipeline* pipeline,
                      const char* in_path, int n_samples, uint64_t seed,
                      const char* out_dir) {
  return guarded([&] {
    require(config && pipeline && in_path && out_dir, "tcd_sample: null argument");
    tcd::Pipeline& p = reinterpret_cast<PipelineHandle*>(pipeline)->pipeline;
    tcd::SequenceRecord rec = tcd::read_sequence_auto(in_path);
    int O = p.observation_len;
    if (rec.sequence.frames() < O)
      tcd::fail(tcd::ErrorCode::structure,
                "tcd_sample: input has fewer frames than the observation window");
    tcd::Tensor3 obs = rec.sequence.coords.slice_frames(0, O);
    tcd::AvailabilityMask mask(O, rec.sequence.joints(), O);
    if (rec.mask) {
      for (int f = 0; f < O; ++f)
        for (int j = 0; j < rec.sequence.joints(); ++j)
          if (!rec.mask->at(f, j, 0)) mask.set_joint(f, j, 0);
    }
    tcd::PredictorResult res = tcd::predict(p, obs, mask, n_samples, seed);

    fs::create_directories(out_dir);
    tcd::SequenceRecord out;
    out.skeleton = rec.skeleton;
    out.sequence.fps = rec.sequence.fps;
    out.sequence.role_tag = tcd::RoleTag::observation_only;
    out.sequence.coords = res.observation;
    out.observation_len = O;
    tcd::write_sequence(out, (fs::path(out_dir) / "observation.pseq").string());
    out.sequence.role_tag = tcd::RoleTag::full;
    out.observation_len = 0;
    for (int s = 0; s < n_samples; ++s) {
      out.sequence.coords = res.futures[s];
      char name[32];
      std::snprintf(name, sizeof(name), "sample_%03d.pseq", s);
      tcd::write_sequence(out, (fs::path(out_dir) / name).string());
    }
  });
}

tcd_status tcd_repair(const tcd_config* config, const char* pre_checkpoint,
                      const char* in_path, const char* out_path) {
  return guarded([&] {
    require(config && pre_checkpoint && in_path && out_path,
            "tcd_repair: null argument");
    const tcd::RunConfig& cfg = reinterpret_cast<const ConfigHandle*>(config)->cfg;
    tcd::Checkpoint pre = tcd::load_checkpoint(pre_checkpoint);
    tcd::SequenceRecord rec = tcd::read_sequence_auto(in_path);
    if (!rec.mask)
      tcd::fail(tcd::ErrorCode::invalid_argument,
                "tcd_repair: input carries no availability mask");
    int O = pre.observation_len;
    if (rec.sequence.frames() < O)
      tcd::fail(tcd::ErrorCode::structure,
                "tcd_repair: input has fewer frames than the repair window");
    tcd::Tensor3 obs = rec.sequence.coords.slice_frames(0, O);
    tcd::AvailabilityMask mask(O, rec.sequence.joints(), O);
    for (int f = 0; f < O; ++f)
      for (int j = 0; j < rec.sequence.joints(); ++j)
        if (!rec.mask->at(f, j, 0)) mask.set_joint(f, j, 0);

    tcd::Tensor3 repaired =
        tcd::preprocess_repair(obs, mask, pre, tcd::derive_seed(cfg.eval.seed, {3}));
    tcd::SequenceRecord out = rec;
    out.sequence.coords = repaired;
    out.sequence.role_tag = tcd::RoleTag::observation_only;
    out.observation_len = O;
    out.mask = mask;  // keeps imputed entries identifiable
    tcd::write_sequence_auto(out, out_path);
  });
}

tcd_status tcd_evaluate(const tcd_config* config, tcd_pipeline* pipeline,
                        const char* test_dir, char** out_report_json) {
  return guarded([&] {
    require(config && pipeline && test_dir && out_report_json,
            "tcd_evaluate: null argument");
    const tcd::RunConfig& cfg = reinterpret_cast<const ConfigHandle*>(config)->cfg;
    tcd::Pipeline& p = reinterpret_cast<PipelineHandle*>(pipeline)->pipeline;
    std::vector<tcd::SequenceRecord> test_set = read_corpus(test_dir);
    tcd::EvalReport report = tcd::evaluate(p, test_set, cfg.eval);
    *out_report_json = copy_string(report.to_json());
  });
}

}  // extern "C"
