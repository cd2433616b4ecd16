// SPDX-License-Identifier: Apache-2.0
#include "tcd/runconfig.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tcd {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& path, const std::string& what) {
  fail(ErrorCode::invalid_argument, "config: " + path + ": " + what);
}

// Typed extraction with dotted-path error reporting. Each getter removes
// the key from the section copy; leftovers are unknown keys.
struct Section {
  json obj;
  std::string path;

  Section(json o, std::string p) : obj(std::move(o)), path(std::move(p)) {
    if (!obj.is_object()) bad_key(path, "must be an object");
  }

  json take(const std::string& key) {
    json v = obj.at(key);
    obj.erase(key);
    return v;
  }
  bool has(const std::string& key) const { return obj.contains(key); }

  void get_int(const std::string& key, int& out) {
    if (!has(key)) return;
    json v = take(key);
    if (!v.is_number_integer()) bad_key(path + "." + key, "must be an integer");
    out = v.get<int>();
  }
  void get_double(const std::string& key, double& out) {
    if (!has(key)) return;
    json v = take(key);
    if (!v.is_number()) bad_key(path + "." + key, "must be a number");
    out = v.get<double>();
  }
  void get_bool(const std::string& key, bool& out) {
    if (!has(key)) return;
    json v = take(key);
    if (!v.is_boolean()) bad_key(path + "." + key, "must be a boolean");
    out = v.get<bool>();
  }
  void get_string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    json v = take(key);
    if (!v.is_string()) bad_key(path + "." + key, "must be a string");
    out = v.get<std::string>();
  }
  // Seeds: explicit value wins, else TCD_SEED, else the default already in
  // `out`. Returns whether the config set it explicitly.
  void get_seed(const std::string& key, uint64_t& out) {
    if (has(key)) {
      json v = take(key);
      if (!v.is_number_unsigned())
        bad_key(path + "." + key, "must be an unsigned integer");
      out = v.get<uint64_t>();
      return;
    }
    if (const char* env = std::getenv("TCD_SEED")) {
      try {
        size_t used = 0;
        out = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument,
             "config: TCD_SEED must be an unsigned integer, got '" +
                 std::string(env) + "'");
      }
    }
  }
  void get_int_list(const std::string& key, std::vector<int>& out) {
    if (!has(key)) return;
    json v = take(key);
    if (!v.is_array()) bad_key(path + "." + key, "must be an array of integers");
    out.clear();
    for (const json& e : v) {
      if (!e.is_number_integer())
        bad_key(path + "." + key, "must be an array of integers");
      out.push_back(e.get<int>());
    }
  }
  void get_double_list(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    json v = take(key);
    if (!v.is_array()) bad_key(path + "." + key, "must be an array of numbers");
    out.clear();
    for (const json& e : v) {
      if (!e.is_number()) bad_key(path + "." + key, "must be an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  void finish() const {
    for (const auto& item : obj.items())
      bad_key(path + "." + item.key(), "unknown key");
  }
};

void apply_override(json& doc, const std::string& text) {
  size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorCode::invalid_argument,
         "config override must look like section.key=value, got '" + text + "'");
  std::string path = text.substr(0, eq);
  std::string value_text = text.substr(eq + 1);
  json value;
  try {
    value = json::parse(value_text);
  } catch (const json::exception&) {
    value = value_text;  // bare words are strings
  }
  json* cur = &doc;
  size_t start = 0;
  for (size_t dot = path.find('.'); dot != std::string::npos;
       start = dot + 1, dot = path.find('.', start)) {
    std::string seg = path.substr(start, dot - start);
    if (seg.empty()) fail(ErrorCode::invalid_argument, "config override: empty path segment");
    cur = &(*cur)[seg];
    if (!cur->is_object() && !cur->is_null())
      fail(ErrorCode::invalid_argument, "config override: " + seg + " is not a section");
  }
  std::string leaf = path.substr(start);
  if (leaf.empty()) fail(ErrorCode::invalid_argument, "config override: empty key");
  (*cur)[leaf] = value;
}

}  // namespace

int RunConfig::resolved_overlap() const {
  if (cascade.overlap > 0) return cascade.overlap;
  return static_cast<int>(std::lround(0.2 * data.prediction_len));
}

void RunConfig::validate() const {
  if (data.observation_len < 2)
    fail(ErrorCode::invalid_argument, "config: data.observation_len must be >= 2");
  if (data.prediction_len < 2)
    fail(ErrorCode::invalid_argument, "config: data.prediction_len must be >= 2");
  if (data.fps <= 0) fail(ErrorCode::invalid_argument, "config: data.fps must be > 0");
  if (data.count < 1) fail(ErrorCode::invalid_argument, "config: data.count must be >= 1");
  int k = resolved_overlap();
  if (k < 1 || k >= data.prediction_len)
    fail(ErrorCode::invalid_argument,
         "config: cascade.overlap must satisfy 1 <= K < prediction_len");
  if (cascade.short_samples_to_average < 1)
    fail(ErrorCode::invalid_argument,
         "config: cascade.short_samples_to_average must be >= 1");
  make_schedule(schedule_kind, schedule_steps);  // validates steps
  denoiser.validate();
  train.validate();
}

RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::format, "config: document must be an object");
  for (const std::string& o : overrides) apply_override(doc, o);

  RunConfig cfg;
  auto section = [&doc](const char* name) {
    json v = doc.contains(name) ? doc.at(name) : json::object();
    doc.erase(name);
    return Section(std::move(v), name);
  };

  {
    Section s = section("data");
    if (!s.has("observation_len"))
      fail(ErrorCode::invalid_argument,
           "config: missing required key data.observation_len");
    if (!s.has("prediction_len"))
      fail(ErrorCode::invalid_argument,
           "config: missing required key data.prediction_len");
    s.get_int("observation_len", cfg.data.observation_len);
    s.get_int("prediction_len", cfg.data.prediction_len);
    s.get_double("fps", cfg.data.fps);
    s.get_int("count", cfg.data.count);
    s.get_seed("seed", cfg.data.seed);
    s.finish();
  }
  {
    Section s = section("mask");
    std::string pattern = mask_pattern_name(cfg.mask.pattern);
    s.get_string("pattern", pattern);
    cfg.mask.pattern = mask_pattern_from_name(pattern);
    s.get_double("prob", cfg.mask.prob);
    s.get_int_list("joint_set", cfg.mask.joint_set);
    s.get_string("limb", cfg.mask.limb);
    s.get_double("span_frac", cfg.mask.span_frac);
    s.get_double("frame_frac", cfg.mask.frame_frac);
    s.get_double("noise_std", cfg.mask.noise_std);
    s.get_seed("seed", cfg.mask_seed);
    s.finish();
  }
  {
    Section s = section("schedule");
    std::string kind = schedule_kind_name(cfg.schedule_kind);
    s.get_string("kind", kind);
    cfg.schedule_kind = schedule_kind_from_name(kind);
    s.get_int("steps", cfg.schedule_steps);
    s.finish();
  }
  {
    Section s = section("denoiser");
    s.get_int("joints", cfg.denoiser.joints);
    s.get_int("channels", cfg.denoiser.channels);
    s.get_int("heads", cfg.denoiser.heads);
    s.get_int("residual_layers", cfg.denoiser.residual_layers);
    s.get_int("feedforward_mult", cfg.denoiser.feedforward_mult);
    s.get_int("step_embed_dim", cfg.denoiser.step_embed_dim);
    s.get_bool("temporal_attention", cfg.denoiser.temporal_attention);
    s.get_bool("spatial_attention", cfg.denoiser.spatial_attention);
    s.finish();
  }
  {
    Section s = section("train");
    s.get_int("epochs", cfg.train.epochs);
    s.get_int("batch_size", cfg.train.batch_size);
    s.get_double("learning_rate", cfg.train.learning_rate);
    s.get_double("decay_factor", cfg.train.decay_factor);
    s.get_double_list("decay_milestones", cfg.train.decay_milestones);
    s.get_seed("seed", cfg.train.seed);
    s.get_int("workers", cfg.train.workers);
    s.get_string("refine_predictor", cfg.train.refine_predictor);
    s.finish();
  }
  {
    Section s = section("cascade");
    s.get_int("short_samples_to_average", cfg.cascade.short_samples_to_average);
    s.get_int("overlap", cfg.cascade.overlap);
    s.finish();
  }
  {
    Section s = section("eval");
    s.get_int("n_samples", cfg.eval.n_samples);
    s.get_int_list("horizons_ms", cfg.eval.horizons_ms);
    s.get_seed("seed", cfg.eval.seed);
    s.get_double("mmade_threshold", cfg.eval.mmade_threshold);
    s.get_int("workers", cfg.eval.workers);
    s.finish();
  }
  for (const auto& item : doc.items())
    fail(ErrorCode::invalid_argument, "config: " + item.key() + ": unknown section");

  // The occlusion regime is shared: training corruption and evaluation use
  // the one mask section.
  cfg.train.mask = cfg.mask;
  cfg.eval.mask = cfg.mask;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), overrides);
}

}  // namespace tcd
