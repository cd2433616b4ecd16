// SPDX-License-Identifier: Apache-2.0
#include "tcd/metrics.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "tcd/parallel.hpp"
#include "tcd/rng.hpp"

namespace tcd {

namespace {

void check_same_shape(const Tensor3& a, const Tensor3& b, const char* where) {
  if (!a.same_shape(b))
    fail(ErrorCode::structure, std::string(where) + ": shape mismatch");
}

double joint_distance(const Tensor3& a, const Tensor3& b, int f, int j) {
  double dx = a.at(f, j, 0) - b.at(f, j, 0);
  double dy = a.at(f, j, 1) - b.at(f, j, 1);
  double dz = a.at(f, j, 2) - b.at(f, j, 2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Flattened Euclidean distance between equally shaped tensors.
double flat_distance(const Tensor3& a, const Tensor3& b) {
  double acc = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double multimodal(const std::vector<Tensor3>& samples,
                  const std::vector<Tensor3>& pool_poses,
                  const std::vector<Tensor3>& pool_futures, size_t query,
                  double threshold, double (*metric)(const Tensor3&, const Tensor3&)) {
  if (pool_poses.empty() || pool_poses.size() != pool_futures.size())
    fail(ErrorCode::invalid_argument, "multimodal metric: empty or ragged pool");
  if (query >= pool_poses.size())
    fail(ErrorCode::invalid_argument, "multimodal metric: query outside pool");
  if (samples.empty())
    fail(ErrorCode::invalid_argument, "multimodal metric: no samples");
  if (threshold <= 0)
    fail(ErrorCode::invalid_argument, "multimodal metric: threshold must be > 0");

  double acc = 0;
  int matched = 0;
  for (size_t k = 0; k < pool_poses.size(); ++k) {
    if (k != query && flat_distance(pool_poses[k], pool_poses[query]) > threshold)
      continue;
    double best = std::numeric_limits<double>::infinity();
    for (const Tensor3& s : samples) best = std::min(best, metric(s, pool_futures[k]));
    acc += best;
    ++matched;
  }
  return acc / matched;  // the query always matches itself
}

}  // namespace

double displacement_error(const Tensor3& pred, const Tensor3& truth, int frame) {
  check_same_shape(pred, truth, "displacement_error");
  if (frame < 0 || frame >= pred.frames)
    fail(ErrorCode::invalid_argument, "displacement_error: frame out of range");
  double acc = 0;
  for (int j = 0; j < pred.joints; ++j) acc += joint_distance(pred, truth, frame, j);
  return acc / pred.joints;
}

double ade(const Tensor3& pred, const Tensor3& truth) {
  check_same_shape(pred, truth, "ade");
  double acc = 0;
  for (int f = 0; f < pred.frames; ++f) acc += displacement_error(pred, truth, f);
  return acc / pred.frames;
}

double fde(const Tensor3& pred, const Tensor3& truth) {
  check_same_shape(pred, truth, "fde");
  return displacement_error(pred, truth, pred.frames - 1);
}

double apd(const std::vector<Tensor3>& samples) {
  if (samples.size() < 2)
    fail(ErrorCode::invalid_argument, "apd: needs at least two samples");
  double acc = 0;
  size_t pairs = 0;
  for (size_t i = 0; i < samples.size(); ++i)
    for (size_t j = i + 1; j < samples.size(); ++j) {
      check_same_shape(samples[i], samples[j], "apd");
      acc += flat_distance(samples[i], samples[j]);
      ++pairs;
    }
  return acc / pairs;
}

double mmade(const std::vector<Tensor3>& samples, const std::vector<Tensor3>& pool_poses,
             const std::vector<Tensor3>& pool_futures, size_t query, double threshold) {
  return multimodal(samples, pool_poses, pool_futures, query, threshold, ade);
}

double mmfde(const std::vector<Tensor3>& samples, const std::vector<Tensor3>& pool_poses,
             const std::vector<Tensor3>& pool_futures, size_t query, double threshold) {
  return multimodal(samples, pool_poses, pool_futures, query, threshold, fde);
}

std::optional<double> repair_ade(const Tensor3& repaired, const Tensor3& truth,
                                 const AvailabilityMask& m) {
  check_same_shape(repaired, truth, "repair_ade");
  if (repaired.frames != m.frames || repaired.joints != m.joints)
    fail(ErrorCode::structure, "repair_ade: mask shape mismatch");
  double acc = 0;
  int missing = 0;
  for (int f = 0; f < repaired.frames; ++f)
    for (int j = 0; j < repaired.joints; ++j)
      if (!m.at(f, j, 0)) {
        acc += joint_distance(repaired, truth, f, j);
        ++missing;
      }
  if (missing == 0) return std::nullopt;
  return acc / missing;
}

size_t best_of(const std::vector<Tensor3>& samples, const Tensor3& truth) {
  if (samples.empty()) fail(ErrorCode::invalid_argument, "best_of: no samples");
  size_t best = 0;
  double best_ade = ade(samples[0], truth);
  for (size_t i = 1; i < samples.size(); ++i) {
    double a = ade(samples[i], truth);
    if (a < best_ade) {
      best_ade = a;
      best = i;
    }
  }
  return best;
}

int horizon_frame(int horizon_ms, double fps) {
  return static_cast<int>(std::lround(horizon_ms * fps / 1000.0));
}

void EvalProtocol::validate(int prediction_len, double fps) const {
  if (n_samples < 1) fail(ErrorCode::invalid_argument, "eval: n_samples must be >= 1");
  if (mmade_threshold <= 0)
    fail(ErrorCode::invalid_argument, "eval: mmade_threshold must be > 0");
  if (workers < 1) fail(ErrorCode::invalid_argument, "eval: workers must be >= 1");
  for (int h : horizons_ms) {
    int frame = horizon_frame(h, fps);
    if (frame < 1 || frame > prediction_len)
      fail(ErrorCode::invalid_argument,
           "eval: horizon " + std::to_string(h) + " ms maps to frame " +
               std::to_string(frame) + ", outside the prediction window");
  }
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["pipeline"] = pipeline;
  j["regime"] = regime;
  j["n_sequences"] = n_sequences;
  j["n_samples"] = n_samples;
  j["seed"] = seed;
  j["full_window_ms"] = full_window_ms;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, by_horizon] : metrics) {
    nlohmann::json h = nlohmann::json::object();
    for (const auto& [ms, value] : by_horizon) h[std::to_string(ms)] = value;
    m[name] = h;
  }
  j["metrics"] = m;
  return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("eval report: invalid JSON: ") + e.what());
  }
  EvalReport r;
  try {
    r.pipeline = j.at("pipeline").get<std::string>();
    r.regime = j.at("regime").get<std::string>();
    r.n_sequences = j.at("n_sequences").get<int>();
    r.n_samples = j.at("n_samples").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.full_window_ms = j.at("full_window_ms").get<int>();
    for (const auto& [name, by_horizon] : j.at("metrics").items())
      for (const auto& [ms, value] : by_horizon.items())
        r.metrics[name][std::stoi(ms)] = value.get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::header_mismatch, std::string("eval report: ") + e.what());
  } catch (const std::exception& e) {
    fail(ErrorCode::header_mismatch, std::string("eval report: ") + e.what());
  }
  return r;
}

namespace {

// Per-sequence evaluation scratch, reduced in index order afterwards.
struct SequenceEval {
  double ade_best = 0;
  std::vector<double> de_at_horizon;
  double apd_all = 0;
  std::optional<double> repair;
  std::vector<Tensor3> futures;  // kept for the multimodal pool
  Tensor3 match_pose;            // normalized root-relative last observed pose
};

NormalizationState pipeline_normalization(const Pipeline& p) {
  for (const auto* c :
       {&p.pre, &p.short_block, &p.long_block, &p.direct_block, &p.refine})
    if (c->has_value()) return c->value().normalization;
  return NormalizationState{};  // identity scale for checkpoint-free pipelines
}

}  // namespace

EvalReport evaluate(const Pipeline& pipeline, const std::vector<SequenceRecord>& test_set,
                    const EvalProtocol& protocol) {
  pipeline.validate();
  if (test_set.empty()) fail(ErrorCode::invalid_argument, "evaluate: empty test set");
  const int O = pipeline.observation_len, P = pipeline.prediction_len;
  const double fps = pipeline.fps > 0 ? pipeline.fps : test_set[0].sequence.fps;
  protocol.validate(P, fps);

  const int J = test_set[0].sequence.joints();
  for (const SequenceRecord& rec : test_set) {
    if (rec.sequence.frames() != O + P)
      fail(ErrorCode::structure, "evaluate: every record needs observation + future ("
                                     + std::to_string(O + P) + " frames)");
    if (rec.sequence.joints() != J || rec.sequence.fps != test_set[0].sequence.fps)
      fail(ErrorCode::structure, "evaluate: records disagree on joints or fps");
  }

  NormalizationState norm = pipeline_normalization(pipeline);
  ThreadPool::instance().set_workers(protocol.workers);

  const size_t n = test_set.size();
  std::vector<SequenceEval> evals(n);
  parallel_for(static_cast<int64_t>(n), [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const SequenceRecord& rec = test_set[i];
      Tensor3 obs_clean = rec.sequence.coords.slice_frames(0, O);
      Tensor3 gt_future = rec.sequence.coords.slice_frames(O, O + P);
      uint64_t si = static_cast<uint64_t>(i);

      AvailabilityMask mask = make_mask(protocol.mask, O, O, rec.skeleton,
                                        derive_seed(protocol.seed, {si, 0}));
      Tensor3 obs = obs_clean;
      if (mask.count_zero() > 0 || protocol.mask.noise_std > 0) {
        auto shift = anchor_shift(obs_clean, mask, norm.root_joint);
        Tensor3 corrupted =
            apply_mask(normalize(obs_clean, shift, norm.scale), mask,
                       protocol.mask.noise_std, derive_seed(protocol.seed, {si, 1}));
        obs = denormalize(corrupted, shift, norm.scale);
        obs.snap_f32();
      }

      PredictorResult res = predict(pipeline, obs, mask, protocol.n_samples,
                                    derive_seed(protocol.seed, {si, 2}));
      SequenceEval& ev = evals[i];
      size_t best = best_of(res.futures, gt_future);
      ev.ade_best = ade(res.futures[best], gt_future);
      for (int h : protocol.horizons_ms)
        ev.de_at_horizon.push_back(
            displacement_error(res.futures[best], gt_future, horizon_frame(h, fps) - 1));
      if (protocol.n_samples >= 2) ev.apd_all = apd(res.futures);
      if (mask.count_zero() > 0)
        ev.repair = repair_ade(res.observation, obs_clean, mask);

      ev.futures = std::move(res.futures);
      ev.match_pose = Tensor3(1, J);
      for (int j = 0; j < J; ++j)
        for (int c = 0; c < 3; ++c)
          ev.match_pose.at(0, j, c) =
              (obs_clean.at(O - 1, j, c) - obs_clean.at(O - 1, norm.root_joint, c)) /
              norm.scale;
    }
  });

  // Multimodal metrics need the whole pool, so they run after the fan-out.
  std::vector<Tensor3> pool_poses(n), pool_futures(n);
  for (size_t i = 0; i < n; ++i) {
    pool_poses[i] = evals[i].match_pose;
    pool_futures[i] = test_set[i].sequence.coords.slice_frames(O, O + P);
  }

  EvalReport report;
  report.pipeline = pipeline.spec.text;
  report.regime = mask_pattern_name(protocol.mask.pattern);
  report.n_sequences = static_cast<int>(n);
  report.n_samples = protocol.n_samples;
  report.seed = protocol.seed;
  report.full_window_ms = static_cast<int>(std::lround(P * 1000.0 / fps));

  double ade_sum = 0, apd_sum = 0, mmade_sum = 0, mmfde_sum = 0, repair_sum = 0;
  std::vector<double> de_sums(protocol.horizons_ms.size(), 0.0);
  int repair_count = 0;
  for (size_t i = 0; i < n; ++i) {
    ade_sum += evals[i].ade_best;
    apd_sum += evals[i].apd_all;
    for (size_t h = 0; h < de_sums.size(); ++h) de_sums[h] += evals[i].de_at_horizon[h];
    mmade_sum += mmade(evals[i].futures, pool_poses, pool_futures, i,
                       protocol.mmade_threshold);
    mmfde_sum += mmfde(evals[i].futures, pool_poses, pool_futures, i,
                       protocol.mmade_threshold);
    if (evals[i].repair) {
      repair_sum += *evals[i].repair;
      ++repair_count;
    }
  }
  report.metrics["ade"][report.full_window_ms] = ade_sum / n;
  for (size_t h = 0; h < de_sums.size(); ++h)
    report.metrics["fde"][protocol.horizons_ms[h]] = de_sums[h] / n;
  if (protocol.n_samples >= 2)
    report.metrics["apd"][report.full_window_ms] = apd_sum / n;
  report.metrics["mmade"][report.full_window_ms] = mmade_sum / n;
  report.metrics["mmfde"][report.full_window_ms] = mmfde_sum / n;
  if (repair_count > 0)
    report.metrics["repair_ade"][report.full_window_ms] = repair_sum / repair_count;
  return report;
}

}  // namespace tcd
