// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "tcd/metrics.hpp"

using namespace tcd;

namespace {

// Independent re-computations with their own loop shapes, used to cross
// check the library versions on random inputs.
double bf_displacement(const Tensor3& p, const Tensor3& t, int f) {
  double acc = 0;
  for (int j = 0; j < p.joints; ++j)
    acc += std::hypot(p.at(f, j, 0) - t.at(f, j, 0), p.at(f, j, 1) - t.at(f, j, 1),
                      p.at(f, j, 2) - t.at(f, j, 2));
  return acc / p.joints;
}

double bf_ade(const Tensor3& p, const Tensor3& t) {
  double acc = 0;
  for (int f = 0; f < p.frames; ++f) acc += bf_displacement(p, t, f);
  return acc / p.frames;
}

double bf_flat(const Tensor3& a, const Tensor3& b) {
  double acc = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    acc += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return std::sqrt(acc);
}

double bf_multimodal(const std::vector<Tensor3>& samples,
                     const std::vector<Tensor3>& poses,
                     const std::vector<Tensor3>& futures, size_t query, double threshold,
                     bool final_only) {
  double acc = 0;
  int matched = 0;
  for (size_t k = 0; k < poses.size(); ++k) {
    if (k != query && bf_flat(poses[k], poses[query]) > threshold) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const Tensor3& s : samples)
      best = std::min(best, final_only ? bf_displacement(s, futures[k], s.frames - 1)
                                       : bf_ade(s, futures[k]));
    acc += best;
    ++matched;
  }
  return acc / matched;
}

Tensor3 offset_by(const Tensor3& base, double delta) {
  Tensor3 out = base;
  for (double& v : out.data) v += delta;
  return out;
}

}  // namespace

TEST_CASE("displacement error averages per-joint distances at one frame") {
  Tensor3 truth(2, 2);
  Tensor3 pred = truth;
  CHECK(displacement_error(pred, truth, 0) == 0.0);

  pred.at(0, 0, 0) += 3.0;  // joint 0 moves by a 3-4-5 triangle
  pred.at(0, 0, 1) += 4.0;
  CHECK(displacement_error(pred, truth, 0) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(displacement_error(pred, truth, 1) == 0.0);

  pred = truth;
  pred.at(1, 1, 0) += 1.0;  // unit diagonal on one joint
  pred.at(1, 1, 1) += 1.0;
  pred.at(1, 1, 2) += 1.0;
  CHECK(displacement_error(pred, truth, 1) ==
        doctest::Approx(std::sqrt(3.0) / 2).epsilon(1e-15));

  CHECK_ERROR(displacement_error(pred, Tensor3(2, 3), 0), ErrorCode::structure);
  CHECK_ERROR(displacement_error(pred, truth, -1), ErrorCode::invalid_argument);
  CHECK_ERROR(displacement_error(pred, truth, 2), ErrorCode::invalid_argument);
}

TEST_CASE("ade and fde aggregate over frames as mean and endpoint") {
  Tensor3 truth(2, 1);
  Tensor3 pred = truth;
  pred.at(0, 0, 0) += 1.0;
  pred.at(1, 0, 0) += 3.0;
  CHECK(ade(pred, truth) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(fde(pred, truth) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK_ERROR(ade(pred, Tensor3(3, 1)), ErrorCode::structure);
  CHECK_ERROR(fde(pred, Tensor3(3, 1)), ErrorCode::structure);
}

TEST_CASE("apd measures mean pairwise spread of the sample set") {
  Tensor3 base = test::random_tensor(2, 4, 3);
  CHECK(apd({base, base}) == 0.0);
  // 24 coordinates each offset by 1: the flat distance is sqrt(24).
  CHECK(apd({base, offset_by(base, 1.0)}) ==
        doctest::Approx(2.0 * std::sqrt(6.0)).epsilon(1e-12));

  CHECK_ERROR(apd({base}), ErrorCode::invalid_argument);
  CHECK_ERROR(apd({base, Tensor3(2, 3)}), ErrorCode::structure);
}

TEST_CASE("repair error averages over the missing cells only") {
  Tensor3 truth = test::random_tensor(3, 2, 9);
  Tensor3 repaired = truth;
  AvailabilityMask m(3, 2, 3);

  // Nothing missing: the metric does not apply.
  CHECK(!repair_ade(repaired, truth, m).has_value());

  m.set_joint(1, 0, 0);
  repaired.at(1, 0, 1) += 3.0;
  repaired.at(1, 0, 2) += 4.0;
  auto r = repair_ade(repaired, truth, m);
  REQUIRE(r.has_value());
  CHECK(*r == doctest::Approx(5.0).epsilon(1e-15));

  // Errors on an available cell do not count as repair error.
  repaired.at(0, 1, 0) += 100.0;
  CHECK(*repair_ade(repaired, truth, m) == doctest::Approx(5.0).epsilon(1e-15));

  CHECK_ERROR(repair_ade(repaired, Tensor3(3, 3), m), ErrorCode::structure);
  CHECK_ERROR(repair_ade(repaired, truth, AvailabilityMask(2, 2, 2)),
              ErrorCode::structure);
}

TEST_CASE("best-of picks the lowest ade sample, ties to the first") {
  Tensor3 truth = test::random_tensor(2, 2, 4);
  std::vector<Tensor3> samples = {offset_by(truth, 3.0), offset_by(truth, 1.0),
                                  offset_by(truth, 2.0)};
  CHECK(best_of(samples, truth) == 1);
  samples.push_back(offset_by(truth, 1.0));  // equal ade to sample 1
  CHECK(best_of(samples, truth) == 1);
  CHECK_ERROR(best_of({}, truth), ErrorCode::invalid_argument);

  // Adding samples can only improve (or keep) the best achievable ade.
  std::vector<Tensor3> pool;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 6; ++i) {
    pool.push_back(test::random_tensor(2, 2, 50 + i));
    double best = ade(pool[best_of(pool, truth)], truth);
    CHECK(best <= prev);
    prev = best;
  }
}

TEST_CASE("multimodal metrics gate the pool by pose distance") {
  // One-joint poses at controlled distances from the query pose.
  Tensor3 q(1, 1);
  std::vector<Tensor3> poses = {q, offset_by(q, 0.0), offset_by(q, 0.0)};
  poses[1].at(0, 0, 0) = 1.0;   // distance 1 from the query
  poses[2].at(0, 0, 0) = 10.0;  // distance 10
  std::vector<Tensor3> futures = {Tensor3(1, 1), Tensor3(1, 1), Tensor3(1, 1)};
  futures[1].at(0, 0, 0) = 2.0;
  futures[2].at(0, 0, 0) = 100.0;

  std::vector<Tensor3> samples = {Tensor3(1, 1)};  // predicts the query future
  // Threshold 5 admits the query and the nearby pose.
  CHECK(mmade(samples, poses, futures, 0, 5.0) == doctest::Approx(1.0).epsilon(1e-15));
  // A tight threshold leaves the self-match only.
  CHECK(mmade(samples, poses, futures, 0, 0.5) == 0.0);
  // A huge threshold admits everything.
  CHECK(mmade(samples, poses, futures, 0, 1e18) ==
        doctest::Approx(102.0 / 3).epsilon(1e-15));
  // A second sample nailing the nearby future drives its term to zero.
  samples.push_back(futures[1]);
  CHECK(mmade(samples, poses, futures, 0, 5.0) == 0.0);
  // Single-frame futures make the two variants coincide.
  CHECK(mmfde(samples, poses, futures, 0, 5.0) == mmade(samples, poses, futures, 0, 5.0));

  CHECK_ERROR(mmade(samples, {}, {}, 0, 1.0), ErrorCode::invalid_argument);
  CHECK_ERROR(mmade(samples, poses, {futures[0]}, 0, 1.0), ErrorCode::invalid_argument);
  CHECK_ERROR(mmade(samples, poses, futures, 3, 1.0), ErrorCode::invalid_argument);
  CHECK_ERROR(mmade({}, poses, futures, 0, 1.0), ErrorCode::invalid_argument);
  CHECK_ERROR(mmade(samples, poses, futures, 0, 0.0), ErrorCode::invalid_argument);
}

TEST_CASE("metrics agree with independent recomputation on random inputs") {
  for (int it = 0; it < 100; ++it) {
    Tensor3 truth = test::random_tensor(4, 3, 1000 + it);
    Tensor3 pred = test::random_tensor(4, 3, 2000 + it);
    CHECK(ade(pred, truth) == doctest::Approx(bf_ade(pred, truth)).epsilon(1e-9));
    CHECK(fde(pred, truth) ==
          doctest::Approx(bf_displacement(pred, truth, 3)).epsilon(1e-9));
    CHECK(displacement_error(pred, truth, it % 4) ==
          doctest::Approx(bf_displacement(pred, truth, it % 4)).epsilon(1e-9));

    std::vector<Tensor3> samples, poses, futures;
    for (int s = 0; s < 4; ++s) samples.push_back(test::random_tensor(4, 3, 3000 + 7 * it + s));
    for (int k = 0; k < 6; ++k) {
      poses.push_back(test::random_tensor(1, 3, 4000 + 11 * it + k, 0.3));
      futures.push_back(test::random_tensor(4, 3, 5000 + 13 * it + k));
    }
    double acc = 0;
    size_t pairs = 0;
    for (size_t i = 0; i < samples.size(); ++i)
      for (size_t j = i + 1; j < samples.size(); ++j, ++pairs)
        acc += bf_flat(samples[i], samples[j]);
    CHECK(apd(samples) == doctest::Approx(acc / pairs).epsilon(1e-9));

    // Middling threshold so some pool entries match and some do not.
    size_t query = it % 6;
    CHECK(mmade(samples, poses, futures, query, 0.8) ==
          doctest::Approx(bf_multimodal(samples, poses, futures, query, 0.8, false))
              .epsilon(1e-9));
    CHECK(mmfde(samples, poses, futures, query, 0.8) ==
          doctest::Approx(bf_multimodal(samples, poses, futures, query, 0.8, true))
              .epsilon(1e-9));

    AvailabilityMask m(4, 3, 4);
    m.set_joint(it % 4, it % 3, 0);
    m.set_joint(3 - it % 4, 2 - it % 3, 0);
    auto r = repair_ade(pred, truth, m);
    double bacc = 0;
    int cells = 0;
    for (int f = 0; f < 4; ++f)
      for (int j = 0; j < 3; ++j)
        if (!m.at(f, j, 0)) {
          bacc += std::hypot(pred.at(f, j, 0) - truth.at(f, j, 0),
                             pred.at(f, j, 1) - truth.at(f, j, 1),
                             pred.at(f, j, 2) - truth.at(f, j, 2));
          ++cells;
        }
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(bacc / cells).epsilon(1e-9));
  }
}

TEST_CASE("displacement metrics are invariant to joint relabeling") {
  Tensor3 truth = test::random_tensor(5, 6, 21);
  Tensor3 pred = test::random_tensor(5, 6, 22);
  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 gen(77);
  std::shuffle(perm.begin(), perm.end(), gen);

  Tensor3 truth_p(5, 6), pred_p(5, 6);
  for (int f = 0; f < 5; ++f)
    for (int j = 0; j < 6; ++j)
      for (int c = 0; c < 3; ++c) {
        truth_p.at(f, j, c) = truth.at(f, perm[j], c);
        pred_p.at(f, j, c) = pred.at(f, perm[j], c);
      }
  CHECK(ade(pred_p, truth_p) == doctest::Approx(ade(pred, truth)).epsilon(1e-12));
  CHECK(fde(pred_p, truth_p) == doctest::Approx(fde(pred, truth)).epsilon(1e-12));
}

TEST_CASE("horizons convert to 1-based frame indices by rounding") {
  CHECK(horizon_frame(560, 25.0) == 14);
  CHECK(horizon_frame(1000, 25.0) == 25);
  CHECK(horizon_frame(40, 25.0) == 1);
  CHECK(horizon_frame(100, 29.97) == 3);  // 2.997 rounds up
  CHECK(horizon_frame(10, 25.0) == 0);    // below half a frame
}

TEST_CASE("eval protocol validation") {
  EvalProtocol p;
  p.horizons_ms = {80, 160};
  p.validate(4, 25.0);

  EvalProtocol bad = p;
  bad.n_samples = 0;
  CHECK_ERROR(bad.validate(4, 25.0), ErrorCode::invalid_argument);
  bad = p;
  bad.mmade_threshold = 0.0;
  CHECK_ERROR(bad.validate(4, 25.0), ErrorCode::invalid_argument);
  bad = p;
  bad.workers = 0;
  CHECK_ERROR(bad.validate(4, 25.0), ErrorCode::invalid_argument);
  bad = p;
  bad.horizons_ms = {1000};  // frame 25 of a 4-frame window
  CHECK_ERROR(bad.validate(4, 25.0), ErrorCode::invalid_argument);
  bad.horizons_ms = {10};  // rounds to frame 0
  CHECK_ERROR(bad.validate(4, 25.0), ErrorCode::invalid_argument);
}

TEST_CASE("eval reports round-trip through json") {
  EvalReport r;
  r.pipeline = "tcd(s.ckpt,l.ckpt)";
  r.regime = "random_joint";
  r.n_sequences = 12;
  r.n_samples = 5;
  r.seed = 42;
  r.full_window_ms = 200;
  r.metrics["ade"][200] = 1.5;
  r.metrics["fde"][80] = 0.5;
  r.metrics["fde"][200] = 2.25;
  r.metrics["repair_ade"][200] = 0.125;

  EvalReport back = eval_report_from_json(r.to_json());
  CHECK(back.pipeline == r.pipeline);
  CHECK(back.regime == r.regime);
  CHECK(back.n_sequences == r.n_sequences);
  CHECK(back.n_samples == r.n_samples);
  CHECK(back.seed == r.seed);
  CHECK(back.full_window_ms == r.full_window_ms);
  CHECK(back.metrics == r.metrics);
  // Serialization is canonical, so a second trip is byte-identical.
  CHECK(back.to_json() == r.to_json());

  CHECK_ERROR(eval_report_from_json("{"), ErrorCode::format);
  CHECK_ERROR(eval_report_from_json("{}"), ErrorCode::header_mismatch);
  CHECK_ERROR(eval_report_from_json(R"({"pipeline": 3})"), ErrorCode::header_mismatch);
}

namespace {

// Records whose future just freezes the last observed pose; the constant
// baseline predicts them perfectly.
std::vector<SequenceRecord> static_records(int count, int frames) {
  SkeletonSpec skel = SkeletonSpec::humanoid17();
  std::vector<SequenceRecord> set;
  for (int i = 0; i < count; ++i) {
    PoseSequence gait =
        generate_synthetic_motion(skel, 10, 25.0, GaitParams{}, 600 + i);
    Tensor3 pose = gait.coords.slice_frames(i, i + 1);
    Tensor3 tiled(frames, 17);
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < 17; ++j)
        for (int c = 0; c < 3; ++c) tiled.at(f, j, c) = pose.at(0, j, c);
    SequenceRecord rec;
    rec.sequence.coords = tiled;
    rec.sequence.fps = 25.0;
    rec.skeleton = skel;
    rec.observation_len = 6;
    set.push_back(std::move(rec));
  }
  return set;
}

std::vector<SequenceRecord> gait_records(int count, int frames) {
  SkeletonSpec skel = SkeletonSpec::humanoid17();
  std::vector<SequenceRecord> set;
  for (int i = 0; i < count; ++i) {
    SequenceRecord rec;
    rec.sequence = generate_synthetic_motion(skel, frames, 25.0, GaitParams{}, 700 + i);
    rec.skeleton = skel;
    rec.observation_len = 6;
    set.push_back(std::move(rec));
  }
  return set;
}

Pipeline baseline_pipeline(int O, int P) {
  Pipeline p;
  p.spec = parse_pipeline_spec("zero_vel");
  p.observation_len = O;
  p.prediction_len = P;
  return p;
}

}  // namespace

TEST_CASE("evaluating a perfect predictor reports zero error everywhere") {
  Pipeline p = baseline_pipeline(6, 4);
  EvalProtocol proto;
  proto.n_samples = 2;
  proto.horizons_ms = {80, 160};
  proto.seed = 9;

  EvalReport report = evaluate(p, static_records(3, 10), proto);
  CHECK(report.pipeline == "zero_vel");
  CHECK(report.regime == "full");
  CHECK(report.n_sequences == 3);
  CHECK(report.n_samples == 2);
  CHECK(report.full_window_ms == 160);
  CHECK(report.metrics.at("ade").at(160) == 0.0);
  CHECK(report.metrics.at("fde").at(80) == 0.0);
  CHECK(report.metrics.at("fde").at(160) == 0.0);
  CHECK(report.metrics.at("apd").at(160) == 0.0);
  CHECK(report.metrics.at("mmade").at(160) == 0.0);
  CHECK(report.metrics.at("mmfde").at(160) == 0.0);
  // The full regime leaves no gaps, so repair quality is unmeasurable.
  CHECK(report.metrics.count("repair_ade") == 0);
}

TEST_CASE("evaluation is deterministic and worker-count invariant") {
  Pipeline p = baseline_pipeline(6, 4);
  std::vector<SequenceRecord> set = gait_records(4, 10);
  EvalProtocol proto;
  proto.n_samples = 2;
  proto.horizons_ms = {160};
  proto.seed = 5;
  proto.mask.pattern = MaskPattern::random_joint;
  proto.mask.prob = 0.4;
  proto.mask.noise_std = 0.05;

  EvalReport a = evaluate(p, set, proto);
  CHECK(a.regime == "random_joint");
  CHECK(a.metrics.at("ade").at(160) > 0.0);
  // Corrupted cells were never repaired, so the gap error is visible.
  CHECK(a.metrics.at("repair_ade").at(160) > 0.0);

  CHECK(evaluate(p, set, proto).to_json() == a.to_json());
  EvalProtocol wide = proto;
  wide.workers = 3;
  CHECK(evaluate(p, set, wide).to_json() == a.to_json());
  EvalProtocol reseeded = proto;
  reseeded.seed = 6;
  CHECK(evaluate(p, set, reseeded).to_json() != a.to_json());
}

TEST_CASE("evaluation rejects inconsistent inputs") {
  Pipeline p = baseline_pipeline(6, 4);
  EvalProtocol proto;
  CHECK_ERROR(evaluate(p, {}, proto), ErrorCode::invalid_argument);

  std::vector<SequenceRecord> set = gait_records(2, 10);
  std::vector<SequenceRecord> short_rec = gait_records(1, 9);
  CHECK_ERROR(evaluate(p, short_rec, proto), ErrorCode::structure);

  std::vector<SequenceRecord> mixed = set;
  mixed[1].sequence.fps = 30.0;
  CHECK_ERROR(evaluate(p, mixed, proto), ErrorCode::structure);

  EvalProtocol bad = proto;
  bad.n_samples = 0;
  CHECK_ERROR(evaluate(p, set, bad), ErrorCode::invalid_argument);
}
