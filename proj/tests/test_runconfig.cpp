// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "tcd/runconfig.hpp"

using namespace tcd;

namespace {

constexpr const char* kMinimal =
    R"({"data": {"observation_len": 10, "prediction_len": 5}})";

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Clears TCD_SEED for the enclosing scope; the variable would otherwise
// leak into every get_seed fallback in later tests.
struct SeedEnvGuard {
  explicit SeedEnvGuard(const char* value) { setenv("TCD_SEED", value, 1); }
  ~SeedEnvGuard() { unsetenv("TCD_SEED"); }
};

}  // namespace

TEST_CASE("a minimal config parses with documented defaults") {
  RunConfig cfg = parse_run_config(kMinimal);
  CHECK(cfg.data.observation_len == 10);
  CHECK(cfg.data.prediction_len == 5);
  CHECK(cfg.data.fps == 25.0);
  CHECK(cfg.data.count == 200);
  CHECK(cfg.data.seed == 1);
  CHECK(cfg.mask.pattern == MaskPattern::full);
  CHECK(cfg.schedule_kind == ScheduleKind::cosine);
  CHECK(cfg.schedule_steps == 50);
  CHECK(cfg.denoiser.joints == 17);
  CHECK(cfg.train.epochs == 16);
  CHECK(cfg.cascade.short_samples_to_average == 5);
  CHECK(cfg.cascade.overlap == 0);
  CHECK(cfg.eval.n_samples == 5);
  CHECK(cfg.eval.mmade_threshold == 0.5);
}

TEST_CASE("every section reads its keys") {
  std::string text = R"({
    "data": {"observation_len": 25, "prediction_len": 100, "fps": 50.0,
             "count": 32, "seed": 9},
    "mask": {"pattern": "structured_limb", "limb": "left_arm", "span_frac": 0.3,
             "noise_std": 0.02, "seed": 8},
    "schedule": {"kind": "quadratic", "steps": 20},
    "denoiser": {"channels": 16, "heads": 2, "residual_layers": 2,
                 "temporal_attention": false},
    "train": {"epochs": 3, "batch_size": 4, "learning_rate": 0.002,
              "decay_milestones": [0.5], "seed": 7, "refine_predictor": "zero_vel"},
    "cascade": {"short_samples_to_average": 3, "overlap": 10},
    "eval": {"n_samples": 2, "horizons_ms": [200, 1000], "seed": 6,
             "mmade_threshold": 0.4, "workers": 2}
  })";
  RunConfig cfg = parse_run_config(text);
  CHECK(cfg.data.fps == 50.0);
  CHECK(cfg.data.count == 32);
  CHECK(cfg.data.seed == 9);
  CHECK(cfg.mask.pattern == MaskPattern::structured_limb);
  CHECK(cfg.mask.limb == "left_arm");
  CHECK(cfg.mask.span_frac == 0.3);
  CHECK(cfg.mask.noise_std == 0.02);
  CHECK(cfg.mask_seed == 8);
  CHECK(cfg.schedule_kind == ScheduleKind::quadratic);
  CHECK(cfg.schedule_steps == 20);
  CHECK(cfg.denoiser.channels == 16);
  CHECK(cfg.denoiser.heads == 2);
  CHECK(!cfg.denoiser.temporal_attention);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.train.batch_size == 4);
  CHECK(cfg.train.learning_rate == 0.002);
  CHECK(cfg.train.decay_milestones == std::vector<double>{0.5});
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.cascade.short_samples_to_average == 3);
  CHECK(cfg.cascade.overlap == 10);
  CHECK(cfg.eval.n_samples == 2);
  CHECK(cfg.eval.horizons_ms == std::vector<int>{200, 1000});
  CHECK(cfg.eval.seed == 6);
  CHECK(cfg.eval.mmade_threshold == 0.4);
  CHECK(cfg.eval.workers == 2);

  // The one mask section configures the trainer's and the evaluator's
  // corruption alike.
  for (const OcclusionSpec* m : {&cfg.train.mask, &cfg.eval.mask}) {
    CHECK(m->pattern == cfg.mask.pattern);
    CHECK(m->limb == cfg.mask.limb);
    CHECK(m->span_frac == cfg.mask.span_frac);
    CHECK(m->noise_std == cfg.mask.noise_std);
  }
}

TEST_CASE("missing and unknown keys are reported by dotted path") {
  std::string msg =
      error_message([] { parse_run_config(R"({"data": {"prediction_len": 5}})"); });
  CHECK(msg.find("data.observation_len") != std::string::npos);
  msg = error_message([] { parse_run_config(R"({"data": {"observation_len": 10}})"); });
  CHECK(msg.find("data.prediction_len") != std::string::npos);

  msg = error_message([] {
    parse_run_config(
        R"({"data": {"observation_len": 10, "prediction_len": 5, "horizon": 3}})");
  });
  CHECK(msg.find("data.horizon") != std::string::npos);
  CHECK(msg.find("unknown key") != std::string::npos);

  msg = error_message([] {
    parse_run_config(
        R"({"data": {"observation_len": 10, "prediction_len": 5}, "extra": {}})");
  });
  CHECK(msg.find("extra") != std::string::npos);
  CHECK(msg.find("unknown section") != std::string::npos);
}

TEST_CASE("values must have the declared types") {
  CHECK_ERROR(
      parse_run_config(R"({"data": {"observation_len": 10.5, "prediction_len": 5}})"),
      ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config(
                  R"({"data": {"observation_len": 10, "prediction_len": 5, "seed": -3}})"),
              ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config(
                  R"({"data": {"observation_len": 10, "prediction_len": 5},
                      "schedule": {"kind": "warped"}})"),
              ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config(
                  R"({"data": {"observation_len": 10, "prediction_len": 5},
                      "eval": {"horizons_ms": [200, "late"]}})"),
              ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config("not json"), ErrorCode::format);
  CHECK_ERROR(parse_run_config("[1, 2]"), ErrorCode::format);
}

TEST_CASE("validation enforces geometry bounds") {
  CHECK_ERROR(
      parse_run_config(R"({"data": {"observation_len": 1, "prediction_len": 5}})"),
      ErrorCode::invalid_argument);
  CHECK_ERROR(
      parse_run_config(R"({"data": {"observation_len": 10, "prediction_len": 5},
                           "cascade": {"overlap": 5}})"),
      ErrorCode::invalid_argument);
  // A 2-frame window rounds the derived overlap down to zero, so it must be
  // given explicitly.
  CHECK_ERROR(
      parse_run_config(R"({"data": {"observation_len": 10, "prediction_len": 2}})"),
      ErrorCode::invalid_argument);
  RunConfig cfg = parse_run_config(R"({"data": {"observation_len": 10,
      "prediction_len": 2}, "cascade": {"overlap": 1}})");
  CHECK(cfg.resolved_overlap() == 1);
}

TEST_CASE("unset overlap derives from the prediction window") {
  RunConfig cfg = parse_run_config(kMinimal);
  CHECK(cfg.resolved_overlap() == 1);  // round(0.2 * 5)
  cfg.data.prediction_len = 100;
  CHECK(cfg.resolved_overlap() == 20);
  cfg.data.prediction_len = 12;
  CHECK(cfg.resolved_overlap() == 2);  // round(2.4)
  cfg.cascade.overlap = 7;
  CHECK(cfg.resolved_overlap() == 7);
}

TEST_CASE("overrides rewrite the document before parsing") {
  RunConfig cfg = parse_run_config(kMinimal, {"data.prediction_len=8"});
  CHECK(cfg.data.prediction_len == 8);

  cfg = parse_run_config(kMinimal, {"eval.horizons_ms=[100,200]"});
  CHECK(cfg.eval.horizons_ms == std::vector<int>{100, 200});

  // Bare words are strings, so shell quoting stays simple.
  cfg = parse_run_config(kMinimal, {"mask.pattern=missing_frames", "mask.frame_frac=0.5"});
  CHECK(cfg.mask.pattern == MaskPattern::missing_frames);
  CHECK(cfg.mask.frame_frac == 0.5);
  CHECK(cfg.eval.mask.pattern == MaskPattern::missing_frames);

  // Later overrides win, like repeated flags.
  cfg = parse_run_config(kMinimal, {"train.epochs=2", "train.epochs=4"});
  CHECK(cfg.train.epochs == 4);

  CHECK_ERROR(parse_run_config(kMinimal, {"noequals"}), ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config(kMinimal, {"=5"}), ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config(kMinimal, {"data.bogus=1"}), ErrorCode::invalid_argument);
  CHECK_ERROR(parse_run_config(kMinimal, {"data..seed=1"}), ErrorCode::invalid_argument);
}

TEST_CASE("config files load from disk") {
  test::TempDir dir("runconfig");
  std::string path = dir.file("run.json");
  test::spit(path, kMinimal);
  RunConfig cfg = load_run_config(path, {"data.count=7"});
  CHECK(cfg.data.observation_len == 10);
  CHECK(cfg.data.count == 7);
  CHECK_ERROR(load_run_config(dir.file("absent.json")), ErrorCode::io);
}

TEST_CASE("seeds left unset fall back to the TCD_SEED environment variable") {
  {
    SeedEnvGuard env("123");
    RunConfig cfg = parse_run_config(kMinimal);
    CHECK(cfg.data.seed == 123);
    CHECK(cfg.mask_seed == 123);
    CHECK(cfg.train.seed == 123);
    CHECK(cfg.eval.seed == 123);

    // An explicit seed beats the environment, key by key.
    cfg = parse_run_config(
        R"({"data": {"observation_len": 10, "prediction_len": 5, "seed": 7}})");
    CHECK(cfg.data.seed == 7);
    CHECK(cfg.train.seed == 123);

    // Overrides count as explicit too.
    cfg = parse_run_config(kMinimal, {"eval.seed=55"});
    CHECK(cfg.eval.seed == 55);
    CHECK(cfg.data.seed == 123);
  }
  {
    SeedEnvGuard env("12x");
    CHECK_ERROR(parse_run_config(kMinimal), ErrorCode::invalid_argument);
  }
  {
    SeedEnvGuard env("");
    CHECK_ERROR(parse_run_config(kMinimal), ErrorCode::invalid_argument);
  }
  // With the variable gone the defaults return.
  RunConfig cfg = parse_run_config(kMinimal);
  CHECK(cfg.data.seed == 1);
}
