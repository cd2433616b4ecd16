// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "tcd/checkpoint.hpp"
#include "tcd/trainer.hpp"

using namespace tcd;

namespace {

DenoiserConfig small_net(bool refine = false) {
  DenoiserConfig c;
  c.joints = 17;
  c.channels = 8;
  c.heads = 2;
  c.residual_layers = 1;
  c.step_embed_dim = 8;
  c.refine_mode = refine;
  return c;
}

std::vector<PoseSequence> small_corpus(int frames, int count = 3) {
  SkeletonSpec skel = SkeletonSpec::humanoid17();
  std::vector<PoseSequence> corpus;
  for (int i = 0; i < count; ++i)
    corpus.push_back(generate_synthetic_motion(skel, frames, 25.0, GaitParams{}, 900 + i));
  return corpus;
}

Checkpoint sample_checkpoint(BlockRole role = BlockRole::short_block) {
  TrainConfig train;
  train.epochs = 4;
  return make_block(role, small_net(role == BlockRole::refine), ScheduleKind::cosine, 10,
                    train, small_corpus(15), SkeletonSpec::humanoid17(), 10, 5, 2, 25.0,
                    77);
}

}  // namespace

TEST_CASE("block roles map to and from names") {
  for (BlockRole role : {BlockRole::short_block, BlockRole::long_block, BlockRole::direct,
                         BlockRole::pre, BlockRole::refine})
    CHECK(block_role_from_name(block_role_name(role)) == role);
  CHECK(block_role_from_name("short") == BlockRole::short_block);
  CHECK(block_role_from_name("long") == BlockRole::long_block);
  CHECK_ERROR(block_role_from_name("medium"), ErrorCode::invalid_argument);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.validate();
  t.epochs = 0;
  CHECK_ERROR(t.validate(), ErrorCode::invalid_argument);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_ERROR(t.validate(), ErrorCode::invalid_argument);
  t = TrainConfig{};
  t.learning_rate = 0.0;
  CHECK_ERROR(t.validate(), ErrorCode::invalid_argument);
  t = TrainConfig{};
  t.decay_factor = 1.5;
  CHECK_ERROR(t.validate(), ErrorCode::invalid_argument);
  t = TrainConfig{};
  t.decay_milestones = {1.0};
  CHECK_ERROR(t.validate(), ErrorCode::invalid_argument);
  t = TrainConfig{};
  t.workers = 0;
  CHECK_ERROR(t.validate(), ErrorCode::invalid_argument);
}

TEST_CASE("checkpoint validation catches inconsistent geometry") {
  Checkpoint c = sample_checkpoint();
  c.validate();

  Checkpoint bad = c;
  bad.observation_len = 0;
  CHECK_ERROR(bad.validate(), ErrorCode::invalid_argument);

  bad = c;
  bad.cascade_overlap = 0;  // a short block must know its overlap
  CHECK_ERROR(bad.validate(), ErrorCode::invalid_argument);

  bad = c;
  bad.normalization.scale = 0.0;
  CHECK_ERROR(bad.validate(), ErrorCode::invalid_argument);

  bad = c;
  bad.skeleton.joint_names.pop_back();
  bad.skeleton.parent_index.pop_back();
  bad.skeleton.limb_groups.clear();
  CHECK_ERROR(bad.validate(), ErrorCode::structure);

  bad = c;
  bad.role = BlockRole::refine;  // network was not built with guide channels
  CHECK_ERROR(bad.validate(), ErrorCode::mode);
}

TEST_CASE("canvas length follows the role") {
  Checkpoint c = sample_checkpoint(BlockRole::short_block);
  CHECK(c.canvas_frames() == 10 + 2);  // observation + overlap
  CHECK(sample_checkpoint(BlockRole::long_block).canvas_frames() == 10 + 5);
  CHECK(sample_checkpoint(BlockRole::direct).canvas_frames() == 10 + 5);
  CHECK(sample_checkpoint(BlockRole::pre).canvas_frames() == 10);
  CHECK(sample_checkpoint(BlockRole::refine).canvas_frames() == 10 + 5);
}

TEST_CASE("checkpoints round-trip exactly and reserialize byte-identically") {
  test::TempDir dir("ckpt_roundtrip");
  Checkpoint c = sample_checkpoint();
  c.epochs_done = 2;
  c.adam_step = 31;
  c.loss_trace = {0.9, 0.7};
  c.rng_state = Rng(123).save_state();
  // Give the moments some non-zero content so the payload actually matters.
  Rng rng(5);
  for (auto& [name, m] : c.adam_m.named_tensors())
    for (Eigen::Index i = 0; i < m->size(); ++i)
      m->data()[i] = static_cast<float>(rng.normal());

  std::string path = dir.file("block.ckpt");
  save_checkpoint(c, path);
  Checkpoint back = load_checkpoint(path);

  CHECK(back.role == c.role);
  CHECK(back.params.config == c.params.config);
  CHECK(back.schedule_kind == c.schedule_kind);
  CHECK(back.schedule_steps == c.schedule_steps);
  CHECK(back.normalization.root_joint == c.normalization.root_joint);
  CHECK(back.normalization.scale == c.normalization.scale);
  CHECK(back.skeleton.joint_names == c.skeleton.joint_names);
  CHECK(back.skeleton.parent_index == c.skeleton.parent_index);
  CHECK(back.skeleton.limb_groups == c.skeleton.limb_groups);
  CHECK(back.observation_len == c.observation_len);
  CHECK(back.prediction_len == c.prediction_len);
  CHECK(back.cascade_overlap == c.cascade_overlap);
  CHECK(back.fps == c.fps);
  CHECK(back.train.epochs == c.train.epochs);
  CHECK(back.train.seed == c.train.seed);
  CHECK(back.epochs_done == c.epochs_done);
  CHECK(back.adam_step == c.adam_step);
  CHECK(back.rng_state == c.rng_state);
  CHECK(back.loss_trace == c.loss_trace);

  auto want = c.params.named_tensors();
  auto got = back.params.named_tensors();
  REQUIRE(want.size() == got.size());
  for (size_t i = 0; i < want.size(); ++i)
    CHECK((want[i].second->array() == got[i].second->array()).all());
  auto want_m = c.adam_m.named_tensors();
  auto got_m = back.adam_m.named_tensors();
  for (size_t i = 0; i < want_m.size(); ++i)
    CHECK((want_m[i].second->array() == got_m[i].second->array()).all());

  // Saving the loaded checkpoint reproduces the file byte for byte.
  save_checkpoint(back, dir.file("again.ckpt"));
  CHECK(test::slurp(path) == test::slurp(dir.file("again.ckpt")));
}

TEST_CASE("checkpoint reader classifies damaged files") {
  test::TempDir dir("ckpt_damage");
  Checkpoint c = sample_checkpoint();
  std::string path = dir.file("good.ckpt");
  save_checkpoint(c, path);
  const std::string good = test::slurp(path);
  auto damaged = [&](const std::string& bytes) {
    test::spit(dir.file("bad.ckpt"), bytes);
    return dir.file("bad.ckpt");
  };

  SUBCASE("missing file is an io error") {
    CHECK_ERROR(load_checkpoint(dir.file("absent.ckpt")), ErrorCode::io);
  }
  SUBCASE("bad magic is a format error") {
    std::string b = good;
    b[0] = 'X';
    CHECK_ERROR(load_checkpoint(damaged(b)), ErrorCode::format);
  }
  SUBCASE("future container revision is a version error") {
    std::string b = good;
    b[7] = '9';  // TCDCKPT9
    CHECK_ERROR(load_checkpoint(damaged(b)), ErrorCode::version);
  }
  SUBCASE("tiny file is truncation") {
    CHECK_ERROR(load_checkpoint(damaged(good.substr(0, 5))), ErrorCode::truncated);
  }
  SUBCASE("manifest running past the end is truncation") {
    std::string b = good.substr(0, 8);
    b += std::string("\xff\xff\x00\x00", 4);
    b += "{}";
    CHECK_ERROR(load_checkpoint(damaged(b)), ErrorCode::truncated);
  }
  SUBCASE("garbled manifest is a header mismatch") {
    std::string b = good.substr(0, 8);
    std::string garbage = "definitely not json";
    b += std::string(1, static_cast<char>(garbage.size())) + std::string(3, '\0');
    b += garbage;
    CHECK_ERROR(load_checkpoint(damaged(b)), ErrorCode::header_mismatch);
  }
  SUBCASE("manifest missing keys is a header mismatch") {
    std::string b = good.substr(0, 8);
    b += std::string(1, 2) + std::string(3, '\0') + "{}";
    CHECK_ERROR(load_checkpoint(damaged(b)), ErrorCode::header_mismatch);
  }
  SUBCASE("short payload is truncation") {
    CHECK_ERROR(load_checkpoint(damaged(good.substr(0, good.size() - 2))),
                ErrorCode::truncated);
  }
  SUBCASE("non-finite weight payload is corruption") {
    std::string b = good;
    // The float payload is the file tail; poison its last value.
    const char nan_bytes[4] = {0, 0, char(0xc0), char(0x7f)};
    std::memcpy(b.data() + b.size() - 4, nan_bytes, 4);
    CHECK_ERROR(load_checkpoint(damaged(b)), ErrorCode::corrupt);
  }
}
