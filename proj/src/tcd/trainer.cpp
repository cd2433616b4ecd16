// SPDX-License-Identifier: Apache-2.0
#include "tcd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcd/diffusion.hpp"
#include "tcd/parallel.hpp"
#include "tcd/rng.hpp"

namespace tcd {

double lr_for_epoch(const TrainConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (double m : config.decay_milestones)
    if (epoch >= static_cast<int>(std::floor(m * config.epochs))) lr *= config.decay_factor;
  return lr;
}

namespace {

// Canvas geometry implied by a role: total frames and how many of them are
// available at prediction time (and thus candidates for training occlusion).
void role_geometry(const Checkpoint& ckpt, int& canvas, int& observed) {
  canvas = ckpt.canvas_frames();
  switch (ckpt.role) {
    case BlockRole::short_block: observed = ckpt.observation_len; break;
    case BlockRole::long_block: observed = ckpt.observation_len + ckpt.cascade_overlap; break;
    case BlockRole::direct: observed = ckpt.observation_len; break;
    case BlockRole::pre: observed = ckpt.observation_len; break;
    case BlockRole::refine: observed = ckpt.observation_len; break;
  }
}

void check_corpus(const Checkpoint& ckpt, const std::vector<PoseSequence>& corpus) {
  if (corpus.empty()) fail(ErrorCode::degenerate, "train: empty corpus");
  int need = ckpt.canvas_frames();
  for (const PoseSequence& s : corpus) {
    s.validate();
    if (s.joints() != ckpt.skeleton.joints())
      fail(ErrorCode::structure, "train: sequence joints disagree with skeleton");
    if (s.frames() < need)
      fail(ErrorCode::structure, "train: sequence shorter than the role's canvas");
  }
}

struct AssembledBatch {
  DenoiserInput<float> input;
  MatX<float> target;
};

// Builds one training batch. All randomness is derived from (base_seed,
// epoch, step, position), never from shared mutable state, so assembly is
// reproducible and independent of execution order.
AssembledBatch assemble_batch(const Checkpoint& ckpt,
                              const std::vector<PoseSequence>& corpus,
                              const std::vector<size_t>& picks, uint64_t base_seed,
                              uint64_t epoch, uint64_t step,
                              const NoiseSchedule& schedule) {
  int canvas = 0, observed = 0;
  role_geometry(ckpt, canvas, observed);
  const int B = static_cast<int>(picks.size());
  const int J = ckpt.skeleton.joints();
  const int root = ckpt.skeleton.root();
  const int64_t elem_rows = static_cast<int64_t>(canvas) * J;

  AssembledBatch out;
  out.input.batch = B;
  out.input.frames = canvas;
  out.input.joints = J;
  out.input.steps.resize(B);
  out.input.values.resize(B * elem_rows, 3);
  out.input.mask.resize(B * elem_rows, 1);
  if (ckpt.params.config.refine_mode)
    out.input.guide = MatX<float>::Zero(B * elem_rows, 4);
  out.target.resize(B * elem_rows, 3);

  for (int b = 0; b < B; ++b) {
    const PoseSequence& seq = corpus[picks[b]];
    uint64_t base = derive_seed(base_seed, {epoch, step, static_cast<uint64_t>(b)});

    Tensor3 clean = seq.coords.slice_frames(0, canvas);
    auto shift = anchor_shift(clean, ckpt.observation_len, root);
    Tensor3 norm = normalize(clean, shift, ckpt.normalization.scale);

    // Occlusion over the available window. A repair block needs at least one
    // occluded entry to have any loss, so its mask is redrawn until nonempty.
    AvailabilityMask m = make_mask(ckpt.train.mask, canvas, observed, ckpt.skeleton,
                                   derive_seed(base, {0}));
    if (ckpt.role == BlockRole::pre) {
      for (uint64_t attempt = 1; m.count_zero() == 0; ++attempt) {
        if (attempt > 1000)
          fail(ErrorCode::degenerate, "train: occlusion pattern never removes entries");
        m = make_mask(ckpt.train.mask, canvas, observed, ckpt.skeleton,
                      derive_seed(base, {0, attempt}));
      }
    }

    int t = 1 + static_cast<int>(Rng(derive_seed(base, {1})).integer(schedule.steps));
    out.input.steps[b] = t;
    DiffuseResult d = diffuse(norm, m, t, schedule, derive_seed(base, {2}));

    // Optional sensor-noise training: available entries are perturbed in the
    // network input while the clean tensor still defines the noise target.
    if (ckpt.train.mask.noise_std > 0.0) {
      Rng noise_rng(derive_seed(base, {3}));
      for (size_t i = 0; i < d.corrupted.data.size(); ++i) {
        double z = noise_rng.normal();
        if (m.bits[i]) d.corrupted.data[i] += ckpt.train.mask.noise_std * z;
      }
    }

    int64_t row0 = b * elem_rows;
    for (int64_t r = 0; r < elem_rows; ++r) {
      for (int c = 0; c < 3; ++c) {
        out.input.values(row0 + r, c) = static_cast<float>(d.corrupted.data[r * 3 + c]);
        out.target(row0 + r, c) = static_cast<float>(d.eps.data[r * 3 + c]);
      }
      out.input.mask(row0 + r, 0) = static_cast<float>(m.bits[r * 3]);
    }

    if (ckpt.params.config.refine_mode) {
      // Constant-velocity-zero guide: the future is initialized to the last
      // observed pose (the only predictor supported for training guides).
      if (ckpt.train.refine_predictor != "zero_vel")
        fail(ErrorCode::invalid_argument,
             "train: unsupported refine_predictor " + ckpt.train.refine_predictor);
      int last = ckpt.observation_len - 1;
      for (int f = ckpt.observation_len; f < canvas; ++f)
        for (int j = 0; j < J; ++j) {
          int64_t r = row0 + static_cast<int64_t>(f) * J + j;
          for (int c = 0; c < 3; ++c)
            out.input.guide(r, c) = static_cast<float>(norm.at(last, j, c));
          out.input.guide(r, 3) = 1.0f;
        }
    }
  }
  return out;
}

// Adam with bias correction; tensors are walked in their canonical order.
void adam_update(DenoiserParams& p, const DenoiserParams& g, DenoiserParams& m,
                 DenoiserParams& v, int64_t step, double lr) {
  const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(0.9, static_cast<double>(step))));
  const float c2 =
      static_cast<float>(1.0 / (1.0 - std::pow(0.999, static_cast<double>(step))));
  const float rate = static_cast<float>(lr);
  auto pt = p.named_tensors();
  auto gt = g.named_tensors();
  auto mt = m.named_tensors();
  auto vt = v.named_tensors();
  for (size_t k = 0; k < pt.size(); ++k) {
    auto& P = *pt[k].second;
    const auto& G = *gt[k].second;
    auto& M = *mt[k].second;
    auto& V = *vt[k].second;
    M = b1 * M + (1.0f - b1) * G;
    V.array() = b2 * V.array() + (1.0f - b2) * G.array().square();
    P.array() -= rate * (M.array() * c1) / ((V.array() * c2).sqrt() + eps);
  }
}

}  // namespace

Checkpoint make_block(BlockRole role, const DenoiserConfig& net, ScheduleKind kind,
                      int schedule_steps, const TrainConfig& train,
                      const std::vector<PoseSequence>& corpus,
                      const SkeletonSpec& skeleton, int observation_len,
                      int prediction_len, int cascade_overlap, double fps,
                      uint64_t init_seed) {
  net.validate();
  skeleton.validate();
  train.validate();
  if (net.refine_mode != (role == BlockRole::refine))
    fail(ErrorCode::mode, "make_block: refine_mode must match the refine role");
  if (net.joints != skeleton.joints())
    fail(ErrorCode::structure, "make_block: network joints disagree with skeleton");

  Checkpoint ckpt;
  ckpt.role = role;
  ckpt.params = init_denoiser<float>(net, init_seed);
  ckpt.adam_m = DenoiserParams::make(net);
  ckpt.adam_v = DenoiserParams::make(net);
  ckpt.schedule_kind = kind;
  ckpt.schedule_steps = schedule_steps;
  ckpt.skeleton = skeleton;
  ckpt.observation_len = observation_len;
  ckpt.prediction_len = prediction_len;
  ckpt.cascade_overlap = cascade_overlap;
  ckpt.fps = fps;
  ckpt.train = train;
  ckpt.normalization = compute_normalization(corpus, skeleton, observation_len);
  check_corpus(ckpt, corpus);
  ckpt.validate();
  return ckpt;
}

std::vector<double> train_block(Checkpoint& ckpt, const std::vector<PoseSequence>& corpus,
                                int max_epochs) {
  ckpt.validate();
  check_corpus(ckpt, corpus);
  ThreadPool::instance().set_workers(ckpt.train.workers);
  NoiseSchedule schedule = ckpt.schedule();

  const int N = static_cast<int>(corpus.size());
  const int B = ckpt.train.batch_size;
  const int steps_per_epoch = N / B;
  if (steps_per_epoch < 1)
    fail(ErrorCode::invalid_argument, "train: batch_size exceeds corpus size");

  int end_epoch = ckpt.train.epochs;
  if (max_epochs >= 0) end_epoch = std::min(end_epoch, ckpt.epochs_done + max_epochs);

  Rng shuffle_rng(ckpt.train.seed);
  if (!ckpt.rng_state.empty()) shuffle_rng.load_state(ckpt.rng_state);

  DenoiserParams grads = DenoiserParams::make(ckpt.params.config);
  std::vector<size_t> order(N);
  std::vector<double> ran;

  for (int epoch = ckpt.epochs_done; epoch < end_epoch; ++epoch) {
    double lr = lr_for_epoch(ckpt.train, epoch);
    // Reshuffled from the identity so an epoch depends only on the rng state
    // at its start; a permutation carried across epochs would be invisible to
    // the checkpoint and break resumed runs.
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<size_t> picks(order.begin() + static_cast<int64_t>(step) * B,
                                order.begin() + static_cast<int64_t>(step + 1) * B);
      AssembledBatch batch =
          assemble_batch(ckpt, corpus, picks, ckpt.train.seed,
                         static_cast<uint64_t>(epoch), static_cast<uint64_t>(step),
                         schedule);
      grads.set_zero();
      double loss =
          denoiser_loss_and_grad(ckpt.params, batch.input, batch.target, grads);
      loss_sum += loss;
      adam_update(ckpt.params, grads, ckpt.adam_m, ckpt.adam_v, ++ckpt.adam_step, lr);
    }
    double mean_loss = loss_sum / steps_per_epoch;
    if (!std::isfinite(mean_loss))
      fail(ErrorCode::numeric, "train: non-finite epoch loss");
    ckpt.loss_trace.push_back(mean_loss);
    ran.push_back(mean_loss);
    ckpt.epochs_done = epoch + 1;
    ckpt.rng_state = shuffle_rng.save_state();
  }

  for (const auto& [name, m] : ckpt.params.named_tensors())
    if (!m->allFinite())
      fail(ErrorCode::numeric, "train: parameter tensor " + name + " became non-finite");
  return ran;
}

double heldout_loss(const Checkpoint& ckpt, const std::vector<PoseSequence>& corpus,
                    uint64_t seed) {
  ckpt.validate();
  check_corpus(ckpt, corpus);
  NoiseSchedule schedule = ckpt.schedule();
  std::vector<size_t> picks(corpus.size());
  std::iota(picks.begin(), picks.end(), size_t{0});
  // Tagged with an epoch index no training run reaches, so evaluation draws
  // never collide with training draws.
  AssembledBatch batch = assemble_batch(ckpt, corpus, picks, seed,
                                        0xffffffffull, 0, schedule);
  DenoiserParams scratch = DenoiserParams::make(ckpt.params.config);
  return denoiser_loss_and_grad(ckpt.params, batch.input, batch.target, scratch);
}

}  // namespace tcd
