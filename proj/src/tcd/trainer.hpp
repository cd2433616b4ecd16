// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tcd/checkpoint.hpp"

namespace tcd {

// Learning rate for a 0-based epoch index: the base rate times decay_factor
// for every milestone fraction already reached (epoch >= floor(m * epochs)).
double lr_for_epoch(const TrainConfig& config, int epoch);

// Assembles a fresh, untrained block: initializes the network, computes the
// corpus normalization, and stores the data geometry the block will serve.
// Corpus sequences must all carry at least the canvas length for the role.
Checkpoint make_block(BlockRole role, const DenoiserConfig& net, ScheduleKind kind,
                      int schedule_steps, const TrainConfig& train,
                      const std::vector<PoseSequence>& corpus,
                      const SkeletonSpec& skeleton, int observation_len,
                      int prediction_len, int cascade_overlap, double fps,
                      uint64_t init_seed);

// Runs training epochs [epochs_done, min(train.epochs, epochs_done +
// max_epochs)) and updates the checkpoint in place (weights, Adam moments,
// RNG state, loss trace). Returns the mean loss of each epoch it ran.
// Training state round-trips through save/load, so a resumed run reproduces
// an uninterrupted one exactly.
std::vector<double> train_block(Checkpoint& ckpt, const std::vector<PoseSequence>& corpus,
                                int max_epochs = -1);

// Masked noise-matching loss of the current weights on a held-out batch
// assembled from `corpus` with seed-derived corruption. No side effects.
double heldout_loss(const Checkpoint& ckpt, const std::vector<PoseSequence>& corpus,
                    uint64_t seed);

}  // namespace tcd
