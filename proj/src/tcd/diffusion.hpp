// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tcd/rng.hpp"
#include "tcd/schedule.hpp"
#include "tcd/sequence.hpp"

namespace tcd {

// Forward corruption to step t in one jump: available entries keep their
// clean value, unavailable ones get sqrt(abar_t) x + sqrt(1 - abar_t) eps.
// The drawn noise is returned alongside (it is the training target).
struct DiffuseResult {
  Tensor3 corrupted;
  Tensor3 eps;
};
DiffuseResult diffuse(const Tensor3& x0, const AvailabilityMask& m, int t,
                      const NoiseSchedule& schedule, uint64_t seed);

// Inverts the jump formula given a noise estimate. Only meaningful where
// the mask is 0; available entries pass through unchanged.
Tensor3 predict_x0(const Tensor3& s_t, const Tensor3& eps_hat, const AvailabilityMask& m,
                   int t, const NoiseSchedule& schedule);

// Noise prediction supplied by the caller: the trained network, or an
// analytic stand-in in tests. Evaluates a whole lockstep batch of chains.
using BatchDenoiser = std::function<void(const std::vector<Tensor3>& s_t, int t,
                                         const AvailabilityMask& m,
                                         std::vector<Tensor3>& eps_out)>;
using Denoiser =
    std::function<Tensor3(const Tensor3& s_t, int t, const AvailabilityMask& m)>;

// One reverse transition s_t -> s_{t-1}: posterior mean from the noise
// estimate, plus sigma_t z (z = 0 at t = 1), then re-imposing the observed
// entries. Exposed for tests; sample_chains drives it.
Tensor3 reverse_step(const Tensor3& s_t, const Tensor3& eps_hat, const Tensor3& observed,
                     const AvailabilityMask& m, int t, const NoiseSchedule& schedule,
                     Rng& rng);

// Runs n_chains independent reverse chains over the canvas. Chain c uses the
// RNG stream derive_seed(seed, {c}), so a chain's output is identical whether
// it runs alone or in a batch. Observed entries of every returned tensor are
// bit-equal to `observed`.
std::vector<Tensor3> sample_chains(const BatchDenoiser& denoiser, const Tensor3& observed,
                                   const AvailabilityMask& m,
                                   const NoiseSchedule& schedule, int n_chains,
                                   uint64_t seed);

// Single chain with a per-canvas denoiser.
Tensor3 sample(const Denoiser& denoiser, const Tensor3& observed,
               const AvailabilityMask& m, const NoiseSchedule& schedule, uint64_t seed);

}  // namespace tcd
