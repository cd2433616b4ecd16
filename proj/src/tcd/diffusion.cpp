// SPDX-License-Identifier: Apache-2.0
#include "tcd/diffusion.hpp"

#include <cmath>

#include "tcd/rng.hpp"

namespace tcd {

namespace {

void check_canvas(const Tensor3& x, const AvailabilityMask& m, const char* where) {
  if (x.frames != m.frames || x.joints != m.joints)
    fail(ErrorCode::structure, std::string(where) + ": tensor/mask shape mismatch");
}

void check_step(int t, const NoiseSchedule& schedule, const char* where) {
  if (t < 1 || t > schedule.steps)
    fail(ErrorCode::state, std::string(where) + ": step t=" + std::to_string(t) +
                               " outside 1.." + std::to_string(schedule.steps));
}

}  // namespace

DiffuseResult diffuse(const Tensor3& x0, const AvailabilityMask& m, int t,
                      const NoiseSchedule& schedule, uint64_t seed) {
  check_canvas(x0, m, "diffuse");
  check_step(t, schedule, "diffuse");
  if (!x0.all_finite()) fail(ErrorCode::numeric, "diffuse: non-finite input");
  double ab = schedule.alpha_bar[t];
  double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  DiffuseResult r{Tensor3(x0.frames, x0.joints), Tensor3(x0.frames, x0.joints)};
  Rng rng(seed);
  for (size_t i = 0; i < x0.data.size(); ++i) {
    double z = rng.normal();
    r.eps.data[i] = z;
    r.corrupted.data[i] = m.bits[i] ? x0.data[i] : a * x0.data[i] + b * z;
  }
  return r;
}

Tensor3 predict_x0(const Tensor3& s_t, const Tensor3& eps_hat, const AvailabilityMask& m,
                   int t, const NoiseSchedule& schedule) {
  check_canvas(s_t, m, "predict_x0");
  check_step(t, schedule, "predict_x0");
  if (!s_t.same_shape(eps_hat))
    fail(ErrorCode::structure, "predict_x0: state/noise shape mismatch");
  double ab = schedule.alpha_bar[t];
  if (!(ab > 0.0)) fail(ErrorCode::numeric, "predict_x0: alpha_bar must be positive");
  double inv_a = 1.0 / std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor3 out(s_t.frames, s_t.joints);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] =
        m.bits[i] ? s_t.data[i] : (s_t.data[i] - b * eps_hat.data[i]) * inv_a;
  return out;
}

Tensor3 reverse_step(const Tensor3& s_t, const Tensor3& eps_hat, const Tensor3& observed,
                     const AvailabilityMask& m, int t, const NoiseSchedule& schedule,
                     Rng& rng) {
  check_canvas(s_t, m, "reverse_step");
  check_step(t, schedule, "reverse_step");
  if (!s_t.same_shape(eps_hat) || !s_t.same_shape(observed))
    fail(ErrorCode::structure, "reverse_step: shape mismatch");
  double beta = schedule.beta[t];
  double alpha = schedule.alpha[t];
  double ab = schedule.alpha_bar[t];
  double ab_prev = schedule.alpha_bar[t - 1];
  double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  double noise_coeff = beta / std::sqrt(1.0 - ab);
  // Posterior variance; identically zero at t=1 where ab_prev = 1.
  double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));

  Tensor3 out(s_t.frames, s_t.joints);
  for (size_t i = 0; i < out.data.size(); ++i) {
    if (m.bits[i]) {
      out.data[i] = observed.data[i];
      continue;
    }
    double mu = inv_sqrt_alpha * (s_t.data[i] - noise_coeff * eps_hat.data[i]);
    out.data[i] = t > 1 ? mu + sigma * rng.normal() : mu;
  }
  return out;
}

std::vector<Tensor3> sample_chains(const BatchDenoiser& denoiser, const Tensor3& observed,
                                   const AvailabilityMask& m,
                                   const NoiseSchedule& schedule, int n_chains,
                                   uint64_t seed) {
  check_canvas(observed, m, "sample_chains");
  if (n_chains < 1) fail(ErrorCode::invalid_argument, "sample_chains: n_chains must be >= 1");
  m.validate();
  schedule.validate();

  std::vector<Rng> rngs;
  rngs.reserve(n_chains);
  for (int c = 0; c < n_chains; ++c) rngs.emplace_back(derive_seed(seed, {static_cast<uint64_t>(c)}));

  // Initialize every chain with pure noise at the unavailable entries.
  std::vector<Tensor3> states(n_chains, Tensor3(observed.frames, observed.joints));
  for (int c = 0; c < n_chains; ++c)
    for (size_t i = 0; i < states[c].data.size(); ++i) {
      double z = rngs[c].normal();
      states[c].data[i] = m.bits[i] ? observed.data[i] : z;
    }

  std::vector<Tensor3> eps(n_chains);
  for (int t = schedule.steps; t >= 1; --t) {
    denoiser(states, t, m, eps);
    if (static_cast<int>(eps.size()) != n_chains)
      fail(ErrorCode::structure, "sample_chains: denoiser returned wrong chain count");
    for (int c = 0; c < n_chains; ++c)
      states[c] = reverse_step(states[c], eps[c], observed, m, t, schedule, rngs[c]);
  }
  for (const Tensor3& s : states)
    if (!s.all_finite())
      fail(ErrorCode::numeric, "sample_chains: chain produced non-finite values");
  return states;
}

Tensor3 sample(const Denoiser& denoiser, const Tensor3& observed,
               const AvailabilityMask& m, const NoiseSchedule& schedule, uint64_t seed) {
  BatchDenoiser batched = [&](const std::vector<Tensor3>& s_t, int t,
                              const AvailabilityMask& mask, std::vector<Tensor3>& out) {
    out.resize(s_t.size());
    for (size_t c = 0; c < s_t.size(); ++c) out[c] = denoiser(s_t[c], t, mask);
  };
  return sample_chains(batched, observed, m, schedule, 1, seed)[0];
}

}  // namespace tcd
