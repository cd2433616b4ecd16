// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tcd/common.hpp"

namespace tcd {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Architecture of the noise-prediction network. Tokens are (frame, joint)
// pairs; every residual layer runs attention over frames (per joint), then
// over joints (per frame), then a pointwise feedforward, all pre-norm.
// Either attention can be switched off, which removes that mixing direction
// entirely (used for locality probes and ablations).
struct DenoiserConfig {
  int joints = 17;
  int channels = 32;
  int heads = 4;
  int residual_layers = 4;
  int feedforward_mult = 2;
  int step_embed_dim = 128;
  bool temporal_attention = true;
  bool spatial_attention = true;
  bool refine_mode = false;  // adds guide channels (initial prediction + flag)

  // Input per token: 3 noisy coords, 1 availability bit, 3 gated coords,
  // and in refine mode 3 guide coords plus 1 guide-presence bit.
  int input_channels() const { return refine_mode ? 11 : 7; }
  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

// All learnable tensors. Biases and norm parameters are kept as 1 x N
// matrices so that everything routes through one named-tensor list (init,
// Adam, checkpoints, gradient checks all iterate the same way).
template <typename S>
struct DenoiserParamsT {
  using Mat = MatX<S>;

  DenoiserConfig config;

  Mat in_w, in_b;    // input projection: in_ch x C, 1 x C
  Mat joint_embed;   // J x C, learned
  struct Layer {
    Mat step_w, step_b;                    // step embedding projection
    Mat t_ln_g, t_ln_b, t_qkv_w, t_qkv_b;  // temporal attention (if enabled)
    Mat t_out_w, t_out_b;
    Mat s_ln_g, s_ln_b, s_qkv_w, s_qkv_b;  // spatial attention (if enabled)
    Mat s_out_w, s_out_b;
    Mat f_ln_g, f_ln_b, f1_w, f1_b, f2_w, f2_b;  // feedforward
  };
  std::vector<Layer> layers;
  Mat out_ln_g, out_ln_b;  // final norm, grouped with the output head
  Mat out_w, out_b;        // C x 3, 1 x 3

  // Allocates all tensors (zero-filled) for the given architecture.
  static DenoiserParamsT make(const DenoiserConfig& config);

  // Stable, ordered list of (name, tensor). The order defines the
  // checkpoint layout and the initialization draw order.
  std::vector<std::pair<std::string, Mat*>> named_tensors();
  std::vector<std::pair<std::string, const Mat*>> named_tensors() const;

  size_t parameter_count() const;
  void set_zero();
};

using DenoiserParams = DenoiserParamsT<float>;

// Weight init: fan-in-scaled normal draws for projections, zeros for all
// attention/output head weights (so the net starts as the zero function and
// the residual stream is well-scaled), ones/zeros for norms.
template <typename S>
DenoiserParamsT<S> init_denoiser(const DenoiserConfig& config, uint64_t seed);

// One batch of canvases presented to the network, already normalized.
// Token row index is (b * frames + f) * joints + j.
template <typename S>
struct DenoiserInput {
  int batch = 0, frames = 0, joints = 0;
  std::vector<int> steps;  // diffusion step per batch element, >= 1
  MatX<S> values;          // tokens x 3
  MatX<S> mask;            // tokens x 1, availability bits
  MatX<S> guide;           // tokens x 4 in refine mode, else 0 x 0

  int64_t tokens() const { return static_cast<int64_t>(batch) * frames * joints; }
  void validate(const DenoiserConfig& config) const;
};

// Activations recorded by the forward pass for the backward pass.
template <typename S>
struct DenoiserCache {
  struct LayerCache {
    MatX<S> t_hat, s_hat, f_hat;      // layernorm outputs (pre gain/bias)
    ArrX<S> t_inv, s_inv, f_inv;      // layernorm inverse stddevs
    MatX<S> t_qkv, s_qkv;             // attention inputs after projection
    std::vector<S> t_probs, s_probs;  // softmax attention weights
    MatX<S> t_ctx, s_ctx;             // attention outputs before projection
    MatX<S> f_h1;                     // feedforward pre-activation
    MatX<S> f_cdf;                    // gaussian CDF at f_h1 (gelu factor)
  };
  MatX<S> input;  // assembled tokens x in_ch
  MatX<S> x0;     // residual stream entering layer 0
  std::vector<LayerCache> layers;
  MatX<S> out_hat;
  ArrX<S> out_inv;
};

// Predicts the per-entry noise for a batch of canvases. `cache` may be null
// when no backward pass will follow.
template <typename S>
MatX<S> denoiser_forward(const DenoiserParamsT<S>& params, const DenoiserInput<S>& in,
                         DenoiserCache<S>* cache);

// Masked noise-matching loss and its gradient. Per element, the squared
// residual is averaged over unavailable entries only; elements are then
// averaged. Gradients accumulate into `grads` (caller provides zeroed
// tensors). An element with no unavailable entries is an error.
template <typename S>
double denoiser_loss_and_grad(const DenoiserParamsT<S>& params, const DenoiserInput<S>& in,
                              const MatX<S>& eps_target, DenoiserParamsT<S>& grads);

extern template struct DenoiserParamsT<float>;
extern template struct DenoiserParamsT<double>;
extern template DenoiserParamsT<float> init_denoiser<float>(const DenoiserConfig&, uint64_t);
extern template DenoiserParamsT<double> init_denoiser<double>(const DenoiserConfig&, uint64_t);
extern template MatX<float> denoiser_forward<float>(const DenoiserParamsT<float>&,
                                                    const DenoiserInput<float>&,
                                                    DenoiserCache<float>*);
extern template MatX<double> denoiser_forward<double>(const DenoiserParamsT<double>&,
                                                      const DenoiserInput<double>&,
                                                      DenoiserCache<double>*);
extern template double denoiser_loss_and_grad<float>(const DenoiserParamsT<float>&,
                                                     const DenoiserInput<float>&,
                                                     const MatX<float>&,
                                                     DenoiserParamsT<float>&);
extern template double denoiser_loss_and_grad<double>(const DenoiserParamsT<double>&,
                                                      const DenoiserInput<double>&,
                                                      const MatX<double>&,
                                                      DenoiserParamsT<double>&);

}  // namespace tcd
