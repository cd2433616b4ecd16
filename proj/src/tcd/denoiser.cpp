// SPDX-License-Identifier: Apache-2.0
#include "tcd/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tcd/parallel.hpp"
#include "tcd/rng.hpp"

namespace tcd {

namespace {

constexpr int64_t kTokenGrain = 4096;  // fixed chunk size for token-dim GEMMs
constexpr int64_t kColGrain = 32;      // fixed chunk size for weight-grad GEMMs

// out = A * B, chunked over rows of A at fixed boundaries so the result does
// not depend on the worker count.
template <typename S>
void mm_rows(MatX<S>& out, const MatX<S>& A, const MatX<S>& B) {
  out.resize(A.rows(), B.cols());
  parallel_for_grain(A.rows(), kTokenGrain, [&](int64_t b, int64_t e) {
    out.middleRows(b, e - b).noalias() = A.middleRows(b, e - b) * B;
  });
}

// out += A^T * B, chunked over output columns at fixed boundaries.
template <typename S>
void mm_acc_at_b(MatX<S>& out, const MatX<S>& A, const MatX<S>& B) {
  parallel_for_grain(B.cols(), kColGrain, [&](int64_t b, int64_t e) {
    out.middleCols(b, e - b).noalias() += A.transpose() * B.middleCols(b, e - b);
  });
}

template <typename S>
MatX<S> colsum(const MatX<S>& m) {
  MatX<S> out(1, m.cols());
  out.row(0) = m.colwise().sum();
  return out;
}

template <typename S>
S gauss_cdf(S x) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  if constexpr (std::is_same_v<S, float>)
    return 0.5f * (1.0f + erff(x * static_cast<float>(inv_sqrt2)));
  else
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2));
}

template <typename S>
S gauss_pdf(S x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  if constexpr (std::is_same_v<S, float>)
    return static_cast<float>(inv_sqrt_2pi) * expf(-0.5f * x * x);
  else
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Sinusoidal encoding (sin/cos pairs with geometrically spaced frequencies)
// of a scalar position, written into a row.
template <typename S>
void sinusoid_row(double pos, int dim, S* out) {
  for (int i = 0; i < dim / 2; ++i) {
    double w = std::exp(-std::log(10000.0) * (2.0 * i / dim));
    out[2 * i] = static_cast<S>(std::sin(pos * w));
    out[2 * i + 1] = static_cast<S>(std::cos(pos * w));
  }
}

// y_hat = (x - mean) / sqrt(var + eps) per row; the affine gain/bias is kept
// separate so the backward pass can reuse y_hat.
constexpr double kLnEps = 1e-5;

template <typename S>
void layernorm_forward(const MatX<S>& x, MatX<S>& hat, ArrX<S>& inv) {
  hat.resize(x.rows(), x.cols());
  inv.resize(x.rows());
  parallel_for_grain(x.rows(), kTokenGrain, [&](int64_t b, int64_t e) {
    for (int64_t r = b; r < e; ++r) {
      S mean = x.row(r).mean();
      auto centered = x.row(r).array() - mean;
      S var = centered.square().mean();
      S iv = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
      inv(r) = iv;
      hat.row(r).array() = centered * iv;
    }
  });
}

// Applies gain/bias to a cached layernorm output.
template <typename S>
MatX<S> ln_affine(const MatX<S>& hat, const MatX<S>& g, const MatX<S>& b) {
  MatX<S> out = hat;
  out.array().rowwise() *= g.row(0).array();
  out.rowwise() += b.row(0);
  return out;
}

// Backward through y = hat * g + b. Returns dx; accumulates dg, db.
template <typename S>
MatX<S> layernorm_backward(const MatX<S>& dy, const MatX<S>& hat, const ArrX<S>& inv,
                           const MatX<S>& g, MatX<S>& dg, MatX<S>& db) {
  dg.row(0).array() += (dy.array() * hat.array()).colwise().sum();
  db.row(0) += dy.colwise().sum();
  MatX<S> dx(dy.rows(), dy.cols());
  parallel_for_grain(dy.rows(), kTokenGrain, [&](int64_t b, int64_t e) {
    for (int64_t r = b; r < e; ++r) {
      auto dhat = (dy.row(r).array() * g.row(0).array()).eval();
      S m1 = dhat.mean();
      S m2 = (dhat * hat.row(r).array()).mean();
      dx.row(r).array() = (dhat - m1 - hat.row(r).array() * m2) * inv(r);
    }
  });
  return dx;
}

enum class Axis { temporal, spatial };

int64_t group_count(Axis a, int B, int F, int J) {
  return a == Axis::temporal ? static_cast<int64_t>(B) * J : static_cast<int64_t>(B) * F;
}
int group_len(Axis a, int F, int J) { return a == Axis::temporal ? F : J; }
int64_t group_start(Axis a, int64_t g, int F, int J) {
  return a == Axis::temporal ? (g / J) * static_cast<int64_t>(F) * J + (g % J)
                             : g * static_cast<int64_t>(J);
}
int group_stride(Axis a, int J) { return a == Axis::temporal ? J : 1; }

template <typename S>
using StridedMap = Eigen::Map<MatX<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstStridedMap = Eigen::Map<const MatX<S>, 0, Eigen::OuterStride<>>;

// Multi-head attention along one axis. Rows of `h` with a fixed (batch,
// joint) form a temporal group; rows with fixed (batch, frame) a spatial
// one. Each (group, head) pair is an independent task writing disjoint
// output blocks, so scheduling cannot change the result.
template <typename S>
void attention_forward(Axis axis, const MatX<S>& h, const MatX<S>& qkv_w,
                       const MatX<S>& qkv_b, int heads, int B, int F, int J,
                       MatX<S>& qkv, std::vector<S>& probs, MatX<S>& ctx) {
  const int C = static_cast<int>(h.cols());
  const int dh = C / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  mm_rows(qkv, h, qkv_w);
  qkv.rowwise() += qkv_b.row(0);
  ctx.resize(h.rows(), C);

  const int64_t groups = group_count(axis, B, F, J);
  const int len = group_len(axis, F, J);
  const int stride = group_stride(axis, J);
  probs.assign(static_cast<size_t>(groups) * heads * len * len, S(0));

  ThreadPool::instance().run_tasks(groups * heads, [&](int64_t task) {
    int64_t g = task / heads;
    int hd = static_cast<int>(task % heads);
    int64_t start = group_start(axis, g, F, J);
    ConstStridedMap<S> q_rows(qkv.data() + start * qkv.cols(), len, qkv.cols(),
                              Eigen::OuterStride<>(stride * qkv.cols()));
    StridedMap<S> ctx_rows(ctx.data() + start * C, len, C,
                           Eigen::OuterStride<>(stride * C));
    auto Q = q_rows.block(0, hd * dh, len, dh);
    auto K = q_rows.block(0, C + hd * dh, len, dh);
    auto V = q_rows.block(0, 2 * C + hd * dh, len, dh);
    Eigen::Map<MatX<S>> P(probs.data() + (g * heads + hd) * len * len, len, len);
    P.noalias() = Q * K.transpose();
    // Scalar softmax on purpose: SIMD reductions group lanes by the buffer's
    // runtime alignment, which would make bitwise results vary between
    // otherwise identical runs.
    for (int r = 0; r < len; ++r) {
      S* row = P.data() + static_cast<int64_t>(r) * len;
      S mx = row[0] * scale;
      for (int k = 1; k < len; ++k) mx = std::max(mx, row[k] * scale);
      S total = S(0);
      for (int k = 0; k < len; ++k) {
        row[k] = std::exp(row[k] * scale - mx);
        total += row[k];
      }
      for (int k = 0; k < len; ++k) row[k] /= total;
    }
    ctx_rows.block(0, hd * dh, len, dh).noalias() = P * V;
  });
}

// Backward of attention_forward. Writes d_qkv (every row/head slice is
// covered exactly once) and returns via out-params; weight gradients are
// handled by the caller.
template <typename S>
void attention_backward(Axis axis, const MatX<S>& qkv, const std::vector<S>& probs,
                        const MatX<S>& d_ctx, int heads, int B, int F, int J,
                        MatX<S>& d_qkv) {
  const int C = static_cast<int>(d_ctx.cols());
  const int dh = C / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  d_qkv.resize(qkv.rows(), qkv.cols());

  const int64_t groups = group_count(axis, B, F, J);
  const int len = group_len(axis, F, J);
  const int stride = group_stride(axis, J);

  ThreadPool::instance().run_tasks(groups * heads, [&](int64_t task) {
    int64_t g = task / heads;
    int hd = static_cast<int>(task % heads);
    int64_t start = group_start(axis, g, F, J);
    ConstStridedMap<S> q_rows(qkv.data() + start * qkv.cols(), len, qkv.cols(),
                              Eigen::OuterStride<>(stride * qkv.cols()));
    StridedMap<S> dq_rows(d_qkv.data() + start * d_qkv.cols(), len, d_qkv.cols(),
                          Eigen::OuterStride<>(stride * d_qkv.cols()));
    ConstStridedMap<S> dctx_rows(d_ctx.data() + start * C, len, C,
                                 Eigen::OuterStride<>(stride * C));
    auto Q = q_rows.block(0, hd * dh, len, dh);
    auto K = q_rows.block(0, C + hd * dh, len, dh);
    auto V = q_rows.block(0, 2 * C + hd * dh, len, dh);
    auto dC = dctx_rows.block(0, hd * dh, len, dh);
    Eigen::Map<const MatX<S>> P(probs.data() + (g * heads + hd) * len * len, len, len);

    MatX<S> dP(len, len), dS(len, len);
    dP.noalias() = dC * V.transpose();
    // Scalar reduction for the same alignment-independence reason as the
    // forward softmax.
    for (int r = 0; r < len; ++r) {
      const S* pr = P.data() + static_cast<int64_t>(r) * len;
      const S* dr = dP.data() + static_cast<int64_t>(r) * len;
      S* sr = dS.data() + static_cast<int64_t>(r) * len;
      S dot = S(0);
      for (int k = 0; k < len; ++k) dot += dr[k] * pr[k];
      for (int k = 0; k < len; ++k) sr[k] = pr[k] * (dr[k] - dot) * scale;
    }
    dq_rows.block(0, hd * dh, len, dh).noalias() = dS * K;
    dq_rows.block(0, C + hd * dh, len, dh).noalias() = dS.transpose() * Q;
    dq_rows.block(0, 2 * C + hd * dh, len, dh).noalias() = P.transpose() * dC;
  });
}

}  // namespace

void DenoiserConfig::validate() const {
  if (joints < 2) fail(ErrorCode::invalid_argument, "DenoiserConfig: joints must be >= 2");
  if (channels < 2 || channels % 2 != 0)
    fail(ErrorCode::invalid_argument, "DenoiserConfig: channels must be even and positive");
  if (heads < 1 || channels % heads != 0)
    fail(ErrorCode::invalid_argument, "DenoiserConfig: heads must divide channels");
  if (residual_layers < 1)
    fail(ErrorCode::invalid_argument, "DenoiserConfig: needs at least one layer");
  if (feedforward_mult < 1)
    fail(ErrorCode::invalid_argument, "DenoiserConfig: feedforward_mult must be >= 1");
  if (step_embed_dim < 2 || step_embed_dim % 2 != 0)
    fail(ErrorCode::invalid_argument, "DenoiserConfig: step_embed_dim must be even");
}

template <typename S>
DenoiserParamsT<S> DenoiserParamsT<S>::make(const DenoiserConfig& config) {
  config.validate();
  const int C = config.channels;
  const int mC = C * config.feedforward_mult;
  DenoiserParamsT<S> p;
  p.config = config;
  p.in_w = Mat::Zero(config.input_channels(), C);
  p.in_b = Mat::Zero(1, C);
  p.joint_embed = Mat::Zero(config.joints, C);
  p.layers.resize(config.residual_layers);
  for (auto& l : p.layers) {
    l.step_w = Mat::Zero(config.step_embed_dim, C);
    l.step_b = Mat::Zero(1, C);
    if (config.temporal_attention) {
      l.t_ln_g = Mat::Zero(1, C);
      l.t_ln_b = Mat::Zero(1, C);
      l.t_qkv_w = Mat::Zero(C, 3 * C);
      l.t_qkv_b = Mat::Zero(1, 3 * C);
      l.t_out_w = Mat::Zero(C, C);
      l.t_out_b = Mat::Zero(1, C);
    }
    if (config.spatial_attention) {
      l.s_ln_g = Mat::Zero(1, C);
      l.s_ln_b = Mat::Zero(1, C);
      l.s_qkv_w = Mat::Zero(C, 3 * C);
      l.s_qkv_b = Mat::Zero(1, 3 * C);
      l.s_out_w = Mat::Zero(C, C);
      l.s_out_b = Mat::Zero(1, C);
    }
    l.f_ln_g = Mat::Zero(1, C);
    l.f_ln_b = Mat::Zero(1, C);
    l.f1_w = Mat::Zero(C, mC);
    l.f1_b = Mat::Zero(1, mC);
    l.f2_w = Mat::Zero(mC, C);
    l.f2_b = Mat::Zero(1, C);
  }
  p.out_ln_g = Mat::Zero(1, C);
  p.out_ln_b = Mat::Zero(1, C);
  p.out_w = Mat::Zero(C, 3);
  p.out_b = Mat::Zero(1, 3);
  return p;
}

namespace {
template <typename Params, typename MatPtr>
std::vector<std::pair<std::string, MatPtr>> list_tensors(Params& p) {
  std::vector<std::pair<std::string, MatPtr>> out;
  out.emplace_back("in_w", &p.in_w);
  out.emplace_back("in_b", &p.in_b);
  out.emplace_back("joint_embed", &p.joint_embed);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    std::string pre = "L" + std::to_string(i) + ".";
    out.emplace_back(pre + "step_w", &l.step_w);
    out.emplace_back(pre + "step_b", &l.step_b);
    if (p.config.temporal_attention) {
      out.emplace_back(pre + "t_ln_g", &l.t_ln_g);
      out.emplace_back(pre + "t_ln_b", &l.t_ln_b);
      out.emplace_back(pre + "t_qkv_w", &l.t_qkv_w);
      out.emplace_back(pre + "t_qkv_b", &l.t_qkv_b);
      out.emplace_back(pre + "t_out_w", &l.t_out_w);
      out.emplace_back(pre + "t_out_b", &l.t_out_b);
    }
    if (p.config.spatial_attention) {
      out.emplace_back(pre + "s_ln_g", &l.s_ln_g);
      out.emplace_back(pre + "s_ln_b", &l.s_ln_b);
      out.emplace_back(pre + "s_qkv_w", &l.s_qkv_w);
      out.emplace_back(pre + "s_qkv_b", &l.s_qkv_b);
      out.emplace_back(pre + "s_out_w", &l.s_out_w);
      out.emplace_back(pre + "s_out_b", &l.s_out_b);
    }
    out.emplace_back(pre + "f_ln_g", &l.f_ln_g);
    out.emplace_back(pre + "f_ln_b", &l.f_ln_b);
    out.emplace_back(pre + "f1_w", &l.f1_w);
    out.emplace_back(pre + "f1_b", &l.f1_b);
    out.emplace_back(pre + "f2_w", &l.f2_w);
    out.emplace_back(pre + "f2_b", &l.f2_b);
  }
  out.emplace_back("out_ln_g", &p.out_ln_g);
  out.emplace_back("out_ln_b", &p.out_ln_b);
  out.emplace_back("out_w", &p.out_w);
  out.emplace_back("out_b", &p.out_b);
  return out;
}
}  // namespace

template <typename S>
std::vector<std::pair<std::string, MatX<S>*>> DenoiserParamsT<S>::named_tensors() {
  return list_tensors<DenoiserParamsT<S>, Mat*>(*this);
}

template <typename S>
std::vector<std::pair<std::string, const MatX<S>*>> DenoiserParamsT<S>::named_tensors()
    const {
  return list_tensors<const DenoiserParamsT<S>, const Mat*>(*this);
}

template <typename S>
size_t DenoiserParamsT<S>::parameter_count() const {
  size_t n = 0;
  for (const auto& [name, m] : named_tensors()) n += static_cast<size_t>(m->size());
  return n;
}

template <typename S>
void DenoiserParamsT<S>::set_zero() {
  for (auto& [name, m] : named_tensors()) m->setZero();
}

template <typename S>
DenoiserParamsT<S> init_denoiser(const DenoiserConfig& config, uint64_t seed) {
  DenoiserParamsT<S> p = DenoiserParamsT<S>::make(config);
  Rng rng(seed);
  for (auto& [name, m] : p.named_tensors()) {
    bool is_gain = name.find("ln_g") != std::string::npos;
    bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, "_b") == 0;
    bool is_zero_proj = name.find("out_w") != std::string::npos;
    if (is_gain) {
      m->setOnes();
    } else if (is_bias || is_zero_proj) {
      // Attention/output projections start at zero: the block contributes
      // nothing until training opens it up, and the initial prediction is
      // exactly zero noise.
      m->setZero();
    } else if (name == "joint_embed") {
      for (Eigen::Index i = 0; i < m->size(); ++i)
        m->data()[i] = static_cast<S>(0.1 * rng.normal());
    } else {
      double s = 1.0 / std::sqrt(static_cast<double>(m->rows()));
      for (Eigen::Index i = 0; i < m->size(); ++i)
        m->data()[i] = static_cast<S>(s * rng.normal());
    }
  }
  return p;
}

template <typename S>
void DenoiserInput<S>::validate(const DenoiserConfig& config) const {
  if (batch < 1 || frames < 1) fail(ErrorCode::structure, "DenoiserInput: empty batch");
  if (joints != config.joints)
    fail(ErrorCode::structure, "DenoiserInput: joint count disagrees with config");
  if (static_cast<int>(steps.size()) != batch)
    fail(ErrorCode::structure, "DenoiserInput: steps size != batch");
  for (int t : steps)
    if (t < 1) fail(ErrorCode::invalid_argument, "DenoiserInput: step must be >= 1");
  int64_t tok = tokens();
  if (values.rows() != tok || values.cols() != 3)
    fail(ErrorCode::structure, "DenoiserInput: values must be tokens x 3");
  if (mask.rows() != tok || mask.cols() != 1)
    fail(ErrorCode::structure, "DenoiserInput: mask must be tokens x 1");
  for (int64_t i = 0; i < tok; ++i)
    if (mask(i, 0) != S(0) && mask(i, 0) != S(1))
      fail(ErrorCode::corrupt, "DenoiserInput: mask entries must be 0 or 1");
  if (config.refine_mode) {
    if (guide.rows() != tok || guide.cols() != 4)
      fail(ErrorCode::structure, "DenoiserInput: refine mode needs tokens x 4 guide");
  } else if (guide.size() != 0) {
    fail(ErrorCode::mode, "DenoiserInput: guide provided but refine mode is off");
  }
  if (!values.allFinite() || (guide.size() && !guide.allFinite()))
    fail(ErrorCode::numeric, "DenoiserInput: non-finite input");
}

template <typename S>
MatX<S> denoiser_forward(const DenoiserParamsT<S>& params, const DenoiserInput<S>& in,
                         DenoiserCache<S>* cache) {
  const DenoiserConfig& cfg = params.config;
  in.validate(cfg);
  const int B = in.batch, F = in.frames, J = in.joints;
  const int C = cfg.channels;
  const int64_t tok = in.tokens();
  const int64_t elem_rows = static_cast<int64_t>(F) * J;

  // Assemble the per-token input channels.
  MatX<S> input(tok, cfg.input_channels());
  input.block(0, 0, tok, 3) = in.values;
  input.col(3) = in.mask.col(0);
  for (int c = 0; c < 3; ++c)
    input.col(4 + c) = in.values.col(c).cwiseProduct(in.mask.col(0));
  if (cfg.refine_mode) input.block(0, 7, tok, 4) = in.guide;

  // Project and add the two fixed positional signals.
  MatX<S> x;
  mm_rows(x, input, params.in_w);
  x.rowwise() += params.in_b.row(0);
  MatX<S> frame_enc(F, C);
  for (int f = 0; f < F; ++f) sinusoid_row<S>(f, C, frame_enc.row(f).data());
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f) {
      auto rows = x.middleRows((static_cast<int64_t>(b) * F + f) * J, J);
      rows.rowwise() += frame_enc.row(f);
      rows += params.joint_embed;
    }

  // Per-element step embeddings, projected per layer below.
  MatX<S> step_enc(B, cfg.step_embed_dim);
  for (int b = 0; b < B; ++b)
    sinusoid_row<S>(static_cast<double>(in.steps[b]), cfg.step_embed_dim,
                    step_enc.row(b).data());

  if (cache) {
    cache->input = input;
    cache->x0 = x;
    cache->layers.assign(params.layers.size(), {});
  }

  using LC = typename DenoiserCache<S>::LayerCache;
  for (size_t li = 0; li < params.layers.size(); ++li) {
    const auto& L = params.layers[li];
    LC local;
    LC& lc = cache ? cache->layers[li] : local;

    // Step conditioning enters at the top of every layer.
    MatX<S> step_proj;
    mm_rows(step_proj, step_enc, L.step_w);
    step_proj.rowwise() += L.step_b.row(0);
    for (int b = 0; b < B; ++b)
      x.middleRows(b * elem_rows, elem_rows).rowwise() += step_proj.row(b);

    if (cfg.temporal_attention) {
      layernorm_forward(x, lc.t_hat, lc.t_inv);
      MatX<S> h = ln_affine(lc.t_hat, L.t_ln_g, L.t_ln_b);
      attention_forward(Axis::temporal, h, L.t_qkv_w, L.t_qkv_b, cfg.heads, B, F, J,
                        lc.t_qkv, lc.t_probs, lc.t_ctx);
      MatX<S> proj;
      mm_rows(proj, lc.t_ctx, L.t_out_w);
      proj.rowwise() += L.t_out_b.row(0);
      x += proj;
    }
    if (cfg.spatial_attention) {
      layernorm_forward(x, lc.s_hat, lc.s_inv);
      MatX<S> h = ln_affine(lc.s_hat, L.s_ln_g, L.s_ln_b);
      attention_forward(Axis::spatial, h, L.s_qkv_w, L.s_qkv_b, cfg.heads, B, F, J,
                        lc.s_qkv, lc.s_probs, lc.s_ctx);
      MatX<S> proj;
      mm_rows(proj, lc.s_ctx, L.s_out_w);
      proj.rowwise() += L.s_out_b.row(0);
      x += proj;
    }
    {
      layernorm_forward(x, lc.f_hat, lc.f_inv);
      MatX<S> h = ln_affine(lc.f_hat, L.f_ln_g, L.f_ln_b);
      mm_rows(lc.f_h1, h, L.f1_w);
      lc.f_h1.rowwise() += L.f1_b.row(0);
      lc.f_cdf = lc.f_h1.unaryExpr([](S v) { return gauss_cdf(v); });
      MatX<S> g1 = lc.f_h1.cwiseProduct(lc.f_cdf);  // exact gelu
      MatX<S> h2;
      mm_rows(h2, g1, L.f2_w);
      h2.rowwise() += L.f2_b.row(0);
      x += h2;
    }
  }

  MatX<S> out_hat_local;
  ArrX<S> out_inv_local;
  MatX<S>& out_hat = cache ? cache->out_hat : out_hat_local;
  ArrX<S>& out_inv = cache ? cache->out_inv : out_inv_local;
  layernorm_forward(x, out_hat, out_inv);
  MatX<S> h = ln_affine(out_hat, params.out_ln_g, params.out_ln_b);
  MatX<S> eps;
  mm_rows(eps, h, params.out_w);
  eps.rowwise() += params.out_b.row(0);
  return eps;
}

template <typename S>
double denoiser_loss_and_grad(const DenoiserParamsT<S>& params, const DenoiserInput<S>& in,
                              const MatX<S>& eps_target, DenoiserParamsT<S>& grads) {
  const DenoiserConfig& cfg = params.config;
  DenoiserCache<S> cache;
  MatX<S> eps_hat = denoiser_forward(params, in, &cache);
  if (eps_target.rows() != eps_hat.rows() || eps_target.cols() != 3)
    fail(ErrorCode::structure, "denoiser_loss_and_grad: target must be tokens x 3");

  const int B = in.batch, F = in.frames, J = in.joints;
  const int64_t elem_rows = static_cast<int64_t>(F) * J;

  // Masked squared error, averaged over the unavailable entries of each
  // element and then over elements. Available entries carry no loss and
  // therefore no gradient.
  MatX<S> d_eps = MatX<S>::Zero(eps_hat.rows(), 3);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    int64_t base = b * elem_rows;
    int64_t masked_rows = 0;
    for (int64_t r = 0; r < elem_rows; ++r)
      if (in.mask(base + r, 0) == S(0)) ++masked_rows;
    if (masked_rows == 0)
      fail(ErrorCode::degenerate,
           "denoiser_loss_and_grad: batch element has no unavailable entries");
    double count = static_cast<double>(masked_rows) * 3.0;
    double sum = 0.0;
    for (int64_t r = 0; r < elem_rows; ++r) {
      if (in.mask(base + r, 0) != S(0)) continue;
      for (int c = 0; c < 3; ++c) {
        double diff = static_cast<double>(eps_hat(base + r, c)) -
                      static_cast<double>(eps_target(base + r, c));
        sum += diff * diff;
        d_eps(base + r, c) = static_cast<S>(2.0 * diff / (count * B));
      }
    }
    loss += sum / count;
  }
  loss /= B;

  // Backward through the output head.
  const int C = cfg.channels;
  {
    MatX<S> h = ln_affine(cache.out_hat, params.out_ln_g, params.out_ln_b);
    mm_acc_at_b(grads.out_w, h, d_eps);
    grads.out_b += colsum(d_eps);
  }
  MatX<S> dh;
  mm_rows(dh, d_eps, MatX<S>(params.out_w.transpose()));
  MatX<S> dx = layernorm_backward(dh, cache.out_hat, cache.out_inv, params.out_ln_g,
                                  grads.out_ln_g, grads.out_ln_b);

  MatX<S> step_enc(B, cfg.step_embed_dim);
  for (int b = 0; b < B; ++b)
    sinusoid_row<S>(static_cast<double>(in.steps[b]), cfg.step_embed_dim,
                    step_enc.row(b).data());

  for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
    const auto& L = params.layers[li];
    auto& G = grads.layers[li];
    auto& lc = cache.layers[li];

    {  // feedforward block
      MatX<S> g1 = lc.f_h1.cwiseProduct(lc.f_cdf);
      mm_acc_at_b(G.f2_w, g1, dx);
      G.f2_b += colsum(dx);
      MatX<S> d_g1;
      mm_rows(d_g1, dx, MatX<S>(L.f2_w.transpose()));
      // d gelu(x) = cdf(x) + x * pdf(x)
      MatX<S> d_h1 =
          (d_g1.array() *
           (lc.f_cdf.array() +
            lc.f_h1.array() * lc.f_h1.unaryExpr([](S v) { return gauss_pdf(v); }).array()))
              .matrix();
      MatX<S> h = ln_affine(lc.f_hat, L.f_ln_g, L.f_ln_b);
      mm_acc_at_b(G.f1_w, h, d_h1);
      G.f1_b += colsum(d_h1);
      MatX<S> d_hf;
      mm_rows(d_hf, d_h1, MatX<S>(L.f1_w.transpose()));
      dx += layernorm_backward(d_hf, lc.f_hat, lc.f_inv, L.f_ln_g, G.f_ln_g, G.f_ln_b);
    }

    if (cfg.spatial_attention) {
      mm_acc_at_b(G.s_out_w, lc.s_ctx, dx);
      G.s_out_b += colsum(dx);
      MatX<S> d_ctx;
      mm_rows(d_ctx, dx, MatX<S>(L.s_out_w.transpose()));
      MatX<S> d_qkv;
      attention_backward(Axis::spatial, lc.s_qkv, lc.s_probs, d_ctx, cfg.heads, B, F, J,
                         d_qkv);
      MatX<S> h = ln_affine(lc.s_hat, L.s_ln_g, L.s_ln_b);
      mm_acc_at_b(G.s_qkv_w, h, d_qkv);
      G.s_qkv_b += colsum(d_qkv);
      MatX<S> d_hs;
      mm_rows(d_hs, d_qkv, MatX<S>(L.s_qkv_w.transpose()));
      dx += layernorm_backward(d_hs, lc.s_hat, lc.s_inv, L.s_ln_g, G.s_ln_g, G.s_ln_b);
    }

    if (cfg.temporal_attention) {
      mm_acc_at_b(G.t_out_w, lc.t_ctx, dx);
      G.t_out_b += colsum(dx);
      MatX<S> d_ctx;
      mm_rows(d_ctx, dx, MatX<S>(L.t_out_w.transpose()));
      MatX<S> d_qkv;
      attention_backward(Axis::temporal, lc.t_qkv, lc.t_probs, d_ctx, cfg.heads, B, F, J,
                         d_qkv);
      MatX<S> h = ln_affine(lc.t_hat, L.t_ln_g, L.t_ln_b);
      mm_acc_at_b(G.t_qkv_w, h, d_qkv);
      G.t_qkv_b += colsum(d_qkv);
      MatX<S> d_ht;
      mm_rows(d_ht, d_qkv, MatX<S>(L.t_qkv_w.transpose()));
      dx += layernorm_backward(d_ht, lc.t_hat, lc.t_inv, L.t_ln_g, G.t_ln_g, G.t_ln_b);
    }

    // Step conditioning gradient, one element at a time in batch order.
    for (int b = 0; b < B; ++b) {
      MatX<S> g_b(1, C);
      g_b.row(0) = dx.middleRows(b * elem_rows, elem_rows).colwise().sum();
      G.step_w.noalias() += step_enc.row(b).transpose() * g_b.row(0);
      G.step_b += g_b;
    }
  }

  // Embeddings and input projection.
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      grads.joint_embed += dx.middleRows((static_cast<int64_t>(b) * F + f) * J, J);
  mm_acc_at_b(grads.in_w, cache.input, dx);
  grads.in_b += colsum(dx);

  if (!std::isfinite(loss))
    fail(ErrorCode::numeric, "denoiser_loss_and_grad: non-finite loss");
  return loss;
}

template struct DenoiserParamsT<float>;
template struct DenoiserParamsT<double>;
template DenoiserParamsT<float> init_denoiser<float>(const DenoiserConfig&, uint64_t);
template DenoiserParamsT<double> init_denoiser<double>(const DenoiserConfig&, uint64_t);
template struct DenoiserInput<float>;
template struct DenoiserInput<double>;
template MatX<float> denoiser_forward<float>(const DenoiserParamsT<float>&,
                                             const DenoiserInput<float>&,
                                             DenoiserCache<float>*);
template MatX<double> denoiser_forward<double>(const DenoiserParamsT<double>&,
                                               const DenoiserInput<double>&,
                                               DenoiserCache<double>*);
template double denoiser_loss_and_grad<float>(const DenoiserParamsT<float>&,
                                              const DenoiserInput<float>&,
                                              const MatX<float>&, DenoiserParamsT<float>&);
template double denoiser_loss_and_grad<double>(const DenoiserParamsT<double>&,
                                               const DenoiserInput<double>&,
                                               const MatX<double>&,
                                               DenoiserParamsT<double>&);

}  // namespace tcd
