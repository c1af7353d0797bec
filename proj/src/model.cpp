// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/model.hpp"

#include <cmath>

namespace dmos {

namespace {

Tensor normal_init(Rng& rng, std::vector<std::size_t> shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = stddev * rng.normal();
  return t;
}

Tensor uniform_init(Rng& rng, std::vector<std::size_t> shape, double bound) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

const char* head_mode_name(HeadMode m) {
  switch (m) {
    case HeadMode::token_prediction: return "token_prediction";
    case HeadMode::none: return "none";
    case HeadMode::mse_distillation: return "mse_distillation";
  }
  return "?";
}

HeadMode head_mode_from_string(const std::string& s) {
  if (s == "token_prediction") return HeadMode::token_prediction;
  if (s == "none") return HeadMode::none;
  if (s == "mse_distillation") return HeadMode::mse_distillation;
  fail(ErrorKind::BadConfig, "unknown head_mode: " + s);
}

DistilMosModel::DistilMosModel(const ModelConfig& config, std::uint64_t seed,
                               bool inference_only)
    : config_(config) {
  DMOS_CHECK(config_.n_layers >= 1 && config_.ssl_dim >= 1, ErrorKind::BadConfig,
             "model config: n_layers and ssl_dim must be set");
  DMOS_CHECK(config_.hidden_dim >= 1 && config_.fp_blocks >= 1, ErrorKind::BadConfig,
             "model config: hidden_dim and fp_blocks must be >= 1");
  DMOS_CHECK(config_.conv_kernel % 2 == 1, ErrorKind::BadConfig,
             "model config: conv_kernel must be odd");
  DMOS_CHECK(config_.blstm_layers >= 1, ErrorKind::BadConfig,
             "model config: blstm_layers must be >= 1");

  Rng rng(Rng::derive(seed, 0xd15713));
  const std::size_t N = config_.n_layers;
  const std::size_t D = config_.ssl_dim;
  const std::size_t H = config_.hidden_dim;
  const std::size_t K = config_.conv_kernel;

  auto make_linear = [&](std::size_t in, std::size_t out) {
    Linear l;
    l.w = ad::make_leaf(normal_init(rng, {in, out}, 1.0 / std::sqrt(double(in))), true);
    l.b = ad::make_leaf(Tensor({out}, 0.0), true);
    return l;
  };

  layer_logits_ = ad::make_leaf(Tensor({N}, 0.0), true);
  projector_ = make_linear(D, H);

  for (std::size_t i = 0; i < config_.fp_blocks; ++i) {
    FpBlock blk;
    blk.lin = make_linear(H, H);
    blk.conv_w = ad::make_leaf(
        normal_init(rng, {K, H, H}, 1.0 / std::sqrt(double(K * H))), true);
    blk.conv_b = ad::make_leaf(Tensor({H}, 0.0), true);
    blk.bn_gamma = ad::make_leaf(Tensor({H}, 1.0), true);
    blk.bn_beta = ad::make_leaf(Tensor({H}, 0.0), true);
    blk.bn_state.running_mean = Tensor({H}, 0.0);
    blk.bn_state.running_var = Tensor({H}, 1.0);
    fp_.push_back(std::move(blk));
  }

  cnn_conv_w_ = ad::make_leaf(
      normal_init(rng, {K, H, H}, 1.0 / std::sqrt(double(K * H))), true);
  cnn_conv_b_ = ad::make_leaf(Tensor({H}, 0.0), true);

  const double lstm_bound = 1.0 / std::sqrt(double(H));
  for (std::size_t l = 0; l < config_.blstm_layers; ++l) {
    BlstmLayer layer;
    const std::size_t in_dim = l == 0 ? H : 2 * H;  // stacked layers consume both directions
    for (LstmDir* dir : {&layer.fwd, &layer.bwd}) {
      dir->wx = ad::make_leaf(uniform_init(rng, {in_dim, 4 * H}, lstm_bound), true);
      dir->wh = ad::make_leaf(uniform_init(rng, {H, 4 * H}, lstm_bound), true);
      Tensor b({4 * H}, 0.0);
      for (std::size_t h = 0; h < H; ++h) b.v[H + h] = 1.0;  // forget-gate bias
      dir->b = ad::make_leaf(std::move(b), true);
    }
    blstm_.push_back(std::move(layer));
  }
  blstm_proj_ = make_linear(2 * H, H);
  ln_gamma_ = ad::make_leaf(Tensor({H}, 1.0), true);
  ln_beta_ = ad::make_leaf(Tensor({H}, 0.0), true);
  head_ = make_linear(H, 1);

  if (!inference_only && config_.head_mode != HeadMode::none) {
    const std::size_t out_dim =
        config_.head_mode == HeadMode::token_prediction ? config_.n_clusters : D;
    DMOS_CHECK(out_dim >= 1, ErrorKind::BadConfig, "model config: bad head output dim");
    for (std::size_t n = 0; n < N; ++n) {
      Mlp3 mlp;
      mlp.l1 = make_linear(H, H);
      mlp.l2 = make_linear(H, H);
      mlp.l3 = make_linear(H, out_dim);
      aux_.push_back(std::move(mlp));
    }
  }
}

ad::Var DistilMosModel::layer_weighted_sum(ad::Graph& g,
                                           const std::vector<ad::Var>& layers) {
  DMOS_CHECK(layers.size() == config_.n_layers, ErrorKind::ShapeMismatch,
             "layer_weighted_sum: expected one tensor per backend layer");
  ad::Var w = g.softmax_vec(layer_logits_);
  return g.weighted_layer_sum(layers, w);
}

ad::Var DistilMosModel::feature_processor(ad::Graph& g, ad::Var x, const FrameMask& mask,
                                          bool training, bool update_running_stats) {
  ad::Var h = g.linear(x, projector_.w, projector_.b);
  h = g.apply_time_mask(h, mask);
  for (auto& blk : fp_) {
    h = g.linear(h, blk.lin.w, blk.lin.b);
    h = g.apply_time_mask(h, mask);
    h = g.conv1d_time(h, blk.conv_w, blk.conv_b);
    h = g.apply_time_mask(h, mask);
    h = g.batchnorm_time(h, blk.bn_gamma, blk.bn_beta, blk.bn_state, mask, training,
                         training && update_running_stats);
    h = g.apply_time_mask(h, mask);
    h = g.gelu(h);
  }
  return h;
}

ad::Var DistilMosModel::run_blstm(ad::Graph& g, ad::Var x) {
  const std::size_t B = x.val().dim(0);
  const std::size_t T = x.val().dim(1);
  const std::size_t H = config_.hidden_dim;

  ad::Var input = x;
  ad::Var fwd_seq, bwd_seq;
  for (std::size_t l = 0; l < blstm_.size(); ++l) {
    for (int dir = 0; dir < 2; ++dir) {
      const LstmDir& p = dir == 0 ? blstm_[l].fwd : blstm_[l].bwd;
      ad::Var h = ad::make_constant(Tensor({B, H}, 0.0));
      ad::Var c = ad::make_constant(Tensor({B, H}, 0.0));
      std::vector<ad::Var> steps(T);
      for (std::size_t i = 0; i < T; ++i) {
        const std::size_t t = dir == 0 ? i : T - 1 - i;
        ad::Var xt = g.time_slice(input, t);
        ad::Var z = g.add_bias(g.add(g.matmul(xt, p.wx), g.matmul(h, p.wh)), p.b);
        ad::Var hc = g.lstm_cell(z, c);
        h = g.slice_cols(hc, 0, H);
        c = g.slice_cols(hc, H, H);
        steps[t] = h;
      }
      (dir == 0 ? fwd_seq : bwd_seq) = g.time_stack(steps);
    }
    if (l + 1 < blstm_.size()) input = g.concat_cols(fwd_seq, bwd_seq);
  }
  return g.concat_cols(fwd_seq, bwd_seq);  // [B, T, 2H]
}

ad::Var DistilMosModel::cnn_blstm(ad::Graph& g, ad::Var x, const FrameMask& mask) {
  ad::Var conv_out = g.conv1d_time(x, cnn_conv_w_, cnn_conv_b_);
  conv_out = g.apply_time_mask(conv_out, mask);
  ad::Var both = run_blstm(g, conv_out);
  ad::Var proj = g.gelu(g.linear(both, blstm_proj_.w, blstm_proj_.b));
  ad::Var res = g.add(proj, conv_out);
  return g.layernorm_rows(res, ln_gamma_, ln_beta_);
}

ad::Var DistilMosModel::mos_head(ad::Graph& g, ad::Var x, const FrameMask& mask) {
  ad::Var pooled = g.masked_mean_time(x, mask);     // [B, H]
  return g.linear(pooled, head_.w, head_.b);        // [B, 1], raw regression output
}

ad::Var DistilMosModel::mlp3(ad::Graph& g, ad::Var x, const Mlp3& mlp) {
  ad::Var h = g.gelu(g.linear(x, mlp.l1.w, mlp.l1.b));
  h = g.gelu(g.linear(h, mlp.l2.w, mlp.l2.b));
  return g.linear(h, mlp.l3.w, mlp.l3.b);
}

std::vector<ad::Var> DistilMosModel::token_predictors(ad::Graph& g, ad::Var fp) {
  DMOS_CHECK(config_.head_mode == HeadMode::token_prediction, ErrorKind::WrongHeadMode,
             "token_predictors: model not built for token prediction");
  DMOS_CHECK(!aux_.empty(), ErrorKind::WrongHeadMode,
             "token_predictors: auxiliary heads not constructed");
  std::vector<ad::Var> out;
  out.reserve(aux_.size());
  for (const auto& mlp : aux_) out.push_back(mlp3(g, fp, mlp));
  return out;
}

std::vector<ad::Var> DistilMosModel::embed_predictors(ad::Graph& g, ad::Var fp) {
  DMOS_CHECK(config_.head_mode == HeadMode::mse_distillation, ErrorKind::WrongHeadMode,
             "embed_predictors: model not built for mse distillation");
  DMOS_CHECK(!aux_.empty(), ErrorKind::WrongHeadMode,
             "embed_predictors: auxiliary heads not constructed");
  std::vector<ad::Var> out;
  out.reserve(aux_.size());
  for (const auto& mlp : aux_) out.push_back(mlp3(g, fp, mlp));
  return out;
}

ForwardOutput DistilMosModel::forward(ad::Graph& g, const BatchFeatures& features,
                                      bool training, bool update_running_stats) {
  ForwardOutput out;
  out.frame_mask = features.mask;
  ad::Var x = layer_weighted_sum(g, features.layers);
  out.fp_features = feature_processor(g, x, features.mask, training, update_running_stats);
  if (training) {
    if (config_.head_mode == HeadMode::token_prediction)
      out.token_logits = token_predictors(g, out.fp_features);
    else if (config_.head_mode == HeadMode::mse_distillation)
      out.embed_preds = embed_predictors(g, out.fp_features);
  }
  ad::Var seq = cnn_blstm(g, out.fp_features, features.mask);
  out.mos_pred = mos_head(g, seq, features.mask);
  return out;
}

std::vector<NamedParam> DistilMosModel::parameters() {
  std::vector<NamedParam> out;
  out.push_back({"layer_logits", layer_logits_});
  out.push_back({"projector.w", projector_.w});
  out.push_back({"projector.b", projector_.b});
  for (std::size_t i = 0; i < fp_.size(); ++i) {
    const std::string p = "fp." + std::to_string(i) + ".";
    out.push_back({p + "lin.w", fp_[i].lin.w});
    out.push_back({p + "lin.b", fp_[i].lin.b});
    out.push_back({p + "conv.w", fp_[i].conv_w});
    out.push_back({p + "conv.b", fp_[i].conv_b});
    out.push_back({p + "bn.gamma", fp_[i].bn_gamma});
    out.push_back({p + "bn.beta", fp_[i].bn_beta});
  }
  out.push_back({"cnn.conv.w", cnn_conv_w_});
  out.push_back({"cnn.conv.b", cnn_conv_b_});
  for (std::size_t l = 0; l < blstm_.size(); ++l) {
    const std::string p = "blstm." + std::to_string(l) + ".";
    out.push_back({p + "fwd.wx", blstm_[l].fwd.wx});
    out.push_back({p + "fwd.wh", blstm_[l].fwd.wh});
    out.push_back({p + "fwd.b", blstm_[l].fwd.b});
    out.push_back({p + "bwd.wx", blstm_[l].bwd.wx});
    out.push_back({p + "bwd.wh", blstm_[l].bwd.wh});
    out.push_back({p + "bwd.b", blstm_[l].bwd.b});
  }
  out.push_back({"blstm.proj.w", blstm_proj_.w});
  out.push_back({"blstm.proj.b", blstm_proj_.b});
  out.push_back({"ln.gamma", ln_gamma_});
  out.push_back({"ln.beta", ln_beta_});
  out.push_back({"head.w", head_.w});
  out.push_back({"head.b", head_.b});
  for (std::size_t n = 0; n < aux_.size(); ++n) {
    const std::string p = "aux." + std::to_string(n) + ".";
    out.push_back({p + "l1.w", aux_[n].l1.w});
    out.push_back({p + "l1.b", aux_[n].l1.b});
    out.push_back({p + "l2.w", aux_[n].l2.w});
    out.push_back({p + "l2.b", aux_[n].l2.b});
    out.push_back({p + "l3.w", aux_[n].l3.w});
    out.push_back({p + "l3.b", aux_[n].l3.b});
  }
  return out;
}

std::vector<NamedBuffer> DistilMosModel::buffers() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < fp_.size(); ++i) {
    const std::string p = "fp." + std::to_string(i) + ".bn.";
    out.push_back({p + "running_mean", &fp_[i].bn_state.running_mean});
    out.push_back({p + "running_var", &fp_[i].bn_state.running_var});
  }
  return out;
}

std::size_t DistilMosModel::inference_parameter_count() const {
  std::size_t n = layer_logits_.val().numel();
  n += projector_.w.val().numel() + projector_.b.val().numel();
  for (const auto& blk : fp_)
    n += blk.lin.w.val().numel() + blk.lin.b.val().numel() + blk.conv_w.val().numel() +
         blk.conv_b.val().numel() + blk.bn_gamma.val().numel() + blk.bn_beta.val().numel();
  n += cnn_conv_w_.val().numel() + cnn_conv_b_.val().numel();
  for (const auto& l : blstm_)
    n += l.fwd.wx.val().numel() + l.fwd.wh.val().numel() + l.fwd.b.val().numel() +
         l.bwd.wx.val().numel() + l.bwd.wh.val().numel() + l.bwd.b.val().numel();
  n += blstm_proj_.w.val().numel() + blstm_proj_.b.val().numel();
  n += ln_gamma_.val().numel() + ln_beta_.val().numel();
  n += head_.w.val().numel() + head_.b.val().numel();
  return n;
}

std::size_t DistilMosModel::total_parameter_count() const {
  std::size_t n = inference_parameter_count();
  for (const auto& mlp : aux_)
    n += mlp.l1.w.val().numel() + mlp.l1.b.val().numel() + mlp.l2.w.val().numel() +
         mlp.l2.b.val().numel() + mlp.l3.w.val().numel() + mlp.l3.b.val().numel();
  return n;
}

}  // namespace dmos
