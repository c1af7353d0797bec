// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmos/autodiff.hpp"
#include "dmos/ssl_backend.hpp"

namespace dmos {

enum class HeadMode { token_prediction, none, mse_distillation };

const char* head_mode_name(HeadMode m);
HeadMode head_mode_from_string(const std::string& s);  // throws BadConfig

struct ModelConfig {
  std::size_t n_layers = 0;    // N, from the backend
  std::size_t ssl_dim = 0;     // D, from the backend
  std::size_t hidden_dim = 256;
  std::size_t fp_blocks = 3;
  std::size_t conv_kernel = 3;
  std::size_t blstm_layers = 1;
  std::size_t n_clusters = 200;  // k, must match the codebook file
  HeadMode head_mode = HeadMode::token_prediction;
};

struct ForwardOutput {
  ad::Var mos_pred;                  // [B]
  ad::Var fp_features;               // [B, T, H]
  std::vector<ad::Var> token_logits; // N x [B, T, k], token_prediction training only
  std::vector<ad::Var> embed_preds;  // N x [B, T, D], mse_distillation training only
  FrameMask frame_mask;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

// Layer-weighted sum -> linear projector -> Feature Processor -> CNN-BLSTM ->
// mean-pooled MOS head, with N parallel auxiliary predictors branching from
// the Feature Processor output during training. Constructing with
// inference_only never allocates the auxiliary heads.
class DistilMosModel {
public:
  DistilMosModel(const ModelConfig& config, std::uint64_t seed,
                 bool inference_only = false);

  const ModelConfig& config() const { return config_; }
  bool has_aux_heads() const { return !aux_.empty(); }

  // stage ops
  ad::Var layer_weighted_sum(ad::Graph& g, const std::vector<ad::Var>& layers);
  ad::Var feature_processor(ad::Graph& g, ad::Var x, const FrameMask& mask,
                            bool training, bool update_running_stats = true);
  ad::Var cnn_blstm(ad::Graph& g, ad::Var x, const FrameMask& mask);
  ad::Var mos_head(ad::Graph& g, ad::Var x, const FrameMask& mask);
  std::vector<ad::Var> token_predictors(ad::Graph& g, ad::Var fp);
  std::vector<ad::Var> embed_predictors(ad::Graph& g, ad::Var fp);

  // full pipeline; auxiliary predictors run only when training
  ForwardOutput forward(ad::Graph& g, const BatchFeatures& features, bool training,
                        bool update_running_stats = true);

  std::vector<NamedParam> parameters();            // trainable tensors
  std::vector<NamedBuffer> buffers();              // batch-norm running stats
  std::size_t inference_parameter_count() const;   // aux heads excluded
  std::size_t total_parameter_count() const;

  ad::Var layer_logits() { return layer_logits_; }

  // parameter groups (public for tests and serialization)
  struct Linear {
    ad::Var w, b;
  };
  struct FpBlock {
    Linear lin;
    ad::Var conv_w, conv_b;
    ad::Var bn_gamma, bn_beta;
    ad::BatchNormState bn_state;
  };
  struct LstmDir {
    ad::Var wx, wh, b;
  };
  struct BlstmLayer {
    LstmDir fwd, bwd;
  };
  struct Mlp3 {
    Linear l1, l2, l3;
  };

  ad::Var layer_logits_;
  Linear projector_;
  std::vector<FpBlock> fp_;
  ad::Var cnn_conv_w_, cnn_conv_b_;
  std::vector<BlstmLayer> blstm_;
  Linear blstm_proj_;
  ad::Var ln_gamma_, ln_beta_;
  Linear head_;
  std::vector<Mlp3> aux_;  // token or embedding predictors, per layer

private:
  ad::Var run_blstm(ad::Graph& g, ad::Var x);
  ad::Var mlp3(ad::Graph& g, ad::Var x, const Mlp3& mlp);

  ModelConfig config_;
};

}  // namespace dmos
