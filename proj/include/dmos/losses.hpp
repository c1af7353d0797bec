// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dmos/autodiff.hpp"

namespace dmos {

struct LossBreakdown {
  double l_mos = 0.0;
  std::vector<double> l_ce_per_layer;  // empty when no auxiliary heads ran
  double l_aux_mean = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

struct CombinedLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

// MOS regression loss: squared error per utterance, mean over the batch.
ad::Var mos_loss(ad::Graph& g, ad::Var pred, const Tensor& target);

// Per-layer token cross entropy over unmasked frames (mean per utterance,
// mean over the batch).
ad::Var token_ce_loss(ad::Graph& g, ad::Var logits,
                      const std::vector<std::int32_t>& targets, const FrameMask& mask);

// MSE-distillation ablation: per-layer mean squared error over unmasked
// frames and channels.
std::vector<ad::Var> embed_mse_loss(ad::Graph& g, const std::vector<ad::Var>& preds,
                                    const std::vector<Tensor>& targets,
                                    const FrameMask& mask);

// total = l_mos + alpha * mean(aux). With no auxiliary losses the total IS
// l_mos (same node), so the decoupled ablation is exact by construction.
CombinedLoss combined_loss(ad::Graph& g, ad::Var l_mos_scalar,
                           const std::vector<ad::Var>& aux_per_layer, double alpha);

}  // namespace dmos
