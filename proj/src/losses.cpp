// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/losses.hpp"

namespace dmos {

ad::Var mos_loss(ad::Graph& g, ad::Var pred, const Tensor& target) {
  return g.mse_vec(pred, target);
}

ad::Var token_ce_loss(ad::Graph& g, ad::Var logits,
                      const std::vector<std::int32_t>& targets, const FrameMask& mask) {
  return g.ce_masked_time(logits, targets, mask);
}

std::vector<ad::Var> embed_mse_loss(ad::Graph& g, const std::vector<ad::Var>& preds,
                                    const std::vector<Tensor>& targets,
                                    const FrameMask& mask) {
  DMOS_CHECK(preds.size() == targets.size(), ErrorKind::ShapeMismatch,
             "embed_mse_loss: prediction/target layer counts differ");
  std::vector<ad::Var> out;
  out.reserve(preds.size());
  for (std::size_t n = 0; n < preds.size(); ++n)
    out.push_back(g.masked_mse_time(preds[n], targets[n], mask));
  return out;
}

CombinedLoss combined_loss(ad::Graph& g, ad::Var l_mos_scalar,
                           const std::vector<ad::Var>& aux_per_layer, double alpha) {
  DMOS_CHECK(alpha >= 0.0, ErrorKind::BadConfig, "combined_loss: alpha must be >= 0");
  CombinedLoss out;
  out.breakdown.alpha = alpha;
  out.breakdown.l_mos = l_mos_scalar.scalar();
  if (aux_per_layer.empty()) {
    out.total = l_mos_scalar;
    out.breakdown.l_aux_mean = 0.0;
    out.breakdown.total = out.breakdown.l_mos;
    return out;
  }
  for (const auto& a : aux_per_layer)
    out.breakdown.l_ce_per_layer.push_back(a.scalar());
  ad::Var aux_mean = g.mean_of(aux_per_layer);
  out.breakdown.l_aux_mean = aux_mean.scalar();
  out.total = g.add_scaled(l_mos_scalar, aux_mean, alpha);
  out.breakdown.total = out.total.scalar();
  return out;
}

}  // namespace dmos
