// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmos/checkpoint.hpp"
#include "dmos/data.hpp"
#include "dmos/model.hpp"
#include "dmos/tensor.hpp"

namespace dmos {

struct CcaCurve {
  std::string model_tag;       // distilmos / mse_distillation / w/o token prediction /
                               // ssl-mos-style / random-init
  std::vector<double> values;  // one per SSL layer, each in [0, 1]
};

enum class CcaSummary { mean, top1 };

struct CcaOptions {
  double ridge_scale = 1e-6;  // ridge = scale * trace(cov)/d per self-covariance block
  CcaSummary summary = CcaSummary::mean;
};

// Masked temporal mean of the model's Feature Processor output, one row per
// utterance.
Tensor pooled_model_reps(DistilMosModel& model, SslBackend& backend,
                         const CorpusManifest& manifest,
                         const std::vector<std::size_t>& indices,
                         std::size_t batch_size = 16);

// Masked temporal mean of one backend layer (1-based), one row per utterance.
Tensor pooled_backend_layer(SslBackend& backend, const CorpusManifest& manifest,
                            const std::vector<std::size_t>& indices, std::size_t layer);

// Mean (or top-1) canonical correlation between X [U x d1] and Y [U x d2],
// computed from centered covariance blocks with ridge-regularized whitening.
// Symmetric in its arguments; result in [0, 1].
double cca_similarity(const Tensor& X, const Tensor& Y, const CcaOptions& opts = {});

struct CcaAnalyzeRequest {
  std::vector<std::string> checkpoint_paths;
  const CorpusManifest* manifest = nullptr;
  std::optional<Split> split = Split::test;
  std::uint64_t random_init_seed = 123;
  bool include_random_init = true;
  bool include_ssl_mos_style = true;
  CcaOptions options;
};

// One curve per checkpoint (tagged by its head mode), plus a random-init
// curve and an ssl-mos-style curve (fine-tuned encoder's final layer). The
// reference representations come from a pristine backend rebuilt from the
// checkpoint's spec and seed.
std::vector<CcaCurve> analyze_cca(const CcaAnalyzeRequest& request);

std::string cca_tag_for(HeadMode mode);

}  // namespace dmos
