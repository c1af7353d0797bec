// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmos/checkpoint.hpp"
#include "dmos/data.hpp"
#include "dmos/metrics.hpp"
#include "dmos/model.hpp"

namespace dmos {

struct EvalOptions {
  bool system_level = false;
  std::optional<Split> split = Split::test;  // nullopt = all entries
  std::size_t batch_size = 32;
};

struct EvalResult {
  PredictionSet predictions;
  MetricReport utterance;
  std::optional<MetricReport> system;
};

// Inference-path evaluation (auxiliary heads never run). Zero-shot evaluation
// is the same call on a different corpus.
EvalResult evaluate_model(DistilMosModel& model, SslBackend& backend,
                          const CorpusManifest& manifest, const EvalOptions& opts);

EvalResult evaluate_checkpoint(const std::string& checkpoint_path,
                               const CorpusManifest& manifest, const EvalOptions& opts);

// Single-utterance MOS prediction.
double predict_mos(DistilMosModel& model, SslBackend& backend,
                   const std::vector<float>& samples, std::size_t sample_rate);

void dump_predictions(const PredictionSet& preds, const std::string& path);

}  // namespace dmos
