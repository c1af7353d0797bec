// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/evaluation.hpp"

#include <cstdio>
#include <fstream>

namespace dmos {

EvalResult evaluate_model(DistilMosModel& model, SslBackend& backend,
                          const CorpusManifest& manifest, const EvalOptions& opts) {
  std::vector<std::size_t> indices;
  if (opts.split) {
    indices = manifest.split_indices(*opts.split);
  } else {
    indices.resize(manifest.entries.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  }
  DMOS_CHECK(!indices.empty(), ErrorKind::EmptyBatch,
             "evaluate: no utterances in the requested split");

  EvalResult out;
  const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
  for (std::size_t start = 0; start < indices.size(); start += bs) {
    const std::size_t end = std::min(indices.size(), start + bs);
    std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + end);
    PaddedBatch batch = collate(manifest, chunk);
    ad::Graph g;
    g.grad_enabled = false;
    BatchFeatures feats = backend.encode_batch(g, batch, manifest.sample_rate, false);
    ForwardOutput fo = model.forward(g, feats, /*training=*/false);
    for (std::size_t b = 0; b < batch.batch(); ++b) {
      PredictionRow row;
      row.utterance_id = batch.ids[b];
      row.system_id = batch.system_ids[b];
      row.predicted = fo.mos_pred.val().v[b];
      row.target = batch.mos[b];
      out.predictions.rows.push_back(std::move(row));
    }
  }

  out.utterance = compute_report(out.predictions, MetricLevel::utterance);
  if (opts.system_level)
    out.system = compute_report(out.predictions, MetricLevel::system);
  return out;
}

EvalResult evaluate_checkpoint(const std::string& checkpoint_path,
                               const CorpusManifest& manifest, const EvalOptions& opts) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path, /*inference_only=*/true);
  DMOS_CHECK(ck.meta.sample_rate == manifest.sample_rate, ErrorKind::IncompatibleCheckpoint,
             "checkpoint sample rate does not match the manifest");
  return evaluate_model(*ck.model, *ck.backend, manifest, opts);
}

double predict_mos(DistilMosModel& model, SslBackend& backend,
                   const std::vector<float>& samples, std::size_t sample_rate) {
  DMOS_CHECK(!samples.empty(), ErrorKind::EmptyBatch, "predict: empty waveform");
  Utterance u;
  u.id = "input";
  u.system_id = "input";
  u.mos = 1.0;  // placeholder label, unused
  u.samples = samples;
  PaddedBatch batch = collate({u});
  ad::Graph g;
  g.grad_enabled = false;
  BatchFeatures feats = backend.encode_batch(g, batch, sample_rate, false);
  ForwardOutput fo = model.forward(g, feats, /*training=*/false);
  return fo.mos_pred.val().v[0];
}

void dump_predictions(const PredictionSet& preds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write predictions: " + path);
  out << "utterance_id|system_id|predicted|target\n";
  char buf[64];
  for (const auto& r : preds.rows) {
    std::snprintf(buf, sizeof(buf), "%.6f|%.6f", r.predicted, r.target);
    out << r.utterance_id << '|' << r.system_id << '|' << buf << "\n";
  }
}

}  // namespace dmos
