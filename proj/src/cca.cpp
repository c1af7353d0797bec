// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/cca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

namespace dmos {

namespace {

using EMat = Eigen::MatrixXd;

EMat to_eigen(const Tensor& t) {
  EMat m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(long(r), long(c)) = t(r, c);
  return m;
}

EMat centered(const EMat& x) {
  return x.rowwise() - x.colwise().mean();
}

// Symmetric inverse square root. Eigenvalues are floored at
// ridge_scale * trace / d: healthy directions whiten exactly while
// near-degenerate ones are damped rather than amplified.
EMat inv_sqrt(const EMat& cov, double ridge_scale) {
  const long d = cov.rows();
  const double floor = ridge_scale * cov.trace() / double(d);
  DMOS_CHECK(std::isfinite(floor) && floor > 0.0, ErrorKind::RankDeficient,
             "cca: degenerate covariance block");
  Eigen::SelfAdjointEigenSolver<EMat> es(cov);
  DMOS_CHECK(es.info() == Eigen::Success, ErrorKind::RankDeficient,
             "cca: eigendecomposition failed");
  Eigen::VectorXd inv(d);
  for (long i = 0; i < d; ++i)
    inv(i) = 1.0 / std::sqrt(std::max(es.eigenvalues()(i), floor));
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Tensor pooled_model_reps(DistilMosModel& model, SslBackend& backend,
                         const CorpusManifest& manifest,
                         const std::vector<std::size_t>& indices,
                         std::size_t batch_size) {
  DMOS_CHECK(!indices.empty(), ErrorKind::EmptyBatch, "pooled_model_reps: no utterances");
  const std::size_t H = model.config().hidden_dim;
  Tensor out({indices.size(), H});
  std::size_t row = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + end);
    PaddedBatch batch = collate(manifest, chunk);
    ad::Graph g;
    g.grad_enabled = false;
    BatchFeatures feats = backend.encode_batch(g, batch, manifest.sample_rate, false);
    ad::Var fp = model.feature_processor(
        g, model.layer_weighted_sum(g, feats.layers), feats.mask, /*training=*/false);
    ad::Var pooled = g.masked_mean_time(fp, feats.mask);
    for (std::size_t b = 0; b < chunk.size(); ++b, ++row)
      for (std::size_t c = 0; c < H; ++c) out(row, c) = pooled.val()(b, c);
  }
  return out;
}

Tensor pooled_backend_layer(SslBackend& backend, const CorpusManifest& manifest,
                            const std::vector<std::size_t>& indices, std::size_t layer) {
  DMOS_CHECK(!indices.empty(), ErrorKind::EmptyBatch, "pooled_backend_layer: no utterances");
  DMOS_CHECK(layer >= 1 && layer <= backend.spec().n_layers, ErrorKind::DimMismatch,
             "pooled_backend_layer: layer out of range");
  const std::size_t D = backend.spec().dim;
  Tensor out({indices.size(), D});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    PaddedBatch batch = collate(manifest, {indices[i]});
    LayerStack stack = backend.encode(batch, manifest.sample_rate)[0];
    const Tensor& feats = stack.layers[layer - 1];
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0.0;
      for (std::size_t t = 0; t < stack.frames; ++t) acc += feats(t, d);
      out(i, d) = acc / double(stack.frames);
    }
  }
  return out;
}

double cca_similarity(const Tensor& X, const Tensor& Y, const CcaOptions& opts) {
  DMOS_CHECK(X.rank() == 2 && Y.rank() == 2, ErrorKind::ShapeMismatch,
             "cca_similarity: need 2-D inputs");
  const std::size_t U = X.dim(0);
  DMOS_CHECK(Y.dim(0) == U, ErrorKind::ShapeMismatch,
             "cca_similarity: row counts differ");
  DMOS_CHECK(U >= 3, ErrorKind::DegenerateInput, "cca_similarity: need at least 3 rows");
  DMOS_CHECK(X.all_finite() && Y.all_finite(), ErrorKind::NonFiniteInput,
             "cca_similarity: non-finite input");

  EMat xc = centered(to_eigen(X));
  EMat yc = centered(to_eigen(Y));
  const double denom = double(U - 1);
  EMat sxx = xc.transpose() * xc / denom;
  EMat syy = yc.transpose() * yc / denom;
  EMat sxy = xc.transpose() * yc / denom;

  EMat m = inv_sqrt(sxx, opts.ridge_scale) * sxy * inv_sqrt(syy, opts.ridge_scale);
  Eigen::JacobiSVD<EMat> svd(m);
  const auto& sv = svd.singularValues();
  const long k = std::min(m.rows(), m.cols());
  if (opts.summary == CcaSummary::top1)
    return std::clamp(sv(0), 0.0, 1.0);
  double acc = 0.0;
  for (long i = 0; i < k; ++i) acc += std::clamp(sv(i), 0.0, 1.0);
  return acc / double(k);
}

std::string cca_tag_for(HeadMode mode) {
  switch (mode) {
    case HeadMode::token_prediction: return "distilmos";
    case HeadMode::none: return "w/o token prediction";
    case HeadMode::mse_distillation: return "mse_distillation";
  }
  return "?";
}

std::vector<CcaCurve> analyze_cca(const CcaAnalyzeRequest& request) {
  DMOS_CHECK(!request.checkpoint_paths.empty(), ErrorKind::BadConfig,
             "analyze_cca: need at least one checkpoint");
  DMOS_CHECK(request.manifest != nullptr, ErrorKind::BadConfig,
             "analyze_cca: manifest required");
  const CorpusManifest& manifest = *request.manifest;

  std::vector<std::size_t> indices;
  if (request.split) {
    indices = manifest.split_indices(*request.split);
  } else {
    indices.resize(manifest.entries.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  }
  DMOS_CHECK(!indices.empty(), ErrorKind::EmptyBatch,
             "analyze_cca: no utterances in the requested split");

  // All checkpoints must share a backend spec; the pristine encoder rebuilt
  // from (spec, seed) provides the reference layer representations.
  LoadedCheckpoint first = load_checkpoint(request.checkpoint_paths[0],
                                           /*inference_only=*/true);
  auto reference = make_backend(first.meta.backend_spec, first.meta.backend_seed,
                                first.meta.finetune_frontend);
  const std::size_t N = reference->spec().n_layers;

  std::vector<Tensor> ref_layers;
  ref_layers.reserve(N);
  for (std::size_t n = 1; n <= N; ++n)
    ref_layers.push_back(pooled_backend_layer(*reference, manifest, indices, n));

  auto curve_for = [&](const Tensor& reps, const std::string& tag) {
    CcaCurve curve;
    curve.model_tag = tag;
    for (std::size_t n = 0; n < N; ++n)
      curve.values.push_back(cca_similarity(reps, ref_layers[n], request.options));
    return curve;
  };

  std::vector<CcaCurve> out;
  std::map<std::string, int> tag_counts;
  for (const auto& path : request.checkpoint_paths) {
    LoadedCheckpoint ck = load_checkpoint(path, /*inference_only=*/true);
    DMOS_CHECK(ck.meta.backend_spec.n_layers == N &&
                   ck.meta.backend_spec.dim == reference->spec().dim,
               ErrorKind::IncompatibleCheckpoint,
               "analyze_cca: checkpoints use different backend specs");
    std::string tag = cca_tag_for(ck.meta.model_config.head_mode);
    const int count = ++tag_counts[tag];
    if (count > 1) tag += " #" + std::to_string(count);
    Tensor reps = pooled_model_reps(*ck.model, *ck.backend, manifest, indices);
    out.push_back(curve_for(reps, tag));
  }

  if (request.include_random_init) {
    DistilMosModel random_model(first.meta.model_config, request.random_init_seed,
                                /*inference_only=*/true);
    auto random_backend = make_backend(first.meta.backend_spec, first.meta.backend_seed,
                                       first.meta.finetune_frontend);
    Tensor reps = pooled_model_reps(random_model, *random_backend, manifest, indices);
    out.push_back(curve_for(reps, "random-init"));
  }

  if (request.include_ssl_mos_style) {
    // SSL-MOS-style analysis reads the fine-tuned encoder's final layer.
    LoadedCheckpoint ck = load_checkpoint(request.checkpoint_paths[0],
                                          /*inference_only=*/true);
    Tensor reps = pooled_backend_layer(*ck.backend, manifest, indices, N);
    out.push_back(curve_for(reps, "ssl-mos-style"));
  }
  return out;
}

}  // namespace dmos
