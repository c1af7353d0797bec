// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "dmos/cca.hpp"
#include "dmos/tokenizer.hpp"
#include "dmos/trainer.hpp"
#include "test_util.hpp"

using namespace dmos;
using dmos_test::TempDir;

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t({rows, cols});
  for (auto& v : t.v) v = scale * rng.normal();
  return t;
}

// Independent oracle: mean canonical correlation via the standard generalized
// eigenproblem  Sxy Syy^-1 Syx v = rho^2 Sxx v  (same ridge as the
// implementation, different algebraic route).
double oracle_cca(const Tensor& X, const Tensor& Y, double ridge_scale = 1e-6) {
  using EMat = Eigen::MatrixXd;
  const std::size_t U = X.dim(0);
  EMat x(U, X.cols()), y(U, Y.cols());
  for (std::size_t r = 0; r < U; ++r) {
    for (std::size_t c = 0; c < X.cols(); ++c) x(long(r), long(c)) = X(r, c);
    for (std::size_t c = 0; c < Y.cols(); ++c) y(long(r), long(c)) = Y(r, c);
  }
  x.rowwise() -= x.colwise().mean();
  y.rowwise() -= y.colwise().mean();
  const double denom = double(U - 1);
  EMat sxx = x.transpose() * x / denom;
  EMat syy = y.transpose() * y / denom;
  EMat sxy = x.transpose() * y / denom;
  sxx += (ridge_scale * sxx.trace() / double(sxx.rows())) *
         EMat::Identity(sxx.rows(), sxx.cols());
  syy += (ridge_scale * syy.trace() / double(syy.rows())) *
         EMat::Identity(syy.rows(), syy.cols());
  EMat lhs = sxy * syy.inverse() * sxy.transpose();
  Eigen::GeneralizedSelfAdjointEigenSolver<EMat> ges(lhs, sxx);
  const auto& evals = ges.eigenvalues();  // ascending rho^2
  const long k = std::min<long>(long(X.cols()), long(Y.cols()));
  double acc = 0.0;
  for (long i = 0; i < k; ++i) {
    const double rho2 = std::max(0.0, evals(evals.size() - 1 - i));
    acc += std::min(1.0, std::sqrt(rho2));
  }
  return acc / double(k);
}

}  // namespace

TEST_CASE("self-CCA is 1") {
  Rng rng(3);
  Tensor x = random_matrix(rng, 40, 5);
  CHECK(cca_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("CCA is invariant to invertible affine maps") {
  Rng rng(5);
  Tensor x = random_matrix(rng, 50, 4);
  Tensor r({4, 4});
  // well-conditioned random map: random + 3I
  for (auto& v : r.v) v = 0.3 * rng.normal();
  for (std::size_t i = 0; i < 4; ++i) r(i, i) += 3.0;
  Tensor y({50, 4});
  for (std::size_t u = 0; u < 50; ++u)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 1.7;  // constant offset b
      for (std::size_t i = 0; i < 4; ++i) acc += x(u, i) * r(i, j);
      y(u, j) = acc;
    }
  CHECK(cca_similarity(x, y) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("CCA is symmetric and deterministic") {
  Rng rng(7);
  Tensor x = random_matrix(rng, 30, 4);
  Tensor y = random_matrix(rng, 30, 6);
  const double a = cca_similarity(x, y);
  const double b = cca_similarity(y, x);
  CHECK(std::abs(a - b) < 1e-9);
  CHECK(cca_similarity(x, y) == a);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0 + 1e-9);
}

TEST_CASE("independent random data sits in the near-zero band") {
  Rng rng(11);
  Tensor x = random_matrix(rng, 200, 5);
  Tensor y = random_matrix(rng, 200, 5);
  const double got = cca_similarity(x, y);
  const double oracle = oracle_cca(x, y);
  CHECK(std::abs(got - oracle) < 1e-6);
  CHECK(got < 0.35);  // e 5 dims from 200 independent rows
}

TEST_CASE("implementation matches the eigenproblem oracle on random cases") {
  Rng rng(13);
  for (int rep = 0; rep < 8; ++rep) {
    const std::size_t d1 = 2 + rng.below(5);
    const std::size_t d2 = 2 + rng.below(5);
    Tensor x = random_matrix(rng, 60, d1);
    Tensor y = random_matrix(rng, 60, d2);
    // add correlation on the first component
    for (std::size_t u = 0; u < 60; ++u) y(u, 0) = 0.8 * x(u, 0) + 0.2 * y(u, 0);
    CHECK(std::abs(cca_similarity(x, y) - oracle_cca(x, y)) < 1e-6);
  }
}

TEST_CASE("affine reparameterization of features barely moves the score") {
  Rng rng(17);
  Tensor x = random_matrix(rng, 80, 4);
  Tensor y = random_matrix(rng, 80, 4);
  for (std::size_t u = 0; u < 80; ++u) y(u, 1) = x(u, 2) * 0.9 + 0.1 * y(u, 1);
  const double base = cca_similarity(x, y);
  Tensor xs = x;
  for (std::size_t u = 0; u < 80; ++u)
    for (std::size_t c = 0; c < 4; ++c) xs(u, c) = xs(u, c) * (2.0 + double(c)) - 1.5;
  CHECK(std::abs(cca_similarity(xs, y) - base) < 1e-4);
}

TEST_CASE("degenerate inputs are rejected") {
  Rng rng(19);
  Tensor x = random_matrix(rng, 2, 3);
  Tensor y = random_matrix(rng, 2, 3);
  CHECK_THROWS_AS(cca_similarity(x, y), DmosError);  // U < 3
  Tensor all_zero({10, 3}, 0.0);
  Tensor ok = random_matrix(rng, 10, 3);
  CHECK_THROWS_AS(cca_similarity(all_zero, ok), DmosError);  // zero trace -> rank deficient
}

TEST_CASE("pooled representations honor masks and shapes") {
  BackendSpec spec{"synthetic", 3, 8, 50.0, true};
  SyntheticBackend backend(spec, 23);
  CorpusManifest m = generate_synthetic_corpus(8, 31);
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4};

  Tensor pooled = pooled_backend_layer(backend, m, idx, 2);
  CHECK(pooled.shape == std::vector<std::size_t>{5, 8});

  // constant-over-time features pool to that constant: constant input
  // waveform produces constant frames through the framing front end
  Utterance constant;
  constant.id = "const";
  constant.system_id = "s";
  constant.mos = 3.0;
  constant.samples.assign(3200, 0.25f);
  CorpusManifest cm;
  cm.name = "const";
  cm.sample_rate = 16000;
  cm.entries = {constant};
  LayerStack stack = backend.encode(collate({constant}), 16000)[0];
  Tensor row = pooled_backend_layer(backend, cm, {0}, 1);
  for (std::size_t d = 0; d < 8; ++d)
    CHECK(row(0, d) == doctest::Approx(stack.layers[0](0, d)).epsilon(1e-9));
}

TEST_CASE("analyze_cca emits one value per layer per variant") {
  TempDir tmp("cca");
  CorpusManifest manifest = generate_synthetic_corpus(16, 5);
  BackendSpec spec{"synthetic", 3, 8, 50.0, true};
  SyntheticBackend teacher(spec, 11);
  auto stream = manifest_feature_stream(manifest, teacher, Split::train);
  auto cbs = fit_codebooks(stream, 4, 32, 3);
  const std::string cb_path = tmp.file("cb.dmkm");
  save_codebooks(cbs, cb_path);

  auto run_one = [&](HeadMode mode, const std::string& name) {
    TrainJob job;
    job.manifest = &manifest;
    job.backend_spec = spec;
    job.backend_seed = 11;
    job.model_config.hidden_dim = 12;
    job.model_config.n_clusters = 4;
    job.model_config.head_mode = mode;
    job.training.steps = 6;
    job.training.batch_size = 4;
    job.training.checkpoint_every = 6;
    job.training.seed = 9;
    job.codebooks_path = mode == HeadMode::token_prediction ? cb_path : "";
    job.run_dir = tmp.file(name);
    return train(job).best_checkpoint;
  };
  const std::string ck_token = run_one(HeadMode::token_prediction, "tok");
  const std::string ck_none = run_one(HeadMode::none, "none");

  CcaAnalyzeRequest req;
  req.checkpoint_paths = {ck_token, ck_none};
  req.manifest = &manifest;
  req.split = std::nullopt;  // tiny corpus: use all utterances
  auto curves = analyze_cca(req);

  REQUIRE(curves.size() == 4);  // two checkpoints + random-init + ssl-mos-style
  CHECK(curves[0].model_tag == "distilmos");
  CHECK(curves[1].model_tag == "w/o token prediction");
  CHECK(curves[2].model_tag == "random-init");
  CHECK(curves[3].model_tag == "ssl-mos-style");
  for (const auto& c : curves) {
    REQUIRE(c.values.size() == 3);
    for (double v : c.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-9);
      CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("backend self-analysis: layer against itself gives 1") {
  BackendSpec spec{"synthetic", 2, 6, 50.0, true};
  SyntheticBackend backend(spec, 3);
  CorpusManifest m = generate_synthetic_corpus(14, 9);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.entries.size(); ++i) idx.push_back(i);
  // pooled layer features are poorly conditioned, so the ridge shrinks the
  // weakest direction; the ridge-induced tolerance applies here
  for (std::size_t layer = 1; layer <= 2; ++layer) {
    Tensor reps = pooled_backend_layer(backend, m, idx, layer);
    CHECK(cca_similarity(reps, reps) == doctest::Approx(1.0).epsilon(1e-4));
  }
}
