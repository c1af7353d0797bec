// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one pass/fail line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmos/cca.hpp"
#include "dmos/checkpoint.hpp"
#include "dmos/evaluation.hpp"
#include "dmos/losses.hpp"
#include "dmos/metrics.hpp"
#include "dmos/model.hpp"
#include "dmos/tokenizer.hpp"
#include "dmos/trainer.hpp"
#include "test_util.hpp"

using namespace dmos;
namespace fs = std::filesystem;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Criterion {
  int id;
  std::string label;
  std::function<bool(std::string&)> body;
};

// ---------- independent scalar oracles (criterion 2) ----------

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  return (double(n) * sxy - sx * sy) /
         (std::sqrt(double(n) * sxx - sx * sx) * std::sqrt(double(n) * syy - sy * sy));
}

std::vector<double> oracle_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      less += x[j] < x[i];
      equal += x[j] == x[i];
    }
    r[i] = double(less) + 0.5 * double(equal + 1);
  }
  return r;
}

double oracle_ktau(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long long c = 0, d = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      tx += dx == 0;
      ty += dy == 0;
      if (dx == 0 || dy == 0) continue;
      ((dx > 0) == (dy > 0)) ? ++c : ++d;
    }
  const double n0 = double(n) * double(n - 1) / 2.0;
  return double(c - d) / std::sqrt((n0 - double(tx)) * (n0 - double(ty)));
}

// ---------- shared desk-scale fixtures ----------

struct DeskFixture {
  dmos_test::TempDir tmp{"acceptance"};
  CorpusManifest corpus;
  BackendSpec spec{"synthetic", 4, 32, 50.0, true};
  std::string codebooks_path;

  DeskFixture() : corpus(generate_synthetic_corpus(60, 7)) {
    SyntheticBackend teacher(spec, 21);
    auto stream = manifest_feature_stream(corpus, teacher, Split::train);
    auto cbs = fit_codebooks(stream, 16, 64, 5);
    codebooks_path = tmp.file("cb.dmkm");
    save_codebooks(cbs, codebooks_path);
  }

  TrainJob job(const std::string& run_name, HeadMode mode, std::size_t steps,
               std::uint64_t seed) const {
    TrainJob j;
    j.manifest = &corpus;
    j.backend_spec = spec;
    j.backend_seed = 21;
    j.model_config.hidden_dim = 64;
    j.model_config.n_clusters = 16;
    j.model_config.head_mode = mode;
    j.training.steps = steps;
    j.training.batch_size = 16;
    j.training.lr = 1e-3;
    j.training.checkpoint_every = 500;
    j.training.seed = seed;
    j.training.eval_batch = 32;
    j.codebooks_path = mode == HeadMode::token_prediction ? codebooks_path : "";
    j.run_dir = tmp.file(run_name);
    return j;
  }
};

DeskFixture* g_desk = nullptr;
std::vector<std::string> g_mode_checkpoints;  // filled by criterion 9, reused by 10/11

PaddedBatch small_batch(Rng& rng, const std::vector<std::size_t>& lengths) {
  std::vector<Utterance> utts;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.system_id = "s";
    u.mos = 1.0 + 4.0 * rng.uniform();
    u.samples.resize(lengths[i]);
    for (auto& s : u.samples) s = float(0.4 * rng.normal());
    utts.push_back(std::move(u));
  }
  return collate(utts);
}

ModelConfig tiny_model_config(HeadMode mode) {
  ModelConfig mc;
  mc.n_layers = 2;
  mc.ssl_dim = 8;
  mc.hidden_dim = 16;
  mc.n_clusters = 8;
  mc.head_mode = mode;
  return mc;
}

// ---------- criteria ----------

bool criterion_1(std::string& detail) {
  const std::string readme = std::string(DMOS_SOURCE_DIR) + "/README.md";
  std::string text = dmos_test::read_file(readme);
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char ch) { return char(std::tolower(ch)); });
  const bool documents_integration =
      text.find("pretrained") != std::string::npos &&
      text.find("wavlm") != std::string::npos;
  detail = documents_integration
               ? "paper-scale numbers need pretrained encoders and the real "
                 "corpora; README documents that integration path"
               : "README does not document the pretrained-encoder path";
  return documents_integration;
}

bool criterion_2(std::string& detail) {
  const double t0 = now_seconds();
  Rng rng(2024);
  double max_err = 0.0;
  std::size_t evaluated = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 5 + rng.below(16);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      if (rep % 2 == 0) x[i] = std::round(x[i] * 2.0) / 2.0;  // ties
      if (rep % 3 == 0) y[i] = std::round(y[i] * 2.0) / 2.0;
    }
    try {
      max_err = std::max(max_err, std::abs(lcc(x, y) - oracle_pearson(x, y)));
      max_err = std::max(max_err, std::abs(srcc(x, y) - oracle_pearson(oracle_ranks(x),
                                                                       oracle_ranks(y))));
      max_err = std::max(max_err, std::abs(ktau(x, y) - oracle_ktau(x, y)));
      double om = 0.0;
      for (std::size_t i = 0; i < n; ++i) om += (x[i] - y[i]) * (x[i] - y[i]);
      max_err = std::max(max_err, std::abs(mse(x, y) - om / double(n)));
      ++evaluated;
    } catch (const DmosError& e) {
      if (e.kind() != ErrorKind::DegenerateInput) throw;
    }
  }
  const double elapsed = now_seconds() - t0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu instances, max abs err %.2e, %.2fs", evaluated,
                max_err, elapsed);
  detail = buf;
  return evaluated >= 90 && max_err < 1e-9 && elapsed < 5.0;
}

bool criterion_3(std::string& detail) {
  ad::Graph g;
  Tensor logits({3, 200}, 0.0);
  FrameMask mask(1, 3, true);
  const double ce =
      token_ce_loss(g, ad::make_leaf(logits, false), {0, 63, 199}, mask).scalar();
  const bool ln200 = std::abs(ce - std::log(200.0)) < 1e-6;

  auto sl = [](double x) { return ad::make_leaf(Tensor::scalar(x), false); };
  auto eq3 = combined_loss(g, sl(1.0), {sl(2.0), sl(4.0)}, 0.1);
  const bool arithmetic = eq3.total.scalar() == 1.3;
  auto decoupled = combined_loss(g, sl(0.875), {sl(7.0), sl(3.0)}, 0.0);
  const bool alpha0 = decoupled.total.scalar() == 0.875;

  char buf[160];
  std::snprintf(buf, sizeof(buf), "ce(0,k=200)=%.6f, eq3 case=%.6f, alpha0=%.6f", ce,
                eq3.total.scalar(), decoupled.total.scalar());
  detail = buf;
  return ln200 && arithmetic && alpha0;
}

bool criterion_4(std::string& detail) {
  const double t0 = now_seconds();
  Rng rng(88);

  // exact assignment vs exhaustive scan, tie-break included
  Codebook cb;
  cb.layer_index = 1;
  cb.k = 7;
  cb.dim = 6;
  cb.centroids.resize(42);
  for (auto& c : cb.centroids) c = float(std::round(rng.normal() * 4.0) / 4.0);
  Tensor frames({200, 6});
  for (std::size_t i = 0; i < frames.numel(); ++i)
    frames.v[i] = std::round(rng.normal() * 4.0) / 4.0;  // quantized -> real ties
  const auto got = assign(cb, frames);
  bool assign_ok = true;
  for (std::size_t t = 0; t < 200 && assign_ok; ++t) {
    double best = 1e300;
    std::int32_t bj = 0;
    for (std::uint32_t j = 0; j < cb.k; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        const double diff = frames(t, c) - double(cb.centroid(j)[c]);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        bj = std::int32_t(j);
      }
    }
    assign_ok = got[t] == bj;
  }

  // mini-batch fit vs converged Lloyd's on two separated blobs
  std::vector<double> blob;
  Rng brng(21);
  for (int i = 0; i < 2000; ++i) {
    const bool second = i % 2 == 1;
    blob.push_back((second ? 4.0 : -4.0) + 0.3 * brng.normal());
    blob.push_back((second ? 4.0 : -4.0) + 0.3 * brng.normal());
  }
  auto stream_fn = [&, pos = std::size_t(0)]() mutable -> std::optional<LayerStack> {
    if (pos >= 2000) return std::nullopt;
    const std::size_t take = std::min<std::size_t>(50, 2000 - pos);
    LayerStack st;
    st.frames = take;
    st.frame_mask.assign(take, 1);
    st.frame_rate = 50.0;
    Tensor layer({take, 2});
    std::copy_n(&blob[pos * 2], take * 2, layer.v.begin());
    st.layers.push_back(std::move(layer));
    pos += take;
    return st;
  };
  auto cbs = fit_codebooks(stream_fn, 2, 64, 13);

  // Lloyd oracle to convergence
  std::vector<double> centers = {blob[0], blob[1], blob[2], blob[3]};
  for (int iter = 0; iter < 300; ++iter) {
    double sums[4] = {0, 0, 0, 0};
    std::size_t counts[2] = {0, 0};
    for (std::size_t i = 0; i < 2000; ++i) {
      double d0 = 0, d1 = 0;
      for (int c = 0; c < 2; ++c) {
        d0 += (blob[i * 2 + c] - centers[c]) * (blob[i * 2 + c] - centers[c]);
        d1 += (blob[i * 2 + c] - centers[2 + c]) * (blob[i * 2 + c] - centers[2 + c]);
      }
      const int j = d1 < d0;
      ++counts[j];
      sums[j * 2] += blob[i * 2];
      sums[j * 2 + 1] += blob[i * 2 + 1];
    }
    double shift = 0.0;
    for (int j = 0; j < 2; ++j)
      for (int c = 0; c < 2; ++c) {
        const double next = sums[j * 2 + c] / double(counts[j]);
        shift += std::abs(next - centers[j * 2 + c]);
        centers[j * 2 + c] = next;
      }
    if (shift < 1e-12) break;
  }
  double worst = 0.0;
  for (int j = 0; j < 2; ++j) {
    double best = 1e300;
    for (int o = 0; o < 2; ++o) {
      const double dx = double(cbs[0].centroid(j)[0]) - centers[o * 2];
      const double dy = double(cbs[0].centroid(j)[1]) - centers[o * 2 + 1];
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    worst = std::max(worst, best);
  }
  const double elapsed = now_seconds() - t0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "assign exact=%s, blob centroid gap %.4f (limit 0.1), %.2fs",
                assign_ok ? "yes" : "no", worst, elapsed);
  detail = buf;
  return assign_ok && worst < 0.1 && elapsed < 10.0;
}

bool criterion_5(std::string& detail) {
  const double t0 = now_seconds();
  Rng rng(11);
  BackendSpec spec{"synthetic", 2, 8, 50.0, true};
  double worst_rel = 0.0, meaningful_rel = 0.0;
  std::size_t groups_checked = 0;

  for (HeadMode mode : {HeadMode::token_prediction, HeadMode::mse_distillation}) {
    SyntheticBackend backend(spec, 47);
    SyntheticBackend teacher(spec, 47);
    DistilMosModel model(tiny_model_config(mode), 53);
    PaddedBatch batch = small_batch(rng, {1600, 1280});  // T = 5 and 4 frames

    auto stacks = teacher.encode(batch, 16000);
    const std::size_t T = stacks[0].frames;
    std::vector<std::vector<std::int32_t>> token_targets;
    std::vector<Tensor> embed_targets;
    for (std::size_t n = 0; n < 2; ++n) {
      std::vector<std::int32_t> toks(2 * T, 0);
      Tensor emb({2, T, 8}, 0.0);
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < stacks[b].frames; ++t) {
          toks[b * T + t] = std::int32_t((t + n + b) % 8);
          for (std::size_t d = 0; d < 8; ++d)
            emb.at3(b, t, d) = stacks[b].layers[n](t, d);
        }
      token_targets.push_back(std::move(toks));
      embed_targets.push_back(std::move(emb));
    }
    Tensor mos_target = Tensor::from(batch.mos, {2});

    auto loss_of = [&](ad::Graph& g) {
      BatchFeatures feats = backend.encode_batch(g, batch, 16000, true);
      ForwardOutput fo = model.forward(g, feats, true, false);
      ad::Var l_mos = mos_loss(g, fo.mos_pred, mos_target);
      std::vector<ad::Var> aux;
      if (mode == HeadMode::token_prediction) {
        for (std::size_t n = 0; n < 2; ++n)
          aux.push_back(
              token_ce_loss(g, fo.token_logits[n], token_targets[n], fo.frame_mask));
      } else {
        aux = embed_mse_loss(g, fo.embed_preds, embed_targets, fo.frame_mask);
      }
      return combined_loss(g, l_mos, aux, 0.1).total;
    };

    std::vector<NamedParam> params = model.parameters();
    for (auto& p : backend.parameters()) params.push_back(p);
    for (auto& p : params) p.var.n->zero_grad();
    ad::Graph g;
    g.backward(loss_of(g));

    Rng pick(303);
    for (auto& p : params) {
      ++groups_checked;
      const std::size_t n = p.var.val().numel();
      for (std::size_t s = 0; s < std::min<std::size_t>(4, n); ++s) {
        const std::size_t i = pick.below(n);
        const double saved = p.var.n->val.v[i];
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        p.var.n->val.v[i] = saved + h;
        ad::Graph gp;
        gp.grad_enabled = false;
        const double up = loss_of(gp).scalar();
        p.var.n->val.v[i] = saved - h;
        ad::Graph gm;
        gm.grad_enabled = false;
        const double dn = loss_of(gm).scalar();
        p.var.n->val.v[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double an = p.var.n->grad_alloc ? p.var.n->grad.v[i] : 0.0;
        const double abs_err = std::abs(fd - an);
        const double rel = abs_err / std::max({1e-8, std::abs(fd), std::abs(an)});
        if (std::max(std::abs(fd), std::abs(an)) > 1e-6)
          meaningful_rel = std::max(meaningful_rel, rel);
        if (abs_err <= 1e-7) continue;  // analytically-null directions (bias under BN)
        worst_rel = std::max(worst_rel, rel);
      }
    }
  }
  const double elapsed = now_seconds() - t0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%zu parameter groups, worst rel err %.2e (%.2e on nonzero grads), %.2fs",
                groups_checked, worst_rel, meaningful_rel, elapsed);
  detail = buf;
  return worst_rel <= 1e-3 && meaningful_rel <= 1e-3 && elapsed < 60.0;
}

bool criterion_6(std::string& detail) {
  const std::size_t counts[] = {
      DistilMosModel(tiny_model_config(HeadMode::token_prediction), 3)
          .inference_parameter_count(),
      DistilMosModel(tiny_model_config(HeadMode::none), 3).inference_parameter_count(),
      DistilMosModel(tiny_model_config(HeadMode::mse_distillation), 3)
          .inference_parameter_count(),
  };
  const bool counts_equal = counts[0] == counts[1] && counts[1] == counts[2];

  // the predict path loads checkpoints inference-only: aux heads never exist
  dmos_test::TempDir tmp("c6");
  BackendSpec spec{"synthetic", 2, 8, 50.0, true};
  SyntheticBackend backend(spec, 5);
  DistilMosModel trained(tiny_model_config(HeadMode::token_prediction), 3);
  CheckpointMeta meta;
  meta.model_config = trained.config();
  meta.backend_spec = spec;
  meta.backend_seed = 5;
  meta.model_seed = 3;
  save_checkpoint(tmp.file("m.ckpt"), meta, trained, backend);
  LoadedCheckpoint ck = load_checkpoint(tmp.file("m.ckpt"), /*inference_only=*/true);
  const bool no_aux = !ck.model->has_aux_heads() &&
                      ck.model->total_parameter_count() == counts[0];

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "inference params %zu/%zu/%zu across modes; predict-path aux heads: %s",
                counts[0], counts[1], counts[2], no_aux ? "never built" : "PRESENT");
  detail = buf;
  return counts_equal && no_aux;
}

bool criterion_7(std::string& detail) {
  Rng rng(10);
  BackendSpec spec{"synthetic", 2, 8, 50.0, true};
  SyntheticBackend backend(spec, 41);
  DistilMosModel model(tiny_model_config(HeadMode::none), 43);
  PaddedBatch batch = small_batch(rng, {3200, 6400});

  auto predict = [&](const PaddedBatch& b, bool training) {
    ad::Graph g;
    g.grad_enabled = false;
    BatchFeatures feats = backend.encode_batch(g, b, 16000, training);
    return model.forward(g, feats, training, false).mos_pred.val().v;
  };
  const auto base_eval = predict(batch, false);
  const auto base_train = predict(batch, true);
  PaddedBatch garbled = batch;
  for (std::size_t t = batch.lengths[0]; t < batch.max_len(); ++t)
    garbled.waveforms(0, t) = 1e4 * rng.normal();
  const auto eval2 = predict(garbled, false);
  const auto train2 = predict(garbled, true);
  double worst = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    worst = std::max(worst, std::abs(base_eval[b] - eval2[b]));
    worst = std::max(worst, std::abs(base_train[b] - train2[b]));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max |delta s_hat| = %.2e (limit 1e-5)", worst);
  detail = buf;
  return worst < 1e-5;
}

bool criterion_8(std::string& detail) {
  const double t0 = now_seconds();
  std::size_t passed = 0;
  std::string srccs;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TrainJob job = g_desk->job("c8_seed" + std::to_string(seed),
                               HeadMode::token_prediction, 2000, seed);
    TrainResult r = train(job);  // NonFiniteLoss would throw out of the criterion
    EvalOptions opts;
    opts.split = Split::train;
    EvalResult er = evaluate_checkpoint(r.best_checkpoint, g_desk->corpus, opts);
    const double srcc_v = er.utterance.srcc.value_or(-2.0);
    char b[32];
    std::snprintf(b, sizeof(b), "%.4f ", srcc_v);
    srccs += b;
    passed += srcc_v >= 0.9;
  }
  const double elapsed = now_seconds() - t0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "train SRCC per seed: %s(need >=0.9 for 2 of 3), %.0fs (limit 900)",
                srccs.c_str(), elapsed);
  detail = buf;
  return passed >= 2 && elapsed < 900.0;
}

bool criterion_9(std::string& detail) {
  bool ok = true;
  std::string summary;
  g_mode_checkpoints.clear();
  for (HeadMode mode : {HeadMode::token_prediction, HeadMode::none,
                        HeadMode::mse_distillation}) {
    TrainJob job = g_desk->job(std::string("c9_") + head_mode_name(mode), mode, 200, 5);
    TrainResult r = train(job);
    g_mode_checkpoints.push_back(r.best_checkpoint);
    EvalOptions opts;
    opts.split = Split::test;
    opts.system_level = true;
    EvalResult er = evaluate_checkpoint(r.best_checkpoint, g_desk->corpus, opts);
    // the report structure must be complete at both levels for every variant,
    // and a trained desk model clears the sanity floor on the test split
    ok = ok && er.system.has_value();
    ok = ok && er.utterance.srcc.has_value() && er.utterance.lcc.has_value() &&
         er.utterance.ktau.has_value();
    ok = ok && er.utterance.srcc.value_or(-1.0) > 0.0;
    summary += std::string(head_mode_name(mode)) + "(utt srcc " +
               (er.utterance.srcc ? std::to_string(*er.utterance.srcc).substr(0, 6)
                                  : "undef") +
               ") ";
  }
  detail = summary + "- all three variants trained and reported at both levels";
  return ok;
}

bool criterion_10(std::string& detail) {
  Rng rng(77);
  auto random_matrix = [&](std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (auto& v : t.v) v = rng.normal();
    return t;
  };
  Tensor x = random_matrix(40, 5);
  const double self_cca = cca_similarity(x, x);

  Tensor map({5, 5});
  for (auto& v : map.v) v = 0.3 * rng.normal();
  for (std::size_t i = 0; i < 5; ++i) map(i, i) += 3.0;
  Tensor y({40, 5});
  for (std::size_t u = 0; u < 40; ++u)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.7;
      for (std::size_t i = 0; i < 5; ++i) acc += x(u, i) * map(i, j);
      y(u, j) = acc;
    }
  const double affine_cca = cca_similarity(x, y);

  // independent random pair against the generalized eigenproblem oracle
  Tensor a = random_matrix(200, 5);
  Tensor b = random_matrix(200, 5);
  const double rand_cca = cca_similarity(a, b);
  double oracle;
  {
    using EMat = Eigen::MatrixXd;
    EMat am(200, 5), bm(200, 5);
    for (std::size_t r = 0; r < 200; ++r)
      for (std::size_t c = 0; c < 5; ++c) {
        am(long(r), long(c)) = a(r, c);
        bm(long(r), long(c)) = b(r, c);
      }
    am.rowwise() -= am.colwise().mean();
    bm.rowwise() -= bm.colwise().mean();
    EMat sxx = am.transpose() * am / 199.0;
    EMat syy = bm.transpose() * bm / 199.0;
    EMat sxy = am.transpose() * bm / 199.0;
    sxx += (1e-6 * sxx.trace() / 5.0) * EMat::Identity(5, 5);
    syy += (1e-6 * syy.trace() / 5.0) * EMat::Identity(5, 5);
    Eigen::GeneralizedSelfAdjointEigenSolver<EMat> ges(
        sxy * syy.inverse() * sxy.transpose(), sxx);
    double acc = 0.0;
    for (int i = 0; i < 5; ++i)
      acc += std::sqrt(std::max(0.0, ges.eigenvalues()(i)));
    oracle = acc / 5.0;
  }

  // analyze over the criterion-9 checkpoints: one value per layer per variant
  CcaAnalyzeRequest req;
  req.checkpoint_paths = g_mode_checkpoints;
  req.manifest = &g_desk->corpus;
  req.split = Split::test;
  auto curves = analyze_cca(req);
  bool analyze_ok = curves.size() == g_mode_checkpoints.size() + 2;
  for (const auto& c : curves) {
    analyze_ok = analyze_ok && c.values.size() == g_desk->spec.n_layers;
    for (double v : c.values)
      analyze_ok = analyze_ok && std::isfinite(v) && v >= 0.0 && v <= 1.0 + 1e-9;
  }

  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "self=%.8f affine=%.8f random=%.4f (oracle %.4f), %zu curves x %zu layers",
                self_cca, affine_cca, rand_cca, oracle, curves.size(),
                g_desk->spec.n_layers);
  detail = buf;
  return std::abs(self_cca - 1.0) < 1e-6 && std::abs(affine_cca - 1.0) < 1e-6 &&
         std::abs(rand_cca - oracle) < 1e-6 && rand_cca < 0.35 && analyze_ok;
}

bool criterion_11(std::string& detail) {
  dmos_test::TempDir tmp("c11");

  // codebook round trip, bit exact
  auto first = load_codebooks(g_desk->codebooks_path);
  save_codebooks(first, tmp.file("cb2.dmkm"));
  const bool cb_ok = dmos_test::read_file(g_desk->codebooks_path) ==
                     dmos_test::read_file(tmp.file("cb2.dmkm"));

  // checkpoint round trip, bit exact, via the criterion-9 token run
  const std::string ckpt = g_mode_checkpoints.at(0);
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  save_checkpoint(tmp.file("again.ckpt"), ck.meta, *ck.model, *ck.backend);
  LoadedCheckpoint ck2 = load_checkpoint(tmp.file("again.ckpt"));
  bool ckpt_ok = true;
  auto pa = ck.model->parameters();
  auto pb = ck2.model->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    ckpt_ok = ckpt_ok && pa[i].var.val().v == pb[i].var.val().v;

  // reloaded best checkpoint reproduces the logged validation SRCC
  EvalOptions opts;
  opts.split = Split::valid;
  EvalResult er = evaluate_checkpoint(ckpt, g_desk->corpus, opts);
  const bool srcc_ok = ck.meta.valid_srcc_defined && er.utterance.srcc.has_value() &&
                       std::abs(*er.utterance.srcc - ck.meta.valid_srcc) < 1e-6;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "codebooks bit-exact=%s, checkpoint bit-exact=%s, "
                "revalidated srcc %.6f vs logged %.6f",
                cb_ok ? "yes" : "no", ckpt_ok ? "yes" : "no",
                er.utterance.srcc.value_or(-2.0), ck.meta.valid_srcc);
  detail = buf;
  return cb_ok && ckpt_ok && srcc_ok;
}

void soft_observations() {
  // qualitative replication at toy scale: distilled curve vs the MOS-only
  // curve, reported but not gated
  try {
    CcaAnalyzeRequest req;
    req.checkpoint_paths = {g_mode_checkpoints.at(0), g_mode_checkpoints.at(1)};
    req.manifest = &g_desk->corpus;
    req.split = Split::test;
    req.include_random_init = false;
    req.include_ssl_mos_style = false;
    auto curves = analyze_cca(req);
    std::size_t above = 0;
    for (std::size_t n = 0; n < curves[0].values.size(); ++n)
      above += curves[0].values[n] >= curves[1].values[n];
    std::printf("[soft] distilmos CCA >= w/o-token-prediction CCA on %zu of %zu layers\n",
                above, curves[0].values.size());
  } catch (const std::exception& e) {
    std::printf("[soft] cca comparison unavailable: %s\n", e.what());
  }
}

}  // namespace

int main() {
  DeskFixture desk;
  g_desk = &desk;

  std::vector<Criterion> criteria = {
      {1, "paper-scale reproduction documented as out of desk scope", criterion_1},
      {2, "metric oracle suite (100 instances, 1e-9, <5s)", criterion_2},
      {3, "loss correctness (ln(200), weighted-objective arithmetic, alpha=0)",
       criterion_3},
      {4, "k-means equivalence (exact assign, blob centroids vs Lloyd's, <10s)",
       criterion_4},
      {5, "gradient check on the tiny config (rel err <= 1e-3, <60s)", criterion_5},
      {6, "inference-path guarantee (no aux heads, parameter audit)", criterion_6},
      {7, "mask integrity (padded perturbations < 1e-5)", criterion_7},
      {8, "desk-scale learnability (train SRCC >= 0.9, 2 of 3 seeds, <15min)",
       criterion_8},
      {9, "ablation harness parity (three head modes, comparable reports)",
       criterion_9},
      {10, "CCA suite (self, affine, random band vs oracle, analyze shape)",
       criterion_10},
      {11, "serialization round trips and SRCC reproduction", criterion_11},
  };

  int failures = 0;
  for (auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %2d: %s — %s\n", ok ? "PASS" : "FAIL", c.id,
                c.label.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !ok;
  }
  soft_observations();
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
