// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "dmos/checkpoint.hpp"
#include "dmos/evaluation.hpp"
#include "dmos/losses.hpp"

namespace dmos {

namespace fs = std::filesystem;
using nlohmann::json;

double one_cycle_lr(std::size_t step, std::size_t total_steps, double peak_lr,
                    double warmup_frac, double div_factor, double final_div) {
  DMOS_CHECK(step <= total_steps, ErrorKind::StepOutOfRange,
             "one_cycle_lr: step beyond total_steps");
  DMOS_CHECK(total_steps >= 1, ErrorKind::BadConfig, "one_cycle_lr: empty schedule");
  const std::size_t warm = std::size_t(warmup_frac * double(total_steps));
  const double start = peak_lr / div_factor;
  const double final_lr = peak_lr / final_div;
  if (step <= warm) {
    if (warm == 0) return peak_lr;
    return start + (peak_lr - start) * double(step) / double(warm);
  }
  const double p = double(step - warm) / double(total_steps - warm);
  return final_lr + 0.5 * (peak_lr - final_lr) * (1.0 + std::cos(M_PI * p));
}

std::size_t one_cycle_peak_step(std::size_t total_steps, double warmup_frac) {
  return std::size_t(warmup_frac * double(total_steps));
}

double clip_gradients(std::vector<NamedParam>& params, double clip_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.var.n->requires_grad || !p.var.n->grad_alloc) continue;
    for (double g : p.var.n->grad.v) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm && norm > 0.0) {
    const double s = clip_norm / norm;
    for (auto& p : params) {
      if (!p.var.n->requires_grad || !p.var.n->grad_alloc) continue;
      for (double& g : p.var.n->grad.v) g *= s;
    }
  }
  return norm;
}

AdamW::AdamW(std::vector<NamedParam> params, const TrainingConfig& config)
    : params_(std::move(params)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      weight_decay_(config.weight_decay) {
  for (auto& p : params_) {
    m_.emplace_back(p.var.val().shape, 0.0);
    v_.emplace_back(p.var.val().shape, 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.var.n->zero_grad();
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  constexpr double eps = 1e-8;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.var.n->requires_grad) continue;
    if (!p.var.n->grad_alloc) p.var.n->g();
    Tensor& theta = p.var.n->val;
    const Tensor& grad = p.var.n->grad;
    for (std::size_t j = 0; j < theta.numel(); ++j) {
      m_[i].v[j] = beta1_ * m_[i].v[j] + (1.0 - beta1_) * grad.v[j];
      v_[i].v[j] = beta2_ * v_[i].v[j] + (1.0 - beta2_) * grad.v[j] * grad.v[j];
      const double mhat = m_[i].v[j] / bc1;
      const double vhat = v_[i].v[j] / bc2;
      theta.v[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay_ * theta.v[j]);
    }
  }
}

namespace {

void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.below(i)]);
}

struct BatchTargets {
  std::vector<std::vector<std::int32_t>> tokens;  // N x (B*T)
  std::vector<Tensor> embeds;                     // N x [B,T,D]
};

// Pads per-utterance teacher targets out to the batch frame grid.
BatchTargets collect_targets(HeadMode mode, const std::vector<std::size_t>& chunk,
                             const CorpusManifest& manifest,
                             const std::map<std::string, TokenSequence>& token_map,
                             const std::map<std::string, LayerStack>& teacher_map,
                             const FrameMask& mask, std::size_t n_layers,
                             std::size_t dim) {
  BatchTargets out;
  const std::size_t B = mask.batch, T = mask.frames;
  if (mode == HeadMode::token_prediction) {
    out.tokens.assign(n_layers, std::vector<std::int32_t>(B * T, 0));
    for (std::size_t b = 0; b < B; ++b) {
      const auto& id = manifest.entries[chunk[b]].id;
      const auto& seq = token_map.at(id);
      for (std::size_t n = 0; n < n_layers; ++n)
        for (std::size_t t = 0; t < seq.frames && t < T; ++t)
          out.tokens[n][b * T + t] = seq.at(n, t);
    }
  } else if (mode == HeadMode::mse_distillation) {
    for (std::size_t n = 0; n < n_layers; ++n) out.embeds.emplace_back(
        std::vector<std::size_t>{B, T, dim}, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& id = manifest.entries[chunk[b]].id;
      const auto& stack = teacher_map.at(id);
      for (std::size_t n = 0; n < n_layers; ++n)
        for (std::size_t t = 0; t < stack.frames && t < T; ++t)
          for (std::size_t d = 0; d < dim; ++d)
            out.embeds[n].at3(b, t, d) = stack.layers[n](t, d);
    }
  }
  return out;
}

struct TensorStore {
  std::vector<std::pair<std::string, Tensor*>> items;

  void add(const std::string& name, Tensor* t) { items.emplace_back(name, t); }

  void write(std::ofstream& out) const {
    for (const auto& [name, t] : items) {
      const std::uint32_t nlen = std::uint32_t(name.size());
      out.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
      out.write(name.data(), nlen);
      const std::uint64_t numel = t->numel();
      out.write(reinterpret_cast<const char*>(&numel), sizeof(numel));
      out.write(reinterpret_cast<const char*>(t->v.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
    }
  }

  void read(std::ifstream& in, const std::string& path) {
    for (auto& [name, t] : items) {
      std::uint32_t nlen = 0;
      in.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
      std::string got(nlen, '\0');
      in.read(got.data(), nlen);
      std::uint64_t numel = 0;
      in.read(reinterpret_cast<char*>(&numel), sizeof(numel));
      DMOS_CHECK(in.good() && got == name && numel == t->numel(),
                 ErrorKind::CorruptFile, "train state mismatch at " + name + " in " + path);
      in.read(reinterpret_cast<char*>(t->v.data()),
              static_cast<std::streamsize>(numel * sizeof(double)));
      DMOS_CHECK(std::size_t(in.gcount()) == numel * sizeof(double),
                 ErrorKind::CorruptFile, "truncated train state: " + path);
    }
  }
};

constexpr char kStateMagic[4] = {'D', 'M', 'T', 'S'};

struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t data_rng_state = 0;
  std::vector<std::size_t> perm;
  std::uint64_t cursor = 0;
  std::uint64_t best_step = 0;
  std::uint8_t best_defined = 0;
  double best_srcc = 0.0;
  std::string best_path;
};

void save_state(const std::string& path, const TrainState& st, TensorStore& tensors) {
  std::ofstream out(path, std::ios::binary);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write train state: " + path);
  out.write(kStateMagic, 4);
  out.write(reinterpret_cast<const char*>(&st.step), sizeof(st.step));
  out.write(reinterpret_cast<const char*>(&st.data_rng_state), sizeof(st.data_rng_state));
  const std::uint64_t n = st.perm.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (auto i : st.perm) {
    const std::uint64_t x = i;
    out.write(reinterpret_cast<const char*>(&x), sizeof(x));
  }
  out.write(reinterpret_cast<const char*>(&st.cursor), sizeof(st.cursor));
  out.write(reinterpret_cast<const char*>(&st.best_step), sizeof(st.best_step));
  out.write(reinterpret_cast<const char*>(&st.best_defined), sizeof(st.best_defined));
  out.write(reinterpret_cast<const char*>(&st.best_srcc), sizeof(st.best_srcc));
  const std::uint32_t plen = std::uint32_t(st.best_path.size());
  out.write(reinterpret_cast<const char*>(&plen), sizeof(plen));
  out.write(st.best_path.data(), plen);
  tensors.write(out);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "short state write: " + path);
}

TrainState load_state(const std::string& path, TensorStore& tensors) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open train state: " + path);
  char magic[4];
  in.read(magic, 4);
  DMOS_CHECK(in.gcount() == 4 && std::memcmp(magic, kStateMagic, 4) == 0,
             ErrorKind::CorruptFile, "bad train state magic: " + path);
  TrainState st;
  in.read(reinterpret_cast<char*>(&st.step), sizeof(st.step));
  in.read(reinterpret_cast<char*>(&st.data_rng_state), sizeof(st.data_rng_state));
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  DMOS_CHECK(in.good() && n < (1ull << 32), ErrorKind::CorruptFile,
             "bad train state: " + path);
  st.perm.resize(n);
  for (auto& i : st.perm) {
    std::uint64_t x = 0;
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    i = std::size_t(x);
  }
  in.read(reinterpret_cast<char*>(&st.cursor), sizeof(st.cursor));
  in.read(reinterpret_cast<char*>(&st.best_step), sizeof(st.best_step));
  in.read(reinterpret_cast<char*>(&st.best_defined), sizeof(st.best_defined));
  in.read(reinterpret_cast<char*>(&st.best_srcc), sizeof(st.best_srcc));
  std::uint32_t plen = 0;
  in.read(reinterpret_cast<char*>(&plen), sizeof(plen));
  DMOS_CHECK(in.good() && plen < (1u << 16), ErrorKind::CorruptFile,
             "bad train state: " + path);
  st.best_path.resize(plen);
  in.read(st.best_path.data(), plen);
  tensors.read(in, path);
  return st;
}

std::optional<double> valid_srcc(DistilMosModel& model, SslBackend& backend,
                                 const CorpusManifest& manifest, std::size_t batch) {
  EvalOptions opts;
  opts.split = Split::valid;
  opts.system_level = false;
  opts.batch_size = batch;
  EvalResult r = evaluate_model(model, backend, manifest, opts);
  return r.utterance.srcc;
}

}  // namespace

TrainResult train(const TrainJob& job) {
  DMOS_CHECK(job.manifest != nullptr, ErrorKind::BadConfig, "train: manifest required");
  const CorpusManifest& manifest = *job.manifest;
  const TrainingConfig& tc = job.training;
  DMOS_CHECK(tc.steps >= 1, ErrorKind::BadConfig, "train: steps must be >= 1");
  DMOS_CHECK(tc.batch_size >= 1, ErrorKind::BadConfig, "train: batch_size must be >= 1");

  const auto train_idx = manifest.split_indices(Split::train);
  const auto valid_idx = manifest.split_indices(Split::valid);
  DMOS_CHECK(!train_idx.empty() && !valid_idx.empty(), ErrorKind::InsufficientData,
             "train: manifest needs nonempty train and valid splits");

  // teacher = pristine encoder snapshot providing the distillation targets
  auto teacher = make_backend(job.backend_spec, job.backend_seed, job.finetune_frontend);
  auto student = make_backend(job.backend_spec, job.backend_seed, job.finetune_frontend);

  ModelConfig mc = job.model_config;
  mc.n_layers = job.backend_spec.n_layers;
  mc.ssl_dim = job.backend_spec.dim;

  std::vector<Codebook> codebooks;
  std::string codebook_hash;
  if (mc.head_mode == HeadMode::token_prediction) {
    DMOS_CHECK(!job.codebooks_path.empty(), ErrorKind::MissingCodebooks,
               "train: head_mode=token_prediction requires a codebook file");
    codebooks = load_codebooks(job.codebooks_path);
    codebook_hash = to_hex(codebook_file_hash(job.codebooks_path));
    DMOS_CHECK(codebooks.size() == mc.n_layers, ErrorKind::MissingLayerCodebook,
               "train: codebook file does not cover every backend layer");
    for (const auto& cb : codebooks) {
      DMOS_CHECK(cb.dim == mc.ssl_dim, ErrorKind::DimMismatch,
                 "train: codebook dim does not match backend dim");
      DMOS_CHECK(cb.k == mc.n_clusters, ErrorKind::BadConfig,
                 "train: model n_clusters does not match codebook k");
    }
  }

  DistilMosModel model(mc, tc.seed);

  // Distillation targets from the frozen teacher, cached per utterance.
  std::map<std::string, TokenSequence> token_map;
  std::map<std::string, LayerStack> teacher_map;
  if (mc.head_mode == HeadMode::token_prediction) {
    CorpusManifest train_only;
    train_only.name = manifest.name;
    train_only.sample_rate = manifest.sample_rate;
    for (auto i : train_idx) train_only.entries.push_back(manifest.entries[i]);
    token_map = tokenize_corpus(train_only, *teacher, codebooks);
  } else if (mc.head_mode == HeadMode::mse_distillation) {
    for (auto i : train_idx) {
      PaddedBatch b = collate(manifest, {i});
      teacher_map.emplace(manifest.entries[i].id,
                          teacher->encode(b, manifest.sample_rate)[0]);
    }
  }

  fs::create_directories(fs::path(job.run_dir) / "checkpoints");
  fs::create_directories(fs::path(job.run_dir) / "reports");
  const std::string log_path = (fs::path(job.run_dir) / "train_log.ndjson").string();
  const std::string state_path = (fs::path(job.run_dir) / "state.bin").string();
  if (!job.config_echo.empty() && !job.resume) {
    std::ofstream echo(fs::path(job.run_dir) / "config.ini", std::ios::binary);
    echo << job.config_echo;
  }

  std::vector<NamedParam> all_params = model.parameters();
  for (auto& p : student->parameters()) all_params.push_back({"backend." + p.name, p.var});
  AdamW opt(all_params, tc);

  TensorStore store;
  for (auto& p : opt.params()) store.add("param." + p.name, &p.var.n->val);
  for (auto& b : model.buffers()) store.add("buffer." + b.name, b.tensor);
  {
    std::size_t i = 0;
    for (auto& p : opt.params()) {
      store.add("adam.m." + p.name, &opt.moments_m()[i]);
      store.add("adam.v." + p.name, &opt.moments_v()[i]);
      ++i;
    }
  }

  TrainState st;
  st.perm = train_idx;
  Rng data_rng(Rng::derive(tc.seed, 0xda7a));
  if (job.resume) {
    st = load_state(state_path, store);
    data_rng.set_state(st.data_rng_state);
    opt.set_t(st.step);
  } else {
    fisher_yates(st.perm, data_rng);
  }

  std::ofstream log(log_path, job.resume ? std::ios::app : std::ios::trunc);
  DMOS_CHECK(log.good(), ErrorKind::MissingFile, "cannot open training log: " + log_path);
  const std::string report_path =
      (fs::path(job.run_dir) / "reports" / "valid_srcc.psv").string();
  std::ofstream report(report_path, job.resume ? std::ios::app : std::ios::trunc);
  if (!job.resume) report << "step|valid_srcc\n";

  auto meta_for = [&](std::size_t step, std::optional<double> srcc) {
    CheckpointMeta meta;
    meta.model_config = mc;
    meta.backend_spec = job.backend_spec;
    meta.backend_seed = job.backend_seed;
    meta.finetune_frontend = job.finetune_frontend;
    meta.model_seed = tc.seed;
    meta.sample_rate = manifest.sample_rate;
    meta.codebook_hash = codebook_hash;
    meta.trained_steps = step;
    meta.valid_srcc_defined = srcc.has_value();
    meta.valid_srcc = srcc.value_or(0.0);
    return meta;
  };

  TrainResult result;
  result.run_dir = job.run_dir;
  result.log_path = log_path;
  bool first_logged = false;

  for (std::size_t step = st.step + 1; step <= tc.steps; ++step) {
    if (job.stop_after > 0 && step > job.stop_after) break;
    // next batch of shuffled train indices; reshuffle when exhausted
    if (st.cursor >= st.perm.size()) {
      fisher_yates(st.perm, data_rng);
      st.cursor = 0;
    }
    const std::size_t take = std::min<std::size_t>(tc.batch_size, st.perm.size() - st.cursor);
    std::vector<std::size_t> chunk(st.perm.begin() + st.cursor,
                                   st.perm.begin() + st.cursor + take);
    st.cursor += take;

    PaddedBatch batch = collate(manifest, chunk);
    auto batch_diag = [&] {
      std::string ids;
      for (const auto& id : batch.ids) ids += id + " ";
      return ids;
    };
    ad::Graph g;
    CombinedLoss loss;
    try {
      BatchFeatures feats = student->encode_batch(g, batch, manifest.sample_rate, true);
      ForwardOutput fo = model.forward(g, feats, /*training=*/true);

      Tensor mos_target = Tensor::from(batch.mos, {batch.batch()});
      ad::Var l_mos = mos_loss(g, fo.mos_pred, mos_target);

      std::vector<ad::Var> aux;
      if (mc.head_mode == HeadMode::token_prediction) {
        BatchTargets targets = collect_targets(mc.head_mode, chunk, manifest, token_map,
                                               teacher_map, fo.frame_mask, mc.n_layers,
                                               mc.ssl_dim);
        for (std::size_t n = 0; n < mc.n_layers; ++n)
          aux.push_back(token_ce_loss(g, fo.token_logits[n], targets.tokens[n],
                                      fo.frame_mask));
      } else if (mc.head_mode == HeadMode::mse_distillation) {
        BatchTargets targets = collect_targets(mc.head_mode, chunk, manifest, token_map,
                                               teacher_map, fo.frame_mask, mc.n_layers,
                                               mc.ssl_dim);
        aux = embed_mse_loss(g, fo.embed_preds, targets.embeds, fo.frame_mask);
      }
      loss = combined_loss(g, l_mos, aux, tc.alpha);
    } catch (const DmosError& e) {
      if (e.kind() != ErrorKind::NonFiniteInput) throw;
      fail(ErrorKind::NonFiniteLoss, "non-finite forward at step " +
                                         std::to_string(step) + "; batch: " +
                                         batch_diag() + "(" + e.what() + ")");
    }
    if (!std::isfinite(loss.breakdown.total))
      fail(ErrorKind::NonFiniteLoss, "non-finite loss at step " + std::to_string(step) +
                                         "; batch: " + batch_diag());

    opt.zero_grad();
    g.backward(loss.total);
    const double grad_norm = clip_gradients(opt.params(), tc.clip_norm);
    if (!std::isfinite(grad_norm))
      fail(ErrorKind::NonFiniteLoss, "non-finite gradient at step " +
                                         std::to_string(step) + "; batch: " + batch_diag());
    const double lr = one_cycle_lr(step, tc.steps, tc.lr, tc.warmup_frac, tc.div_factor,
                                   tc.final_div);
    opt.step(lr);

    json rec = {{"step", step},
                {"l_mos", loss.breakdown.l_mos},
                {"l_aux_mean", loss.breakdown.l_aux_mean},
                {"total", loss.breakdown.total},
                {"lr", lr},
                {"grad_norm", grad_norm}};
    log << rec.dump() << "\n";
    if (!first_logged) {
      result.first_l_mos = loss.breakdown.l_mos;
      first_logged = true;
    }
    result.final_l_mos = loss.breakdown.l_mos;

    const bool at_checkpoint = (tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) ||
                               step == tc.steps;
    if (at_checkpoint) {
      const std::optional<double> srcc = valid_srcc(model, *student, manifest, tc.eval_batch);
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06zu.ckpt", step);
      const std::string ckpt_path = (fs::path(job.run_dir) / "checkpoints" / name).string();
      save_checkpoint(ckpt_path, meta_for(step, srcc), model, *student);

      const bool better =
          srcc.has_value() && (!st.best_defined || *srcc > st.best_srcc);
      const bool first = st.best_path.empty();
      if (better || first) {
        st.best_step = step;
        st.best_defined = srcc.has_value() ? 1 : 0;
        st.best_srcc = srcc.value_or(0.0);
        st.best_path = ckpt_path;
      }
      json ev = {{"step", step},
                 {"event", "checkpoint"},
                 {"path", ckpt_path},
                 {"valid_srcc", srcc.has_value() ? json(*srcc) : json(nullptr)},
                 {"best_step", st.best_step}};
      log << ev.dump() << "\n";
      log.flush();
      if (srcc.has_value()) {
        char srcc_buf[32];
        std::snprintf(srcc_buf, sizeof(srcc_buf), "%.6f", *srcc);
        report << step << '|' << srcc_buf << "\n";
      } else {
        report << step << "|undefined\n";
      }
      report.flush();

      st.step = step;
      st.data_rng_state = data_rng.state();
      save_state(state_path, st, store);
    }
  }

  result.best_step = st.best_step;
  result.best_srcc_defined = st.best_defined != 0;
  result.best_valid_srcc = st.best_srcc;
  result.best_checkpoint = st.best_path;
  {
    std::ofstream best(fs::path(job.run_dir) / "best_checkpoint.txt");
    best << st.best_path << "\n";
  }
  return result;
}

}  // namespace dmos
