// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/ssl_backend.hpp"

#include <cmath>

namespace dmos {

namespace {

Tensor normal_init(Rng& rng, std::vector<std::size_t> shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = stddev * rng.normal();
  return t;
}

}  // namespace

SyntheticBackend::SyntheticBackend(const BackendSpec& spec, std::uint64_t seed,
                                   bool finetune_frontend)
    : spec_(spec), seed_(seed), finetune_frontend_(finetune_frontend) {
  DMOS_CHECK(spec_.n_layers >= 1 && spec_.dim >= 1, ErrorKind::BadConfig,
             "backend spec: n_layers and dim must be >= 1");
  DMOS_CHECK(spec_.frame_rate > 0.0, ErrorKind::BadConfig,
             "backend spec: frame_rate must be positive");
  Rng rng(Rng::derive(seed, 0x5531));

  // window length is resolved per sample rate; parameters are sized for the
  // nominal 16 kHz window and reused (the toolkit trains on one sample rate)
  const std::size_t win = hop(16000);
  const bool train_front = spec_.trainable && finetune_frontend_;
  embed_w_ = ad::make_leaf(normal_init(rng, {win, spec_.dim}, 1.0 / std::sqrt(double(win))),
                           train_front);
  embed_b_ = ad::make_leaf(Tensor({spec_.dim}, 0.0), train_front);
  for (std::size_t n = 0; n < spec_.n_layers; ++n) {
    mix_w_.push_back(ad::make_leaf(
        normal_init(rng, {spec_.dim, spec_.dim}, 1.2 / std::sqrt(double(spec_.dim))),
        spec_.trainable));
    mix_b_.push_back(ad::make_leaf(Tensor({spec_.dim}, 0.0), spec_.trainable));
  }
}

std::size_t SyntheticBackend::hop(std::size_t sample_rate) const {
  const double h = double(sample_rate) / spec_.frame_rate;
  const auto hop = static_cast<std::size_t>(std::llround(h));
  DMOS_CHECK(hop >= 1, ErrorKind::BadConfig, "frame_rate exceeds sample rate");
  return hop;
}

std::size_t SyntheticBackend::frame_count(std::size_t samples,
                                          std::size_t sample_rate) const {
  const std::size_t h = hop(sample_rate);
  const std::size_t win = h;
  DMOS_CHECK(samples >= win, ErrorKind::TooShortInput,
             "waveform shorter than one frame window");
  return (samples - win) / h + 1;
}

BatchFeatures SyntheticBackend::encode_batch(ad::Graph& g, const PaddedBatch& batch,
                                             std::size_t sample_rate, bool training) {
  (void)training;
  const std::size_t B = batch.batch();
  DMOS_CHECK(B >= 1, ErrorKind::EmptyBatch, "encode: empty batch");
  const std::size_t h = hop(sample_rate);
  const std::size_t win = h;
  DMOS_CHECK(win == embed_w_.val().dim(0), ErrorKind::DimMismatch,
             "encode: sample rate incompatible with backend window");

  std::vector<std::size_t> frames(B);
  std::size_t t_max = 0;
  for (std::size_t b = 0; b < B; ++b) {
    frames[b] = frame_count(batch.lengths[b], sample_rate);
    t_max = std::max(t_max, frames[b]);
  }
  FrameMask mask = FrameMask::from_lengths(frames, t_max);

  // Window matrix: rows only read samples inside the valid region, so padded
  // samples can never influence any frame.
  Tensor windows({B, t_max, win}, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < frames[b]; ++t)
      for (std::size_t s = 0; s < win; ++s)
        windows.at3(b, t, s) = batch.waveforms(b, t * h + s);

  ad::Var x = ad::make_constant(std::move(windows));
  ad::Var hcur = g.tanh_act(g.linear(x, embed_w_, embed_b_));
  hcur = g.apply_time_mask(hcur, mask);

  BatchFeatures out;
  out.mask = mask;
  for (std::size_t n = 0; n < spec_.n_layers; ++n) {
    hcur = g.tanh_act(g.linear(hcur, mix_w_[n], mix_b_[n]));
    hcur = g.apply_time_mask(hcur, mask);
    out.layers.push_back(hcur);
  }
  return out;
}

std::vector<LayerStack> SyntheticBackend::encode(const PaddedBatch& batch,
                                                 std::size_t sample_rate) {
  ad::Graph g;
  g.grad_enabled = false;
  BatchFeatures f = encode_batch(g, batch, sample_rate, /*training=*/false);
  const std::size_t B = batch.batch();
  const std::size_t D = spec_.dim;
  std::vector<LayerStack> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t T = f.mask.count_row(b);
    out[b].frame_rate = spec_.frame_rate;
    out[b].frames = T;
    out[b].frame_mask.assign(T, 1);
    for (std::size_t n = 0; n < spec_.n_layers; ++n) {
      Tensor layer({T, D});
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d)
          layer(t, d) = f.layers[n].val().at3(b, t, d);
      out[b].layers.push_back(std::move(layer));
    }
  }
  return out;
}

std::vector<NamedParam> SyntheticBackend::parameters() {
  std::vector<NamedParam> out;
  out.push_back({"embed.w", embed_w_});
  out.push_back({"embed.b", embed_b_});
  for (std::size_t n = 0; n < spec_.n_layers; ++n) {
    out.push_back({"mix." + std::to_string(n) + ".w", mix_w_[n]});
    out.push_back({"mix." + std::to_string(n) + ".b", mix_b_[n]});
  }
  return out;
}

std::unique_ptr<SslBackend> make_backend(const BackendSpec& spec, std::uint64_t seed,
                                         bool finetune_frontend,
                                         const std::string& checkpoint_path) {
  if (spec.name == "synthetic")
    return std::make_unique<SyntheticBackend>(spec, seed, finetune_frontend);
  // Real encoders are an integration layer behind the same interface; the
  // checkpoint path is threaded through opaquely for them.
  (void)checkpoint_path;
  fail(ErrorKind::BadConfig, "unknown backend: " + spec.name);
}

}  // namespace dmos
