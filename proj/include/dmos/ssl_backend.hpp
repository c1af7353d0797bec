// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dmos/autodiff.hpp"
#include "dmos/data.hpp"
#include "dmos/tensor.hpp"

namespace dmos {

struct BackendSpec {
  std::string name = "synthetic";
  std::size_t n_layers = 4;   // Transformer-block outputs only
  std::size_t dim = 32;
  double frame_rate = 50.0;   // Hz
  bool trainable = true;
};

// Per-utterance frame-level features from every encoder layer.
struct LayerStack {
  std::vector<Tensor> layers;  // N tensors of shape [T, D]
  double frame_rate = 0.0;
  std::size_t frames = 0;
  std::vector<std::uint8_t> frame_mask;  // length T, all true for unpadded stacks

  std::size_t n_layers() const { return layers.size(); }
  std::size_t dim() const { return layers.empty() ? 0 : layers[0].cols(); }
};

// Batched differentiable features for the training path.
struct BatchFeatures {
  std::vector<ad::Var> layers;  // N vars of shape [B, T, D], masked frames zeroed
  FrameMask mask;
};

struct NamedParam {
  std::string name;
  ad::Var var;
};

// Adapter contract for feature extractors. Real pretrained encoders
// (Wav2Vec2/WavLM families) plug in behind this interface; the toolkit ships
// a deterministic synthetic implementation so everything runs at desk scale.
class SslBackend {
public:
  virtual ~SslBackend() = default;
  virtual const BackendSpec& spec() const = 0;

  // floor-based hop arithmetic; throws TooShortInput below one window
  virtual std::size_t frame_count(std::size_t samples, std::size_t sample_rate) const = 0;

  virtual BatchFeatures encode_batch(ad::Graph& g, const PaddedBatch& batch,
                                     std::size_t sample_rate, bool training) = 0;

  // plain (non-differentiable) per-utterance path used by the tokenizer,
  // evaluation and representation analysis
  virtual std::vector<LayerStack> encode(const PaddedBatch& batch,
                                         std::size_t sample_rate) = 0;

  virtual std::vector<NamedParam> parameters() = 0;
};

// Strided framing followed by a stack of tanh mixing layers, one output per
// layer. Deterministic initialization from `seed`; parameters require
// gradients iff spec.trainable (the framing front end additionally gated by
// finetune_frontend).
class SyntheticBackend : public SslBackend {
public:
  SyntheticBackend(const BackendSpec& spec, std::uint64_t seed,
                   bool finetune_frontend = true);

  const BackendSpec& spec() const override { return spec_; }
  std::size_t frame_count(std::size_t samples, std::size_t sample_rate) const override;
  BatchFeatures encode_batch(ad::Graph& g, const PaddedBatch& batch,
                             std::size_t sample_rate, bool training) override;
  std::vector<LayerStack> encode(const PaddedBatch& batch,
                                 std::size_t sample_rate) override;
  std::vector<NamedParam> parameters() override;

  std::uint64_t seed() const { return seed_; }
  std::size_t hop(std::size_t sample_rate) const;

private:
  BackendSpec spec_;
  std::uint64_t seed_;
  bool finetune_frontend_;
  ad::Var embed_w_, embed_b_;              // [win, D], [D]
  std::vector<ad::Var> mix_w_, mix_b_;     // per layer [D, D], [D]
};

std::unique_ptr<SslBackend> make_backend(const BackendSpec& spec, std::uint64_t seed,
                                         bool finetune_frontend = true,
                                         const std::string& checkpoint_path = "");

}  // namespace dmos
