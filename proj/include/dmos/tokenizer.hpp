// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmos/data.hpp"
#include "dmos/ssl_backend.hpp"
#include "dmos/tensor.hpp"

namespace dmos {

// Per-layer k-means codebook. Centroids are stored as float32 (the on-disk
// precision) so save/load round-trips are bit-exact; n_frames_seen is fit
// metadata and is not persisted.
struct Codebook {
  std::uint32_t layer_index = 0;  // 1-based
  std::uint32_t k = 0;
  std::uint32_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<float> centroids;  // row-major [k, dim]
  std::uint64_t n_frames_seen = 0;

  const float* centroid(std::size_t j) const { return &centroids[j * dim]; }
};

struct TokenSequence {
  std::string utterance_id;
  std::size_t n_layers = 0;
  std::size_t frames = 0;
  std::vector<std::int32_t> tokens;  // row-major [N, T]

  std::int32_t at(std::size_t layer, std::size_t t) const {
    return tokens[layer * frames + t];
  }
};

using LayerStackStream = std::function<std::optional<LayerStack>()>;

struct FitReport {
  std::vector<double> online_quant_error;  // per layer, mean over update batches
  std::vector<std::uint32_t> empty_clusters;  // per layer, centers never updated
};

// Streaming mini-batch k-means, one independent fitter per layer: k-means++
// over the first fill buffer, then per-centroid 1/count updates over batches
// of batch_size frames. Deterministic given seed and stream order; masked
// frames are skipped.
std::vector<Codebook> fit_codebooks(const LayerStackStream& stream, std::uint32_t k,
                                    std::uint32_t batch_size, std::uint64_t seed,
                                    FitReport* report = nullptr);

LayerStackStream manifest_feature_stream(const CorpusManifest& manifest,
                                         SslBackend& backend, Split split);

// Nearest centroid under squared Euclidean distance; ties resolve to the
// lowest centroid index.
std::vector<std::int32_t> assign(const Codebook& codebook, const Tensor& frames);

std::map<std::string, TokenSequence> tokenize_corpus(const CorpusManifest& manifest,
                                                     SslBackend& backend,
                                                     const std::vector<Codebook>& codebooks);

// Codebook file: magic "DMKM", then per-layer records
// {layer_index u32, k u32, dim u32, seed u64, centroids f32 row-major}, all
// little-endian.
void save_codebooks(const std::vector<Codebook>& codebooks, const std::string& path);
std::vector<Codebook> load_codebooks(const std::string& path);

std::uint64_t codebook_file_hash(const std::string& path);

}  // namespace dmos
