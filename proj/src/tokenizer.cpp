// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace dmos {

namespace {

constexpr std::uint32_t kInitBufferFactor = 4;  // k-means++ over the first 4k frames

double sqdist(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

// Single-layer streaming fitter.
class MiniBatchKMeans {
public:
  MiniBatchKMeans(std::uint32_t k, std::uint32_t dim, std::uint32_t batch_size,
                  std::uint64_t seed)
      : k_(k), dim_(dim), batch_size_(batch_size), rng_(seed) {
    DMOS_CHECK(k_ >= 1, ErrorKind::BadConfig, "k must be >= 1");
    DMOS_CHECK(batch_size_ >= 1, ErrorKind::BadConfig, "batch_size must be >= 1");
  }

  void push(const double* frame) {
    ++frames_seen_;
    if (!initialized_) {
      buffer_.insert(buffer_.end(), frame, frame + dim_);
      if (buffer_.size() / dim_ >= std::size_t(kInitBufferFactor) * k_) flush_init();
      return;
    }
    pending_.insert(pending_.end(), frame, frame + dim_);
    if (pending_.size() / dim_ >= batch_size_) process_pending();
  }

  void finish() {
    if (!initialized_) flush_init();
    process_pending();
  }

  Codebook result(std::uint32_t layer_index, std::uint64_t seed) const {
    DMOS_CHECK(initialized_, ErrorKind::InsufficientData,
               "fit_codebooks: fewer than k frames for layer " +
                   std::to_string(layer_index));
    Codebook cb;
    cb.layer_index = layer_index;
    cb.k = k_;
    cb.dim = dim_;
    cb.seed = seed;
    cb.n_frames_seen = frames_seen_;
    cb.centroids.resize(std::size_t(k_) * dim_);
    for (std::size_t i = 0; i < cb.centroids.size(); ++i)
      cb.centroids[i] = static_cast<float>(centers_[i]);
    return cb;
  }

  double mean_batch_error() const {
    return n_error_obs_ ? error_acc_ / double(n_error_obs_) : 0.0;
  }

  std::uint32_t empty_clusters() const {
    std::uint32_t n = 0;
    for (auto c : counts_) n += c == 0;
    return n;
  }

private:
  void flush_init() {
    const std::size_t m = buffer_.size() / dim_;
    DMOS_CHECK(m >= k_, ErrorKind::InsufficientData,
               "fit_codebooks: stream yielded fewer than k frames");
    kmeanspp(m);
    counts_.assign(k_, 0);
    initialized_ = true;
    // the init buffer itself is replayed as the first update batches
    pending_.swap(buffer_);
    buffer_.clear();
    while (pending_.size() / dim_ >= batch_size_) process_one_batch();
  }

  void kmeanspp(std::size_t m) {
    centers_.assign(std::size_t(k_) * dim_, 0.0);
    const double* data = buffer_.data();
    std::vector<double> d2(m, std::numeric_limits<double>::infinity());
    std::size_t first = rng_.below(m);
    std::copy_n(data + first * dim_, dim_, centers_.begin());
    for (std::uint32_t j = 1; j < k_; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = sqdist(data + i * dim_, &centers_[(j - 1) * dim_], dim_);
        d2[i] = std::min(d2[i], d);
        total += d2[i];
      }
      std::size_t pick;
      if (total > 0.0) {
        const double target = rng_.uniform() * total;
        double acc = 0.0;
        pick = m - 1;
        for (std::size_t i = 0; i < m; ++i) {
          acc += d2[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng_.below(m);
      }
      std::copy_n(data + pick * dim_, dim_, centers_.begin() + std::size_t(j) * dim_);
    }
  }

  void process_pending() {
    while (pending_.size() / dim_ >= batch_size_) process_one_batch();
    if (!pending_.empty()) {
      update_batch(pending_.data(), pending_.size() / dim_);
      pending_.clear();
    }
  }

  void process_one_batch() {
    update_batch(pending_.data(), batch_size_);
    pending_.erase(pending_.begin(), pending_.begin() + std::size_t(batch_size_) * dim_);
  }

  // Sculley-style update: cache assignments for the whole batch, then apply
  // per-center 1/count gradient steps sample by sample.
  void update_batch(const double* data, std::size_t m) {
    if (m == 0) return;
    std::vector<std::uint32_t> labels(m);
    double batch_err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_j = 0;
      for (std::uint32_t j = 0; j < k_; ++j) {
        const double d = sqdist(data + i * dim_, &centers_[std::size_t(j) * dim_], dim_);
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      labels[i] = best_j;
      batch_err += best;
    }
    error_acc_ += batch_err / double(m);
    ++n_error_obs_;
    for (std::size_t i = 0; i < m; ++i) {
      const std::uint32_t j = labels[i];
      counts_[j] += 1;
      const double lr = 1.0 / double(counts_[j]);
      double* c = &centers_[std::size_t(j) * dim_];
      const double* x = data + i * dim_;
      for (std::size_t d = 0; d < dim_; ++d) c[d] = (1.0 - lr) * c[d] + lr * x[d];
    }
  }

  std::uint32_t k_, dim_, batch_size_;
  Rng rng_;
  bool initialized_ = false;
  std::vector<double> buffer_;    // init fill buffer
  std::vector<double> pending_;   // frames awaiting a full mini-batch
  std::vector<double> centers_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t frames_seen_ = 0;
  double error_acc_ = 0.0;
  std::uint64_t n_error_obs_ = 0;
};

}  // namespace

std::vector<Codebook> fit_codebooks(const LayerStackStream& stream, std::uint32_t k,
                                    std::uint32_t batch_size, std::uint64_t seed,
                                    FitReport* report) {
  DMOS_CHECK(k >= 1, ErrorKind::BadConfig, "fit_codebooks: k must be >= 1");
  std::vector<MiniBatchKMeans> fitters;
  std::size_t n_layers = 0, dim = 0;

  std::optional<LayerStack> stack;
  while ((stack = stream())) {
    if (fitters.empty()) {
      n_layers = stack->n_layers();
      dim = stack->dim();
      DMOS_CHECK(n_layers >= 1 && dim >= 1, ErrorKind::DimMismatch,
                 "fit_codebooks: empty layer stack");
      for (std::size_t n = 0; n < n_layers; ++n)
        fitters.emplace_back(k, std::uint32_t(dim), batch_size,
                             Rng::derive(seed, n));
    }
    DMOS_CHECK(stack->n_layers() == n_layers && stack->dim() == dim,
               ErrorKind::DimMismatch, "fit_codebooks: inconsistent stack shape");
    for (std::size_t n = 0; n < n_layers; ++n) {
      const Tensor& feats = stack->layers[n];
      for (std::size_t t = 0; t < stack->frames; ++t) {
        if (!stack->frame_mask.empty() && !stack->frame_mask[t]) continue;
        fitters[n].push(&feats.v[t * dim]);
      }
    }
  }
  DMOS_CHECK(!fitters.empty(), ErrorKind::InsufficientData,
             "fit_codebooks: empty feature stream");

  std::vector<Codebook> out;
  if (report) {
    report->online_quant_error.clear();
    report->empty_clusters.clear();
  }
  for (std::size_t n = 0; n < n_layers; ++n) {
    fitters[n].finish();
    out.push_back(fitters[n].result(std::uint32_t(n + 1), seed));
    const std::uint32_t empty = fitters[n].empty_clusters();
    if (empty > 0)
      std::fprintf(stderr, "warning: layer %zu has %u never-updated clusters\n",
                   n + 1, empty);
    if (report) {
      report->online_quant_error.push_back(fitters[n].mean_batch_error());
      report->empty_clusters.push_back(empty);
    }
  }
  return out;
}

LayerStackStream manifest_feature_stream(const CorpusManifest& manifest,
                                         SslBackend& backend, Split split) {
  auto indices = std::make_shared<std::vector<std::size_t>>(manifest.split_indices(split));
  auto pos = std::make_shared<std::size_t>(0);
  const CorpusManifest* m = &manifest;
  SslBackend* b = &backend;
  return [indices, pos, m, b]() -> std::optional<LayerStack> {
    if (*pos >= indices->size()) return std::nullopt;
    PaddedBatch batch = collate(*m, {(*indices)[*pos]});
    ++(*pos);
    return b->encode(batch, m->sample_rate)[0];
  };
}

std::vector<std::int32_t> assign(const Codebook& codebook, const Tensor& frames) {
  DMOS_CHECK(frames.cols() == codebook.dim, ErrorKind::DimMismatch,
             "assign: frame dim does not match codebook dim");
  const std::size_t T = frames.rows();
  const std::size_t D = codebook.dim;
  std::vector<std::int32_t> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = &frames.v[t * D];
    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_j = 0;
    for (std::uint32_t j = 0; j < codebook.k; ++j) {
      const float* c = codebook.centroid(j);
      double d = 0.0;
      for (std::size_t i = 0; i < D; ++i) {
        const double diff = x[i] - double(c[i]);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_j = std::int32_t(j);
      }
    }
    out[t] = best_j;
  }
  return out;
}

std::map<std::string, TokenSequence> tokenize_corpus(const CorpusManifest& manifest,
                                                     SslBackend& backend,
                                                     const std::vector<Codebook>& codebooks) {
  const std::size_t N = backend.spec().n_layers;
  DMOS_CHECK(codebooks.size() == N, ErrorKind::MissingLayerCodebook,
             "tokenize_corpus: need one codebook per backend layer");
  for (std::size_t n = 0; n < N; ++n)
    DMOS_CHECK(codebooks[n].layer_index == n + 1, ErrorKind::MissingLayerCodebook,
               "tokenize_corpus: codebook layer indices must be 1..N in order");

  std::map<std::string, TokenSequence> out;
  for (const auto& u : manifest.entries) {
    PaddedBatch batch = collate({u});
    LayerStack stack = backend.encode(batch, manifest.sample_rate)[0];
    TokenSequence seq;
    seq.utterance_id = u.id;
    seq.n_layers = N;
    seq.frames = stack.frames;
    seq.tokens.resize(N * stack.frames);
    for (std::size_t n = 0; n < N; ++n) {
      const auto ids = assign(codebooks[n], stack.layers[n]);
      std::copy(ids.begin(), ids.end(), seq.tokens.begin() + n * stack.frames);
    }
    out.emplace(u.id, std::move(seq));
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'D', 'M', 'K', 'M'};

template <typename T>
void write_le(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_le(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return in.gcount() == sizeof(T);
}

}  // namespace

void save_codebooks(const std::vector<Codebook>& codebooks, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write codebooks: " + path);
  out.write(kMagic, 4);
  for (const auto& cb : codebooks) {
    write_le(out, cb.layer_index);
    write_le(out, cb.k);
    write_le(out, cb.dim);
    write_le(out, cb.seed);
    out.write(reinterpret_cast<const char*>(cb.centroids.data()),
              static_cast<std::streamsize>(cb.centroids.size() * sizeof(float)));
  }
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "short write: " + path);
}

std::vector<Codebook> load_codebooks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open codebooks: " + path);
  char magic[4];
  in.read(magic, 4);
  DMOS_CHECK(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
             ErrorKind::CorruptFile, "bad codebook magic: " + path);
  std::vector<Codebook> out;
  while (true) {
    Codebook cb;
    if (!read_le(in, cb.layer_index)) break;  // clean EOF
    DMOS_CHECK(read_le(in, cb.k) && read_le(in, cb.dim) && read_le(in, cb.seed),
               ErrorKind::CorruptFile, "truncated codebook header: " + path);
    DMOS_CHECK(cb.k >= 1 && cb.dim >= 1 && std::uint64_t(cb.k) * cb.dim < (1ull << 32),
               ErrorKind::CorruptFile, "implausible codebook header: " + path);
    cb.centroids.resize(std::size_t(cb.k) * cb.dim);
    in.read(reinterpret_cast<char*>(cb.centroids.data()),
            static_cast<std::streamsize>(cb.centroids.size() * sizeof(float)));
    DMOS_CHECK(in.gcount() == std::streamsize(cb.centroids.size() * sizeof(float)),
               ErrorKind::CorruptFile, "truncated centroid matrix: " + path);
    out.push_back(std::move(cb));
  }
  DMOS_CHECK(!out.empty(), ErrorKind::CorruptFile, "codebook file has no records: " + path);
  return out;
}

std::uint64_t codebook_file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open codebooks: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, std::size_t(in.gcount()), h);
  return h;
}

}  // namespace dmos
