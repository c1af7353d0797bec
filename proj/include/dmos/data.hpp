// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmos/tensor.hpp"

namespace dmos {

enum class Split { train, valid, test };

const char* split_name(Split s);
Split split_from_string(const std::string& s);  // throws MalformedRow

// One audio item with its averaged MOS label. Synthetic corpora carry the
// waveform inline; real corpora reference audio through audio_path and are
// decoded by the backend integration layer.
struct Utterance {
  std::string id;
  std::string audio_path;
  std::string system_id;
  double mos = 0.0;
  Split split = Split::train;
  std::vector<float> samples;  // inline waveform (synthetic / sidecar-loaded)

  bool has_samples() const { return !samples.empty(); }
};

struct CorpusManifest {
  std::string name;
  std::vector<Utterance> entries;
  std::size_t sample_rate = 16000;

  std::vector<std::size_t> split_indices(Split s) const;
  const Utterance* find(const std::string& id) const;
};

struct PaddedBatch {
  Tensor waveforms;                  // [B, T_max]
  std::vector<std::size_t> lengths;  // [B]
  std::vector<double> mos;           // [B]
  std::vector<std::uint8_t> mask;    // B x T_max, true iff t < lengths[b]
  std::vector<std::string> ids;
  std::vector<std::string> system_ids;

  std::size_t batch() const { return lengths.size(); }
  std::size_t max_len() const { return batch() ? waveforms.dim(1) : 0; }
  bool mask_at(std::size_t b, std::size_t t) const { return mask[b * max_len() + t] != 0; }
};

// Manifest file: UTF-8, header `id|audio_path|system_id|mos|split`, one
// |-delimited row per utterance. Rows whose audio_path is "sidecar" read
// their waveform from <path>.wav.bin / <path>.wav.idx next to the manifest.
CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& manifest, const std::string& path);

// Deterministic desk-scale corpus: tone/noise mixtures whose corruption level
// maps monotonically onto MOS (corruption 0 <=> MOS 5.0), spanning [1, 5],
// with at least two system ids and nonempty train/valid/test splits.
CorpusManifest generate_synthetic_corpus(std::size_t n_utts, std::uint64_t seed,
                                         std::size_t sample_rate = 16000);

PaddedBatch collate(const std::vector<Utterance>& utts);
PaddedBatch collate(const CorpusManifest& manifest, const std::vector<std::size_t>& indices);

}  // namespace dmos
