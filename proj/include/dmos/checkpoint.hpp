// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "dmos/model.hpp"
#include "dmos/ssl_backend.hpp"

namespace dmos {

struct CheckpointMeta {
  ModelConfig model_config;
  BackendSpec backend_spec;
  std::uint64_t backend_seed = 0;
  bool finetune_frontend = true;
  std::uint64_t model_seed = 0;
  std::size_t sample_rate = 16000;
  std::string codebook_hash;  // hex of the codebook file trained against, "" if none
  std::size_t trained_steps = 0;
  bool valid_srcc_defined = false;
  double valid_srcc = 0.0;
};

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<SslBackend> backend;  // fine-tuned encoder weights
  std::unique_ptr<DistilMosModel> model;
};

// Versioned container: JSON header (meta + tensor directory) followed by raw
// little-endian float64 tensors. Bit-exact round trip.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     DistilMosModel& model, SslBackend& backend);

// inference_only skips the auxiliary predictor heads entirely: they are never
// allocated and their stored tensors are ignored.
LoadedCheckpoint load_checkpoint(const std::string& path, bool inference_only = false);

CheckpointMeta peek_checkpoint_meta(const std::string& path);

}  // namespace dmos
