// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dmos/model.hpp"
#include "dmos/ssl_backend.hpp"
#include "dmos/trainer.hpp"

namespace dmos {

// Flat sectioned key-value config. Unknown keys are rejected so typos fail
// loudly at command start.
struct RunConfig {
  BackendSpec backend;
  std::uint64_t backend_seed = 1;
  bool finetune_frontend = true;
  std::string backend_checkpoint;  // opaque path for real encoder adapters

  std::uint32_t tokenizer_k = 200;
  std::uint32_t tokenizer_batch_size = 64;
  std::uint64_t tokenizer_seed = 1;

  ModelConfig model;
  TrainingConfig training;

  std::string manifest_path;
  std::string codebooks_path;
  std::string run_dir;

  std::string echo;  // verbatim file contents
};

RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);
std::string render_run_config(const RunConfig& config);

}  // namespace dmos
