// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmos/data.hpp"
#include "dmos/model.hpp"
#include "dmos/ssl_backend.hpp"
#include "dmos/tokenizer.hpp"

namespace dmos {

struct TrainingConfig {
  std::size_t steps = 10000;
  std::size_t batch_size = 32;
  double lr = 1e-4;  // one-cycle peak
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 1e-4;
  double clip_norm = 10.0;
  double alpha = 0.1;
  std::size_t checkpoint_every = 1000;
  std::uint64_t seed = 1;
  // one-cycle internals (declared defaults, echoed into the run config)
  double warmup_frac = 0.3;
  double div_factor = 25.0;   // start lr = peak / div_factor
  double final_div = 400.0;   // final lr = peak / final_div
  std::size_t eval_batch = 32;
};

// One-cycle schedule: linear warmup to peak over warmup_frac of the run, then
// cosine decay toward peak/final_div. Throws StepOutOfRange outside
// [0, total_steps].
double one_cycle_lr(std::size_t step, std::size_t total_steps, double peak_lr,
                    double warmup_frac = 0.3, double div_factor = 25.0,
                    double final_div = 400.0);
std::size_t one_cycle_peak_step(std::size_t total_steps, double warmup_frac = 0.3);

// Global-norm clipping across a parameter group; returns the pre-clip norm.
double clip_gradients(std::vector<NamedParam>& params, double clip_norm);

// Decoupled-weight-decay Adam over named parameter leaves.
class AdamW {
public:
  AdamW(std::vector<NamedParam> params, const TrainingConfig& config);
  void zero_grad();
  void step(double lr);  // applies update t+1
  std::vector<NamedParam>& params() { return params_; }
  std::size_t t() const { return t_; }

  // state access for resume
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  void set_t(std::size_t t) { t_ = t; }

private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, weight_decay_;
  std::size_t t_ = 0;
};

struct TrainJob {
  const CorpusManifest* manifest = nullptr;
  BackendSpec backend_spec;
  std::uint64_t backend_seed = 1;
  bool finetune_frontend = true;
  ModelConfig model_config;
  TrainingConfig training;
  std::string codebooks_path;  // required for token_prediction
  std::string run_dir;
  std::string config_echo;  // verbatim run config text
  bool resume = false;
  std::size_t stop_after = 0;  // pause this invocation after N steps (0 = run out)
};

struct TrainResult {
  std::size_t best_step = 0;
  bool best_srcc_defined = false;
  double best_valid_srcc = 0.0;
  std::string best_checkpoint;
  std::string log_path;
  std::string run_dir;
  double first_l_mos = 0.0;
  double final_l_mos = 0.0;
};

// Full recipe: AdamW + one-cycle schedule + global-norm clipping, validation
// utterance-SRCC checkpoint selection every checkpoint_every steps (ties keep
// the earlier step). Resumable from <run_dir>/state.bin with an identical
// loss trajectory.
TrainResult train(const TrainJob& job);

}  // namespace dmos
