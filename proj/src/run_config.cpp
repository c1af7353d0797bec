// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dmos {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct IniData {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::string origin;

  bool has(const std::string& sec, const std::string& key) const {
    auto s = sections.find(sec);
    return s != sections.end() && s->second.count(key) > 0;
  }

  std::string get(const std::string& sec, const std::string& key,
                  const std::string& fallback) const {
    auto s = sections.find(sec);
    if (s == sections.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }
};

IniData parse_ini(const std::string& text, const std::string& origin) {
  IniData ini;
  ini.origin = origin;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      DMOS_CHECK(t.back() == ']', ErrorKind::BadConfig,
                 origin + ":" + std::to_string(line_no) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      ini.sections[section];
      continue;
    }
    const auto eq = t.find('=');
    DMOS_CHECK(eq != std::string::npos && !section.empty(), ErrorKind::BadConfig,
               origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    DMOS_CHECK(!key.empty(), ErrorKind::BadConfig,
               origin + ":" + std::to_string(line_no) + ": empty key");
    ini.sections[section][key] = val;
  }
  return ini;
}

double to_double(const IniData& ini, const std::string& sec, const std::string& key,
                 double fallback) {
  if (!ini.has(sec, key)) return fallback;
  const std::string v = ini.get(sec, key, "");
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    DMOS_CHECK(used == v.size(), ErrorKind::BadConfig, "");
    return x;
  } catch (...) {
    fail(ErrorKind::BadConfig, ini.origin + ": [" + sec + "] " + key +
                                   " is not a number: " + v);
  }
}

std::uint64_t to_u64(const IniData& ini, const std::string& sec, const std::string& key,
                     std::uint64_t fallback) {
  if (!ini.has(sec, key)) return fallback;
  const std::string v = ini.get(sec, key, "");
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    DMOS_CHECK(used == v.size(), ErrorKind::BadConfig, "");
    return x;
  } catch (...) {
    fail(ErrorKind::BadConfig, ini.origin + ": [" + sec + "] " + key +
                                   " is not an integer: " + v);
  }
}

bool to_bool(const IniData& ini, const std::string& sec, const std::string& key,
             bool fallback) {
  if (!ini.has(sec, key)) return fallback;
  const std::string v = ini.get(sec, key, "");
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::BadConfig, ini.origin + ": [" + sec + "] " + key +
                                 " must be true/false: " + v);
}

const std::map<std::string, std::vector<std::string>> kKnownKeys = {
    {"backend", {"name", "n_layers", "dim", "frame_rate", "trainable", "seed",
                 "finetune_frontend", "checkpoint_path"}},
    {"tokenizer", {"k", "batch_size", "seed"}},
    {"model", {"hidden_dim", "fp_blocks", "conv_kernel", "blstm_layers", "head_mode"}},
    {"training", {"steps", "batch_size", "lr", "beta1", "beta2", "weight_decay",
                  "clip_norm", "alpha", "checkpoint_every", "seed", "warmup_frac",
                  "div_factor", "final_div", "eval_batch"}},
    {"paths", {"manifest", "codebooks", "run_dir"}},
};

void reject_unknown(const IniData& ini) {
  for (const auto& [sec, keys] : ini.sections) {
    auto it = kKnownKeys.find(sec);
    DMOS_CHECK(it != kKnownKeys.end(), ErrorKind::BadConfig,
               ini.origin + ": unknown section [" + sec + "]");
    for (const auto& [key, _] : keys)
      DMOS_CHECK(std::find(it->second.begin(), it->second.end(), key) != it->second.end(),
                 ErrorKind::BadConfig,
                 ini.origin + ": unknown key '" + key + "' in [" + sec + "]");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  IniData ini = parse_ini(text, origin);
  reject_unknown(ini);

  RunConfig rc;
  rc.echo = text;

  rc.backend.name = ini.get("backend", "name", "synthetic");
  rc.backend.n_layers = std::size_t(to_u64(ini, "backend", "n_layers", 4));
  rc.backend.dim = std::size_t(to_u64(ini, "backend", "dim", 32));
  rc.backend.frame_rate = to_double(ini, "backend", "frame_rate", 50.0);
  rc.backend.trainable = to_bool(ini, "backend", "trainable", true);
  rc.backend_seed = to_u64(ini, "backend", "seed", 1);
  rc.finetune_frontend = to_bool(ini, "backend", "finetune_frontend", true);
  rc.backend_checkpoint = ini.get("backend", "checkpoint_path", "");

  rc.tokenizer_k = std::uint32_t(to_u64(ini, "tokenizer", "k", 200));
  rc.tokenizer_batch_size = std::uint32_t(to_u64(ini, "tokenizer", "batch_size", 64));
  rc.tokenizer_seed = to_u64(ini, "tokenizer", "seed", 1);

  rc.model.n_layers = rc.backend.n_layers;
  rc.model.ssl_dim = rc.backend.dim;
  rc.model.hidden_dim = std::size_t(to_u64(ini, "model", "hidden_dim", 256));
  rc.model.fp_blocks = std::size_t(to_u64(ini, "model", "fp_blocks", 3));
  rc.model.conv_kernel = std::size_t(to_u64(ini, "model", "conv_kernel", 3));
  rc.model.blstm_layers = std::size_t(to_u64(ini, "model", "blstm_layers", 1));
  rc.model.n_clusters = rc.tokenizer_k;
  rc.model.head_mode =
      head_mode_from_string(ini.get("model", "head_mode", "token_prediction"));

  rc.training.steps = std::size_t(to_u64(ini, "training", "steps", 10000));
  rc.training.batch_size = std::size_t(to_u64(ini, "training", "batch_size", 32));
  rc.training.lr = to_double(ini, "training", "lr", 1e-4);
  rc.training.beta1 = to_double(ini, "training", "beta1", 0.9);
  rc.training.beta2 = to_double(ini, "training", "beta2", 0.98);
  rc.training.weight_decay = to_double(ini, "training", "weight_decay", 1e-4);
  rc.training.clip_norm = to_double(ini, "training", "clip_norm", 10.0);
  rc.training.alpha = to_double(ini, "training", "alpha", 0.1);
  rc.training.checkpoint_every = std::size_t(to_u64(ini, "training", "checkpoint_every", 1000));
  rc.training.seed = to_u64(ini, "training", "seed", 1);
  rc.training.warmup_frac = to_double(ini, "training", "warmup_frac", 0.3);
  rc.training.div_factor = to_double(ini, "training", "div_factor", 25.0);
  rc.training.final_div = to_double(ini, "training", "final_div", 400.0);
  rc.training.eval_batch = std::size_t(to_u64(ini, "training", "eval_batch", 32));

  rc.manifest_path = ini.get("paths", "manifest", "");
  rc.codebooks_path = ini.get("paths", "codebooks", "");
  rc.run_dir = ini.get("paths", "run_dir", "");
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

std::string render_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "[backend]\n";
  out << "name = " << c.backend.name << "\n";
  out << "n_layers = " << c.backend.n_layers << "\n";
  out << "dim = " << c.backend.dim << "\n";
  out << "frame_rate = " << c.backend.frame_rate << "\n";
  out << "trainable = " << (c.backend.trainable ? "true" : "false") << "\n";
  out << "seed = " << c.backend_seed << "\n";
  out << "finetune_frontend = " << (c.finetune_frontend ? "true" : "false") << "\n";
  if (!c.backend_checkpoint.empty())
    out << "checkpoint_path = " << c.backend_checkpoint << "\n";
  out << "\n[tokenizer]\n";
  out << "k = " << c.tokenizer_k << "\n";
  out << "batch_size = " << c.tokenizer_batch_size << "\n";
  out << "seed = " << c.tokenizer_seed << "\n";
  out << "\n[model]\n";
  out << "hidden_dim = " << c.model.hidden_dim << "\n";
  out << "fp_blocks = " << c.model.fp_blocks << "\n";
  out << "conv_kernel = " << c.model.conv_kernel << "\n";
  out << "blstm_layers = " << c.model.blstm_layers << "\n";
  out << "head_mode = " << head_mode_name(c.model.head_mode) << "\n";
  out << "\n[training]\n";
  out << "steps = " << c.training.steps << "\n";
  out << "batch_size = " << c.training.batch_size << "\n";
  out << "lr = " << c.training.lr << "\n";
  out << "beta1 = " << c.training.beta1 << "\n";
  out << "beta2 = " << c.training.beta2 << "\n";
  out << "weight_decay = " << c.training.weight_decay << "\n";
  out << "clip_norm = " << c.training.clip_norm << "\n";
  out << "alpha = " << c.training.alpha << "\n";
  out << "checkpoint_every = " << c.training.checkpoint_every << "\n";
  out << "seed = " << c.training.seed << "\n";
  out << "warmup_frac = " << c.training.warmup_frac << "\n";
  out << "div_factor = " << c.training.div_factor << "\n";
  out << "final_div = " << c.training.final_div << "\n";
  out << "eval_batch = " << c.training.eval_batch << "\n";
  out << "\n[paths]\n";
  out << "manifest = " << c.manifest_path << "\n";
  out << "codebooks = " << c.codebooks_path << "\n";
  out << "run_dir = " << c.run_dir << "\n";
  return out.str();
}

}  // namespace dmos
