// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <map>

namespace dmos {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

json meta_to_json(const CheckpointMeta& m) {
  json j;
  j["model"] = {{"n_layers", m.model_config.n_layers},
                {"ssl_dim", m.model_config.ssl_dim},
                {"hidden_dim", m.model_config.hidden_dim},
                {"fp_blocks", m.model_config.fp_blocks},
                {"conv_kernel", m.model_config.conv_kernel},
                {"blstm_layers", m.model_config.blstm_layers},
                {"n_clusters", m.model_config.n_clusters},
                {"head_mode", head_mode_name(m.model_config.head_mode)}};
  j["backend"] = {{"name", m.backend_spec.name},
                  {"n_layers", m.backend_spec.n_layers},
                  {"dim", m.backend_spec.dim},
                  {"frame_rate", m.backend_spec.frame_rate},
                  {"trainable", m.backend_spec.trainable},
                  {"seed", m.backend_seed},
                  {"finetune_frontend", m.finetune_frontend}};
  j["model_seed"] = m.model_seed;
  j["sample_rate"] = m.sample_rate;
  j["codebook_hash"] = m.codebook_hash;
  j["trained_steps"] = m.trained_steps;
  if (m.valid_srcc_defined)
    j["valid_srcc"] = m.valid_srcc;
  else
    j["valid_srcc"] = nullptr;
  return j;
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  const auto& jm = j.at("model");
  m.model_config.n_layers = jm.at("n_layers").get<std::size_t>();
  m.model_config.ssl_dim = jm.at("ssl_dim").get<std::size_t>();
  m.model_config.hidden_dim = jm.at("hidden_dim").get<std::size_t>();
  m.model_config.fp_blocks = jm.at("fp_blocks").get<std::size_t>();
  m.model_config.conv_kernel = jm.at("conv_kernel").get<std::size_t>();
  m.model_config.blstm_layers = jm.at("blstm_layers").get<std::size_t>();
  m.model_config.n_clusters = jm.at("n_clusters").get<std::size_t>();
  m.model_config.head_mode = head_mode_from_string(jm.at("head_mode").get<std::string>());
  const auto& jb = j.at("backend");
  m.backend_spec.name = jb.at("name").get<std::string>();
  m.backend_spec.n_layers = jb.at("n_layers").get<std::size_t>();
  m.backend_spec.dim = jb.at("dim").get<std::size_t>();
  m.backend_spec.frame_rate = jb.at("frame_rate").get<double>();
  m.backend_spec.trainable = jb.at("trainable").get<bool>();
  m.backend_seed = jb.at("seed").get<std::uint64_t>();
  m.finetune_frontend = jb.at("finetune_frontend").get<bool>();
  m.model_seed = j.at("model_seed").get<std::uint64_t>();
  m.sample_rate = j.at("sample_rate").get<std::size_t>();
  m.codebook_hash = j.at("codebook_hash").get<std::string>();
  m.trained_steps = j.at("trained_steps").get<std::size_t>();
  if (j.at("valid_srcc").is_null()) {
    m.valid_srcc_defined = false;
  } else {
    m.valid_srcc_defined = true;
    m.valid_srcc = j.at("valid_srcc").get<double>();
  }
  return m;
}

struct TensorRef {
  std::string name;
  const Tensor* tensor;
};

std::vector<TensorRef> collect_tensors(DistilMosModel& model, SslBackend& backend) {
  std::vector<TensorRef> out;
  for (auto& p : model.parameters()) out.push_back({"model." + p.name, &p.var.val()});
  for (auto& b : model.buffers()) out.push_back({"buffer." + b.name, b.tensor});
  for (auto& p : backend.parameters()) out.push_back({"backend." + p.name, &p.var.val()});
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     DistilMosModel& model, SslBackend& backend) {
  json header = meta_to_json(meta);
  auto tensors = collect_tensors(model, backend);
  json dir = json::array();
  for (const auto& t : tensors)
    dir.push_back({{"name", t.name}, {"shape", t.tensor->shape}});
  header["tensors"] = dir;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& t : tensors)
    out.write(reinterpret_cast<const char*>(t.tensor->v.data()),
              static_cast<std::streamsize>(t.tensor->v.size() * sizeof(double)));
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "short checkpoint write: " + path);
}

namespace {

json read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  DMOS_CHECK(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
             ErrorKind::CorruptFile, "bad checkpoint magic: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  DMOS_CHECK(in.gcount() == sizeof(version) && version == kVersion,
             ErrorKind::IncompatibleCheckpoint,
             "unsupported checkpoint version in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  DMOS_CHECK(in.gcount() == sizeof(hlen) && hlen > 0 && hlen < (1ull << 24),
             ErrorKind::CorruptFile, "bad checkpoint header length: " + path);
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  DMOS_CHECK(std::uint64_t(in.gcount()) == hlen, ErrorKind::CorruptFile,
             "truncated checkpoint header: " + path);
  json header = json::parse(header_str, nullptr, false);
  DMOS_CHECK(!header.is_discarded(), ErrorKind::CorruptFile,
             "unparseable checkpoint header: " + path);
  return header;
}

}  // namespace

CheckpointMeta peek_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open checkpoint: " + path);
  return meta_from_json(read_header(in, path));
}

LoadedCheckpoint load_checkpoint(const std::string& path, bool inference_only) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open checkpoint: " + path);
  json header = read_header(in, path);
  LoadedCheckpoint ck;
  ck.meta = meta_from_json(header);

  ck.backend = make_backend(ck.meta.backend_spec, ck.meta.backend_seed,
                            ck.meta.finetune_frontend);
  ck.model = std::make_unique<DistilMosModel>(ck.meta.model_config, ck.meta.model_seed,
                                              inference_only);

  std::map<std::string, Tensor*> registry;
  for (auto& p : ck.model->parameters()) registry["model." + p.name] = &p.var.n->val;
  for (auto& b : ck.model->buffers()) registry["buffer." + b.name] = b.tensor;
  for (auto& p : ck.backend->parameters()) registry["backend." + p.name] = &p.var.n->val;

  std::size_t matched = 0;
  for (const auto& rec : header.at("tensors")) {
    const std::string name = rec.at("name").get<std::string>();
    const auto shape = rec.at("shape").get<std::vector<std::size_t>>();
    const std::size_t numel = Tensor::numel_of(shape);
    auto it = registry.find(name);
    if (it == registry.end()) {
      const bool skippable = inference_only && name.rfind("model.aux.", 0) == 0;
      DMOS_CHECK(skippable, ErrorKind::IncompatibleCheckpoint,
                 "checkpoint tensor has no destination: " + name);
      in.seekg(static_cast<std::streamoff>(numel * sizeof(double)), std::ios::cur);
      continue;
    }
    DMOS_CHECK(it->second->shape == shape, ErrorKind::IncompatibleCheckpoint,
               "checkpoint tensor shape mismatch: " + name);
    in.read(reinterpret_cast<char*>(it->second->v.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    DMOS_CHECK(std::size_t(in.gcount()) == numel * sizeof(double),
               ErrorKind::CorruptFile, "truncated tensor data: " + name);
    ++matched;
  }
  DMOS_CHECK(matched == registry.size(), ErrorKind::IncompatibleCheckpoint,
             "checkpoint is missing tensors for this configuration");
  return ck;
}

}  // namespace dmos
