// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace dmos {

namespace {

constexpr const char* kHeader = "id|audio_path|system_id|mos|split";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == '|') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string sidecar_bin_path(const std::string& manifest_path) {
  return manifest_path + ".wav.bin";
}
std::string sidecar_idx_path(const std::string& manifest_path) {
  return manifest_path + ".wav.idx";
}

void load_sidecar(const std::string& manifest_path, CorpusManifest& m) {
  const std::string idx_path = sidecar_idx_path(manifest_path);
  const std::string bin_path = sidecar_bin_path(manifest_path);
  std::ifstream idx(idx_path);
  DMOS_CHECK(idx.good(), ErrorKind::MissingFile, "missing sidecar index: " + idx_path);
  std::ifstream bin(bin_path, std::ios::binary);
  DMOS_CHECK(bin.good(), ErrorKind::MissingFile, "missing sidecar data: " + bin_path);

  std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> index;
  std::string line;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    std::uint64_t offset = 0, count = 0;
    DMOS_CHECK(bool(ss >> id >> offset >> count), ErrorKind::CorruptFile,
               "bad sidecar index line: " + line);
    index[id] = {offset, count};
  }
  for (auto& u : m.entries) {
    if (u.audio_path != "sidecar") continue;
    auto it = index.find(u.id);
    DMOS_CHECK(it != index.end(), ErrorKind::CorruptFile,
               "sidecar index missing utterance " + u.id);
    const auto [offset, count] = it->second;
    u.samples.resize(count);
    bin.seekg(static_cast<std::streamoff>(offset * sizeof(float)));
    bin.read(reinterpret_cast<char*>(u.samples.data()),
             static_cast<std::streamsize>(count * sizeof(float)));
    DMOS_CHECK(bin.gcount() == std::streamsize(count * sizeof(float)),
               ErrorKind::CorruptFile, "sidecar data truncated for " + u.id);
  }
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  fail(ErrorKind::MalformedRow, "unknown split: " + s);
}

std::vector<std::size_t> CorpusManifest::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == s) out.push_back(i);
  return out;
}

const Utterance* CorpusManifest::find(const std::string& id) const {
  for (const auto& u : entries)
    if (u.id == id) return &u;
  return nullptr;
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open manifest: " + path);

  CorpusManifest m;
  m.name = std::filesystem::path(path).stem().string();

  std::string line;
  DMOS_CHECK(bool(std::getline(in, line)), ErrorKind::MalformedRow,
             "empty manifest: " + path);
  // tolerate an optional sample_rate suffix on the header line
  std::size_t line_no = 1;
  if (line.rfind(kHeader, 0) != 0)
    fail(ErrorKind::MalformedRow, path + ":1: bad header");
  const std::string rest = line.substr(std::strlen(kHeader));
  if (!rest.empty()) {
    if (rest.rfind("|sample_rate=", 0) != 0)
      fail(ErrorKind::MalformedRow, path + ":1: bad header suffix");
    m.sample_rate = std::stoul(rest.substr(std::strlen("|sample_rate=")));
  }

  std::unordered_set<std::string> seen;
  bool any_sidecar = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const std::string where = path + ":" + std::to_string(line_no);
    DMOS_CHECK(f.size() == 5, ErrorKind::MalformedRow, where + ": expected 5 fields");
    Utterance u;
    u.id = f[0];
    u.audio_path = f[1];
    u.system_id = f[2];
    DMOS_CHECK(!u.id.empty(), ErrorKind::MalformedRow, where + ": empty id");
    try {
      std::size_t used = 0;
      u.mos = std::stod(f[3], &used);
      DMOS_CHECK(used == f[3].size(), ErrorKind::MalformedRow, where + ": bad mos");
    } catch (const DmosError&) {
      throw;
    } catch (...) {
      fail(ErrorKind::MalformedRow, where + ": bad mos");
    }
    DMOS_CHECK(u.mos >= 1.0 && u.mos <= 5.0, ErrorKind::MalformedRow,
               where + ": mos outside [1,5]");
    try {
      u.split = split_from_string(f[4]);
    } catch (const DmosError&) {
      fail(ErrorKind::MalformedRow, where + ": bad split");
    }
    DMOS_CHECK(seen.insert(u.id).second, ErrorKind::DuplicateId,
               where + ": duplicate id " + u.id);
    any_sidecar = any_sidecar || u.audio_path == "sidecar";
    m.entries.push_back(std::move(u));
  }
  if (any_sidecar) load_sidecar(path, m);
  return m;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write manifest: " + path);
  out << kHeader << "|sample_rate=" << manifest.sample_rate << "\n";
  char mos_buf[32];
  bool any_inline = false;
  for (const auto& u : manifest.entries) {
    std::snprintf(mos_buf, sizeof(mos_buf), "%.6f", u.mos);
    const std::string ap = u.has_samples() ? "sidecar" : u.audio_path;
    any_inline = any_inline || u.has_samples();
    out << u.id << '|' << ap << '|' << u.system_id << '|' << mos_buf << '|'
        << split_name(u.split) << "\n";
  }
  out.close();

  if (!any_inline) return;
  std::ofstream bin(sidecar_bin_path(path), std::ios::binary);
  std::ofstream idx(sidecar_idx_path(path), std::ios::binary);
  DMOS_CHECK(bin.good() && idx.good(), ErrorKind::MissingFile,
             "cannot write sidecar for " + path);
  std::uint64_t offset = 0;
  for (const auto& u : manifest.entries) {
    if (!u.has_samples()) continue;
    idx << u.id << ' ' << offset << ' ' << u.samples.size() << "\n";
    bin.write(reinterpret_cast<const char*>(u.samples.data()),
              static_cast<std::streamsize>(u.samples.size() * sizeof(float)));
    offset += u.samples.size();
  }
}

CorpusManifest generate_synthetic_corpus(std::size_t n_utts, std::uint64_t seed,
                                         std::size_t sample_rate) {
  DMOS_CHECK(n_utts >= 3, ErrorKind::InvalidCount,
             "synthetic corpus needs at least 3 utterances");

  const std::size_t n_systems = std::clamp<std::size_t>(n_utts / 5, 2, 6);

  // Corruption levels stratified by system so per-system mean quality is
  // ordered, then rescaled to span [0, 1] exactly.
  std::vector<double> corruption(n_utts);
  for (std::size_t i = 0; i < n_utts; ++i) {
    Rng r(Rng::derive(seed, i * 2 + 1));
    const std::size_t sys = i % n_systems;
    corruption[i] = (double(sys) + r.uniform()) / double(n_systems);
  }
  const auto [lo_it, hi_it] = std::minmax_element(corruption.begin(), corruption.end());
  const double lo = *lo_it, hi = *hi_it;
  for (double& c : corruption) c = (c - lo) / (hi - lo);

  CorpusManifest m;
  m.name = "synthetic";
  m.sample_rate = sample_rate;
  m.entries.reserve(n_utts);
  char buf[32];
  for (std::size_t i = 0; i < n_utts; ++i) {
    Rng r(Rng::derive(seed, i * 2 + 2));
    Utterance u;
    std::snprintf(buf, sizeof(buf), "utt%04zu", i);
    u.id = buf;
    std::snprintf(buf, sizeof(buf), "sys%02zu", i % n_systems);
    u.system_id = buf;
    const double c = corruption[i];
    u.mos = 5.0 - 4.0 * c;

    const double dur = 0.35 + 0.3 * r.uniform();
    const std::size_t n = static_cast<std::size_t>(dur * double(sample_rate));
    const double f1 = r.uniform(120.0, 400.0);
    const double f2 = r.uniform(800.0, 2000.0);
    const double p1 = r.uniform(0.0, 6.283185307179586);
    const double p2 = r.uniform(0.0, 6.283185307179586);
    u.samples.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double x = double(t) / double(sample_rate);
      const double tone = 0.6 * std::sin(6.283185307179586 * f1 * x + p1) +
                          0.3 * std::sin(6.283185307179586 * f2 * x + p2);
      const double noise = 0.7 * r.normal();
      u.samples[t] = static_cast<float>((1.0 - c) * tone + c * noise);
    }

    if (i == 1) {
      u.split = Split::valid;
    } else if (i == 2) {
      u.split = Split::test;
    } else {
      const std::size_t rphase = i % 7;
      u.split = rphase == 5 ? Split::valid : rphase == 6 ? Split::test : Split::train;
    }
    m.entries.push_back(std::move(u));
  }
  return m;
}

PaddedBatch collate(const std::vector<Utterance>& utts) {
  DMOS_CHECK(!utts.empty(), ErrorKind::EmptyBatch, "collate: empty utterance list");
  const std::size_t B = utts.size();
  std::size_t t_max = 0;
  for (const auto& u : utts) {
    DMOS_CHECK(u.has_samples(), ErrorKind::EmptyBatch,
               "collate: utterance " + u.id + " has no waveform loaded");
    t_max = std::max(t_max, u.samples.size());
  }
  PaddedBatch batch;
  batch.waveforms = Tensor({B, t_max});
  batch.mask.assign(B * t_max, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& u = utts[b];
    batch.lengths.push_back(u.samples.size());
    batch.mos.push_back(u.mos);
    batch.ids.push_back(u.id);
    batch.system_ids.push_back(u.system_id);
    for (std::size_t t = 0; t < u.samples.size(); ++t) {
      batch.waveforms(b, t) = double(u.samples[t]);
      batch.mask[b * t_max + t] = 1;
    }
  }
  return batch;
}

PaddedBatch collate(const CorpusManifest& manifest, const std::vector<std::size_t>& indices) {
  std::vector<Utterance> utts;
  utts.reserve(indices.size());
  for (auto i : indices) utts.push_back(manifest.entries.at(i));
  return collate(utts);
}

}  // namespace dmos
