// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dmos/losses.hpp"
#include "dmos/ssl_backend.hpp"
#include "dmos/trainer.hpp"

using namespace dmos;

namespace {

PaddedBatch batch_of(const std::vector<std::vector<float>>& waves) {
  std::vector<Utterance> utts;
  for (std::size_t i = 0; i < waves.size(); ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.system_id = "s";
    u.mos = 3.0;
    u.samples = waves[i];
    utts.push_back(std::move(u));
  }
  return collate(utts);
}

std::vector<float> random_wave(Rng& rng, std::size_t n) {
  std::vector<float> w(n);
  for (auto& s : w) s = float(0.5 * rng.normal());
  return w;
}

}  // namespace

TEST_CASE("one second at 16 kHz with frame_rate 50 gives 50 frames") {
  BackendSpec spec;
  spec.frame_rate = 50.0;
  SyntheticBackend backend(spec, 1);
  CHECK(backend.frame_count(16000, 16000) == 50);
}

TEST_CASE("sub-window input is rejected") {
  BackendSpec spec;
  SyntheticBackend backend(spec, 1);
  CHECK_THROWS_AS(backend.frame_count(100, 16000), DmosError);
}

TEST_CASE("encode is deterministic") {
  BackendSpec spec{"synthetic", 3, 16, 50.0, true};
  SyntheticBackend backend(spec, 9);
  Rng rng(4);
  PaddedBatch batch = batch_of({random_wave(rng, 9000)});
  auto a = backend.encode(batch, 16000);
  auto b = backend.encode(batch, 16000);
  CHECK(a[0].layers[1].v == b[0].layers[1].v);
}

TEST_CASE("longer waveform yields strictly more frames") {
  BackendSpec spec;
  SyntheticBackend backend(spec, 2);
  Rng rng(6);
  PaddedBatch batch = batch_of({random_wave(rng, 16000), random_wave(rng, 32000)});
  auto stacks = backend.encode(batch, 16000);
  CHECK(stacks[0].frames < stacks[1].frames);
  CHECK(stacks[0].frames == 50);
  CHECK(stacks[1].frames == 100);
}

TEST_CASE("identical seeds build identical parameters") {
  BackendSpec spec{"synthetic", 4, 32, 50.0, true};
  SyntheticBackend a(spec, 1), b(spec, 1), c(spec, 2);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].var.val().v == pb[i].var.val().v);
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    any_diff = any_diff || pa[i].var.val().v != pc[i].var.val().v;
  CHECK(any_diff);
}

TEST_CASE("zero waveform encodes to finite features") {
  BackendSpec spec{"synthetic", 4, 16, 50.0, true};
  SyntheticBackend backend(spec, 5);
  PaddedBatch batch = batch_of({std::vector<float>(8000, 0.0f)});
  auto stacks = backend.encode(batch, 16000);
  for (const auto& layer : stacks[0].layers) CHECK(layer.all_finite());
}

TEST_CASE("layer outputs are distinct (cosine < 0.999)") {
  BackendSpec spec{"synthetic", 4, 32, 50.0, true};
  SyntheticBackend backend(spec, 1);
  Rng rng(17);
  PaddedBatch batch = batch_of({random_wave(rng, 16000)});
  auto stack = backend.encode(batch, 16000)[0];
  const auto& l1 = stack.layers[0].v;
  const auto& l4 = stack.layers[3].v;
  double dot = 0.0, n1 = 0.0, n4 = 0.0;
  for (std::size_t i = 0; i < l1.size(); ++i) {
    dot += l1[i] * l4[i];
    n1 += l1[i] * l1[i];
    n4 += l4[i] * l4[i];
  }
  const double cosine = dot / std::sqrt(n1 * n4);
  CHECK(cosine < 0.999);
}

TEST_CASE("property: frame counts match brute-force window counting") {
  // small hop so lengths 1..1000 sweep several boundaries: 8 kHz at 1 kHz -> hop 8
  BackendSpec spec{"synthetic", 1, 4, 1000.0, true};
  SyntheticBackend backend(spec, 3);
  const std::size_t hop = 8, win = 8;
  for (std::size_t len = 1; len <= 1000; ++len) {
    std::size_t brute = 0;
    for (std::size_t start = 0; start + win <= len; start += hop) ++brute;
    if (len < win) {
      CHECK_THROWS_AS(backend.frame_count(len, 8000), DmosError);
    } else {
      CHECK(backend.frame_count(len, 8000) == brute);
    }
  }
}

TEST_CASE("frozen backend parameters stay bit-identical over training steps") {
  BackendSpec spec{"synthetic", 2, 8, 50.0, /*trainable=*/false};
  SyntheticBackend backend(spec, 7);
  auto params_before = backend.parameters();
  std::vector<Tensor> snapshot;
  for (auto& p : params_before) snapshot.push_back(p.var.val());

  Rng rng(8);
  PaddedBatch batch = batch_of({random_wave(rng, 6400), random_wave(rng, 9600)});
  TrainingConfig tc;
  std::vector<NamedParam> params = backend.parameters();
  AdamW opt(params, tc);
  for (int step = 0; step < 2; ++step) {
    ad::Graph g;
    BatchFeatures f = backend.encode_batch(g, batch, 16000, true);
    Tensor target(f.layers.back().val().shape, 0.25);
    ad::Var loss = g.masked_mse_time(f.layers.back(), target, f.mask);
    opt.zero_grad();
    g.backward(loss);
    opt.step(1e-3);
  }
  auto params_after = backend.parameters();
  for (std::size_t i = 0; i < params_after.size(); ++i)
    CHECK(params_after[i].var.val().v == snapshot[i].v);
}

TEST_CASE("trainable backend receives gradients") {
  BackendSpec spec{"synthetic", 2, 8, 50.0, /*trainable=*/true};
  SyntheticBackend backend(spec, 7);
  Rng rng(8);
  PaddedBatch batch = batch_of({random_wave(rng, 6400)});
  ad::Graph g;
  BatchFeatures f = backend.encode_batch(g, batch, 16000, true);
  Tensor target(f.layers.back().val().shape, 0.25);
  ad::Var loss = g.masked_mse_time(f.layers.back(), target, f.mask);
  for (auto& p : backend.parameters()) p.var.n->zero_grad();
  g.backward(loss);
  double norm = 0.0;
  for (auto& p : backend.parameters())
    if (p.var.n->grad_alloc)
      for (double gv : p.var.n->grad.v) norm += gv * gv;
  CHECK(norm > 0.0);
}

TEST_CASE("padded frames come out masked and zero") {
  BackendSpec spec{"synthetic", 2, 8, 50.0, true};
  SyntheticBackend backend(spec, 7);
  Rng rng(9);
  PaddedBatch batch = batch_of({random_wave(rng, 6400), random_wave(rng, 12800)});
  ad::Graph g;
  g.grad_enabled = false;
  BatchFeatures f = backend.encode_batch(g, batch, 16000, false);
  const std::size_t t0 = f.mask.count_row(0);
  CHECK(t0 == 20);
  CHECK(f.mask.count_row(1) == 40);
  for (std::size_t t = t0; t < f.mask.frames; ++t) {
    CHECK(!f.mask.at(0, t));
    for (std::size_t d = 0; d < 8; ++d) CHECK(f.layers[0].val().at3(0, t, d) == 0.0);
  }
}
