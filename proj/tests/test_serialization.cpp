// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "dmos/checkpoint.hpp"
#include "dmos/run_config.hpp"
#include "test_util.hpp"

using namespace dmos;
using dmos_test::TempDir;

namespace {

struct Fixture {
  BackendSpec spec{"synthetic", 3, 8, 50.0, true};
  ModelConfig mc;

  Fixture() {
    mc.n_layers = 3;
    mc.ssl_dim = 8;
    mc.hidden_dim = 12;
    mc.n_clusters = 6;
    mc.head_mode = HeadMode::token_prediction;
  }

  CheckpointMeta meta() const {
    CheckpointMeta m;
    m.model_config = mc;
    m.backend_spec = spec;
    m.backend_seed = 77;
    m.model_seed = 99;
    m.sample_rate = 16000;
    m.codebook_hash = "deadbeefdeadbeef";
    m.trained_steps = 123;
    m.valid_srcc_defined = true;
    m.valid_srcc = 0.8125;
    return m;
  }
};

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir tmp("ckpt");
  Fixture fx;
  SyntheticBackend backend(fx.spec, 77);
  DistilMosModel model(fx.mc, 99);
  // make buffers nontrivial
  model.fp_[0].bn_state.running_mean.v[3] = 0.625;
  model.fp_[1].bn_state.running_var.v[5] = 2.5;

  const std::string path = tmp.file("m.ckpt");
  save_checkpoint(path, fx.meta(), model, backend);
  LoadedCheckpoint ck = load_checkpoint(path);

  CHECK(ck.meta.trained_steps == 123);
  CHECK(ck.meta.valid_srcc == 0.8125);
  CHECK(ck.meta.codebook_hash == "deadbeefdeadbeef");
  CHECK(ck.meta.model_config.head_mode == HeadMode::token_prediction);

  auto orig_params = model.parameters();
  auto load_params = ck.model->parameters();
  REQUIRE(orig_params.size() == load_params.size());
  for (std::size_t i = 0; i < orig_params.size(); ++i) {
    CHECK(orig_params[i].name == load_params[i].name);
    CHECK(orig_params[i].var.val().v == load_params[i].var.val().v);
  }
  auto orig_buf = model.buffers();
  auto load_buf = ck.model->buffers();
  for (std::size_t i = 0; i < orig_buf.size(); ++i)
    CHECK(orig_buf[i].tensor->v == load_buf[i].tensor->v);
  auto orig_bk = backend.parameters();
  auto load_bk = ck.backend->parameters();
  for (std::size_t i = 0; i < orig_bk.size(); ++i)
    CHECK(orig_bk[i].var.val().v == load_bk[i].var.val().v);

  // a second save of the loaded state is byte-identical
  save_checkpoint(tmp.file("m2.ckpt"), ck.meta, *ck.model, *ck.backend);
  CHECK(dmos_test::read_file(tmp.file("m2.ckpt")) == dmos_test::read_file(path));
}

TEST_CASE("inference-only load skips auxiliary heads") {
  TempDir tmp("ckpt");
  Fixture fx;
  SyntheticBackend backend(fx.spec, 77);
  DistilMosModel model(fx.mc, 99);
  const std::string path = tmp.file("m.ckpt");
  save_checkpoint(path, fx.meta(), model, backend);

  LoadedCheckpoint ck = load_checkpoint(path, /*inference_only=*/true);
  CHECK(!ck.model->has_aux_heads());
  CHECK(ck.model->total_parameter_count() == ck.model->inference_parameter_count());
  // non-aux tensors still load exactly
  CHECK(ck.model->projector_.w.val().v == model.projector_.w.val().v);
}

TEST_CASE("corrupt and incompatible checkpoints are rejected") {
  TempDir tmp("ckpt");
  Fixture fx;
  SyntheticBackend backend(fx.spec, 77);
  DistilMosModel model(fx.mc, 99);
  const std::string path = tmp.file("m.ckpt");
  save_checkpoint(path, fx.meta(), model, backend);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.ckpt")), DmosError);
  }
  SUBCASE("bad magic") {
    std::string bytes = dmos_test::read_file(path);
    bytes[1] = 'X';
    std::ofstream out(tmp.file("bad.ckpt"), std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.close();
    try {
      load_checkpoint(tmp.file("bad.ckpt"));
      FAIL("expected CorruptFile");
    } catch (const DmosError& e) {
      CHECK(e.kind() == ErrorKind::CorruptFile);
    }
  }
  SUBCASE("truncated tensors") {
    std::string bytes = dmos_test::read_file(path);
    std::ofstream out(tmp.file("trunc.ckpt"), std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(tmp.file("trunc.ckpt")), DmosError);
  }
}

TEST_CASE("run config defaults mirror the training recipe") {
  RunConfig rc = parse_run_config("", "inline");
  CHECK(rc.training.steps == 10000);
  CHECK(rc.training.batch_size == 32);
  CHECK(rc.training.lr == 1e-4);
  CHECK(rc.training.beta1 == 0.9);
  CHECK(rc.training.beta2 == 0.98);
  CHECK(rc.training.weight_decay == 1e-4);
  CHECK(rc.training.clip_norm == 10.0);
  CHECK(rc.training.alpha == 0.1);
  CHECK(rc.training.checkpoint_every == 1000);
  CHECK(rc.tokenizer_k == 200);
  CHECK(rc.tokenizer_batch_size == 64);
  CHECK(rc.model.hidden_dim == 256);
  CHECK(rc.model.fp_blocks == 3);
  CHECK(rc.model.head_mode == HeadMode::token_prediction);
}

TEST_CASE("run config parses sections and rejects unknown keys") {
  const char* text =
      "[backend]\n"
      "n_layers = 5\n"
      "dim = 24\n"
      "# comment line\n"
      "[training]\n"
      "steps = 123\n"
      "lr = 2e-3\n"
      "[paths]\n"
      "manifest = /tmp/m.psv\n";
  RunConfig rc = parse_run_config(text, "inline");
  CHECK(rc.backend.n_layers == 5);
  CHECK(rc.backend.dim == 24);
  CHECK(rc.model.ssl_dim == 24);
  CHECK(rc.training.steps == 123);
  CHECK(rc.training.lr == 2e-3);
  CHECK(rc.manifest_path == "/tmp/m.psv");

  try {
    parse_run_config("[training]\nsteps_typo = 3\n", "inline");
    FAIL("expected BadConfig");
  } catch (const DmosError& e) {
    CHECK(e.kind() == ErrorKind::BadConfig);
  }
  CHECK_THROWS_AS(parse_run_config("[nonsense]\nx = 1\n", "inline"), DmosError);
  CHECK_THROWS_AS(parse_run_config("[training]\nsteps = oops\n", "inline"), DmosError);
}

TEST_CASE("render/parse round trip preserves the config") {
  RunConfig rc = parse_run_config("", "inline");
  rc.backend.n_layers = 7;
  rc.training.lr = 3e-4;
  rc.model.head_mode = HeadMode::mse_distillation;
  rc.manifest_path = "/data/m.psv";
  RunConfig back = parse_run_config(render_run_config(rc), "inline");
  CHECK(back.backend.n_layers == 7);
  CHECK(back.training.lr == 3e-4);
  CHECK(back.model.head_mode == HeadMode::mse_distillation);
  CHECK(back.manifest_path == "/data/m.psv");
}
