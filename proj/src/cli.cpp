// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dmos/cca.hpp"
#include "dmos/checkpoint.hpp"
#include "dmos/data.hpp"
#include "dmos/evaluation.hpp"
#include "dmos/metrics.hpp"
#include "dmos/plot.hpp"
#include "dmos/run_config.hpp"
#include "dmos/tokenizer.hpp"
#include "dmos/trainer.hpp"
#include "dmos/wave_io.hpp"

namespace dmos::cli {

namespace fs = std::filesystem;

namespace {

std::optional<Split> parse_split(const std::string& s) {
  if (s == "all") return std::nullopt;
  return split_from_string(s);
}

void require_file(const std::string& path, const char* what) {
  DMOS_CHECK(!path.empty(), ErrorKind::BadConfig,
             std::string(what) + " path not set (config [paths] or flag)");
  DMOS_CHECK(fs::exists(path), ErrorKind::MissingFile,
             std::string(what) + " not found: " + path);
}

int cmd_synth(const std::string& out, std::size_t n, std::uint64_t seed,
              std::size_t sample_rate) {
  CorpusManifest m = generate_synthetic_corpus(n, seed, sample_rate);
  save_manifest(m, out);
  std::printf("wrote %zu utterances to %s (+ sidecar)\n", m.entries.size(), out.c_str());
  return 0;
}

int cmd_fit_tokens(const std::string& config_path) {
  RunConfig rc = load_run_config(config_path);
  require_file(rc.manifest_path, "manifest");
  DMOS_CHECK(!rc.codebooks_path.empty(), ErrorKind::BadConfig,
             "config [paths] codebooks not set");
  CorpusManifest manifest = load_manifest(rc.manifest_path);
  auto backend = make_backend(rc.backend, rc.backend_seed, rc.finetune_frontend,
                              rc.backend_checkpoint);
  FitReport report;
  auto stream = manifest_feature_stream(manifest, *backend, Split::train);
  auto codebooks = fit_codebooks(stream, rc.tokenizer_k, rc.tokenizer_batch_size,
                                 rc.tokenizer_seed, &report);
  save_codebooks(codebooks, rc.codebooks_path);
  std::printf("layer|k|online_quant_error|empty_clusters\n");
  for (std::size_t n = 0; n < codebooks.size(); ++n)
    std::printf("%u|%u|%.6f|%u\n", codebooks[n].layer_index, codebooks[n].k,
                report.online_quant_error[n], report.empty_clusters[n]);
  std::printf("wrote %zu codebooks to %s\n", codebooks.size(), rc.codebooks_path.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& head_mode_override,
              const std::string& run_dir_override, bool resume,
              std::size_t stop_after) {
  RunConfig rc = load_run_config(config_path);
  if (!head_mode_override.empty()) {
    rc.model.head_mode = head_mode_from_string(head_mode_override);
    rc.echo += "\n# cli override: head_mode = " + head_mode_override + "\n";
  }
  if (!run_dir_override.empty()) rc.run_dir = run_dir_override;
  require_file(rc.manifest_path, "manifest");
  DMOS_CHECK(!rc.run_dir.empty(), ErrorKind::BadConfig, "config [paths] run_dir not set");
  if (rc.model.head_mode == HeadMode::token_prediction)
    require_file(rc.codebooks_path, "codebooks");

  CorpusManifest manifest = load_manifest(rc.manifest_path);
  TrainJob job;
  job.manifest = &manifest;
  job.backend_spec = rc.backend;
  job.backend_seed = rc.backend_seed;
  job.finetune_frontend = rc.finetune_frontend;
  job.model_config = rc.model;
  job.training = rc.training;
  job.codebooks_path =
      rc.model.head_mode == HeadMode::token_prediction ? rc.codebooks_path : "";
  job.run_dir = rc.run_dir;
  job.config_echo = rc.echo;
  job.resume = resume;
  job.stop_after = stop_after;

  TrainResult result = train(job);
  std::string srcc_text = "undefined";
  if (result.best_srcc_defined) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.6f", result.best_valid_srcc);
    srcc_text = b;
  }
  std::printf("best_step=%zu valid_srcc=%s checkpoint=%s\n", result.best_step,
              srcc_text.c_str(), result.best_checkpoint.c_str());
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& manifest_path,
                 bool system_level, bool zero_shot, std::string split_name,
                 const std::string& dump_path, const std::string& plot_path,
                 const std::string& out_path) {
  require_file(checkpoint, "checkpoint");
  require_file(manifest_path, "manifest");
  if (zero_shot) {
    // out-of-domain protocol: utterance level only, whole corpus by default
    if (split_name == "test") split_name = "all";
    system_level = false;
  }
  CorpusManifest manifest = load_manifest(manifest_path);
  EvalOptions opts;
  opts.split = parse_split(split_name);
  opts.system_level = system_level;
  EvalResult r = evaluate_checkpoint(checkpoint, manifest, opts);
  std::string text = format_report(r.utterance) + "\n";
  if (r.system) text += format_report(*r.system) + "\n";
  std::printf("%s", text.c_str());
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write report: " + out_path);
    out << text;
  }
  if (!dump_path.empty()) dump_predictions(r.predictions, dump_path);
  if (!plot_path.empty()) {
    PlotSeries s;
    s.label = "prediction";
    for (const auto& row : r.predictions.rows) {
      s.x.push_back(row.target);
      s.y.push_back(row.predicted);
    }
    write_svg_line_chart(plot_path, "predicted vs target MOS", "target MOS",
                         "predicted MOS", {s});
  }
  return 0;
}

int cmd_sweep_k(const std::string& config_path, const std::string& k_list,
                const std::string& out_path, const std::string& plot_path) {
  RunConfig base = load_run_config(config_path);
  require_file(base.manifest_path, "manifest");
  DMOS_CHECK(!base.run_dir.empty(), ErrorKind::BadConfig, "config [paths] run_dir not set");
  std::vector<std::uint32_t> ks;
  {
    std::istringstream ss(k_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        ks.push_back(std::uint32_t(std::stoul(item)));
      } catch (...) {
        fail(ErrorKind::BadConfig, "bad k in --k-list: " + item);
      }
    }
  }
  DMOS_CHECK(!ks.empty(), ErrorKind::BadConfig, "empty --k-list");

  CorpusManifest manifest = load_manifest(base.manifest_path);
  std::ostringstream table;
  table << "k|utterance_srcc|system_srcc\n";
  PlotSeries utt_series{"utterance SRCC", {}, {}};
  PlotSeries sys_series{"system SRCC", {}, {}};

  for (const auto k : ks) {
    RunConfig rc = base;
    rc.tokenizer_k = k;
    rc.model.n_clusters = k;
    char sub[32];
    std::snprintf(sub, sizeof(sub), "k_%03u", k);
    rc.run_dir = (fs::path(base.run_dir) / sub).string();
    fs::create_directories(rc.run_dir);
    rc.codebooks_path = (fs::path(rc.run_dir) / "codebooks.dmkm").string();

    auto backend = make_backend(rc.backend, rc.backend_seed, rc.finetune_frontend,
                                rc.backend_checkpoint);
    auto stream = manifest_feature_stream(manifest, *backend, Split::train);
    auto codebooks =
        fit_codebooks(stream, rc.tokenizer_k, rc.tokenizer_batch_size, rc.tokenizer_seed);
    save_codebooks(codebooks, rc.codebooks_path);

    TrainJob job;
    job.manifest = &manifest;
    job.backend_spec = rc.backend;
    job.backend_seed = rc.backend_seed;
    job.finetune_frontend = rc.finetune_frontend;
    job.model_config = rc.model;
    job.training = rc.training;
    job.codebooks_path = rc.codebooks_path;
    job.run_dir = rc.run_dir;
    job.config_echo = render_run_config(rc);
    TrainResult tr = train(job);

    EvalOptions opts;
    opts.split = Split::test;
    opts.system_level = true;
    EvalResult er = evaluate_checkpoint(tr.best_checkpoint, manifest, opts);
    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("undefined");
      char b[32];
      std::snprintf(b, sizeof(b), "%.6f", *v);
      return std::string(b);
    };
    table << k << '|' << fmt(er.utterance.srcc) << '|'
          << fmt(er.system ? er.system->srcc : std::nullopt) << "\n";
    if (er.utterance.srcc) {
      utt_series.x.push_back(double(k));
      utt_series.y.push_back(*er.utterance.srcc);
    }
    if (er.system && er.system->srcc) {
      sys_series.x.push_back(double(k));
      sys_series.y.push_back(*er.system->srcc);
    }
  }

  std::printf("%s", table.str().c_str());
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    out << table.str();
  }
  if (!plot_path.empty()) {
    std::vector<PlotSeries> series;
    if (!utt_series.x.empty()) series.push_back(utt_series);
    if (!sys_series.x.empty()) series.push_back(sys_series);
    write_svg_line_chart(plot_path, "SRCC vs cluster count", "k", "SRCC", series);
  }
  return 0;
}

int cmd_analyze_cca(const std::string& checkpoints_csv, const std::string& manifest_path,
                    const std::string& split_name, std::uint64_t random_seed,
                    bool no_random, bool no_ssl_mos, const std::string& out_path,
                    const std::string& plot_path) {
  require_file(manifest_path, "manifest");
  CcaAnalyzeRequest req;
  {
    std::istringstream ss(checkpoints_csv);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) req.checkpoint_paths.push_back(item);
  }
  DMOS_CHECK(!req.checkpoint_paths.empty(), ErrorKind::BadConfig,
             "--checkpoints must list at least one file");
  for (const auto& p : req.checkpoint_paths) require_file(p, "checkpoint");

  CorpusManifest manifest = load_manifest(manifest_path);
  req.manifest = &manifest;
  req.split = parse_split(split_name);
  req.random_init_seed = random_seed;
  req.include_random_init = !no_random;
  req.include_ssl_mos_style = !no_ssl_mos;
  auto curves = analyze_cca(req);

  std::ostringstream table;
  table << "layer";
  for (const auto& c : curves) table << '|' << c.model_tag;
  table << "\n";
  const std::size_t n_layers = curves.front().values.size();
  for (std::size_t n = 0; n < n_layers; ++n) {
    table << (n + 1);
    for (const auto& c : curves) {
      char b[32];
      std::snprintf(b, sizeof(b), "%.6f", c.values[n]);
      table << '|' << b;
    }
    table << "\n";
  }
  std::printf("%s", table.str().c_str());
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    out << table.str();
  }
  if (!plot_path.empty()) {
    std::vector<PlotSeries> series;
    for (const auto& c : curves) {
      PlotSeries s;
      s.label = c.model_tag;
      for (std::size_t n = 0; n < c.values.size(); ++n) {
        s.x.push_back(double(n + 1));
        s.y.push_back(c.values[n]);
      }
      series.push_back(std::move(s));
    }
    write_svg_line_chart(plot_path, "CCA vs reference layers", "SSL layer", "CCA",
                         series);
  }
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& audio,
                std::size_t sample_rate_flag) {
  require_file(checkpoint, "checkpoint");
  require_file(audio, "audio");
  LoadedCheckpoint ck = load_checkpoint(checkpoint, /*inference_only=*/true);
  Waveform wf = read_audio(audio);
  std::size_t rate = wf.sample_rate ? wf.sample_rate : sample_rate_flag;
  if (rate == 0) rate = ck.meta.sample_rate;
  DMOS_CHECK(rate == ck.meta.sample_rate, ErrorKind::IncompatibleCheckpoint,
             "audio sample rate does not match the checkpoint");
  const double mos = predict_mos(*ck.model, *ck.backend, wf.samples, rate);
  std::printf("%.4f\n", mos);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"MOS prediction toolkit: layer-distilled training, evaluation and analysis",
               "dmos"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_out;
  std::size_t synth_n = 60, synth_rate = 16000;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "manifest output path")->required();
  synth->add_option("--n", synth_n, "number of utterances");
  synth->add_option("--seed", synth_seed, "corpus seed");
  synth->add_option("--sample-rate", synth_rate, "sample rate in Hz");

  // fit-tokens
  auto* fit = app.add_subcommand("fit-tokens", "fit per-layer k-means codebooks");
  std::string fit_config;
  fit->add_option("--config", fit_config, "run config file")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_head, tr_run_dir;
  bool tr_resume = false;
  tr->add_option("--config", tr_config, "run config file")->required();
  tr->add_option("--head-mode", tr_head,
                 "override head mode: token_prediction|none|mse_distillation");
  tr->add_option("--run-dir", tr_run_dir, "override run directory");
  tr->add_flag("--resume", tr_resume, "resume from <run_dir>/state.bin");
  std::size_t tr_stop_after = 0;
  tr->add_option("--stop-after", tr_stop_after,
                 "pause this invocation after N steps (resume later)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a manifest");
  std::string ev_ckpt, ev_manifest, ev_split = "test", ev_dump, ev_plot;
  bool ev_system = false, ev_zero_shot = false;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--manifest", ev_manifest, "manifest file")->required();
  ev->add_flag("--system-level", ev_system, "also report system-level metrics");
  ev->add_flag("--zero-shot", ev_zero_shot,
               "out-of-domain protocol (utterance level, whole corpus)");
  ev->add_option("--split", ev_split, "train|valid|test|all");
  ev->add_option("--dump", ev_dump, "write the prediction set to this file");
  ev->add_option("--plot", ev_plot, "write an SVG scatter of predictions");
  std::string ev_out;
  ev->add_option("--out", ev_out, "also write the report text to this file");

  // sweep-k
  auto* sw = app.add_subcommand("sweep-k", "cluster-count sweep: fit + train + evaluate per k");
  std::string sw_config, sw_klist = "50,100,150,200,250,300", sw_out, sw_plot;
  sw->add_option("--config", sw_config, "run config file")->required();
  sw->add_option("--k-list", sw_klist, "comma-separated cluster counts");
  sw->add_option("--out", sw_out, "write the result table to this file");
  sw->add_option("--plot", sw_plot, "write an SVG line chart");

  // analyze-cca
  auto* an = app.add_subcommand("analyze-cca", "layer-wise CCA against the pristine encoder");
  std::string an_ckpts, an_manifest, an_split = "test", an_out, an_plot;
  std::uint64_t an_seed = 123;
  bool an_no_random = false, an_no_sslmos = false;
  an->add_option("--checkpoints", an_ckpts, "comma-separated checkpoint files")->required();
  an->add_option("--manifest", an_manifest, "manifest file")->required();
  an->add_option("--split", an_split, "train|valid|test|all");
  an->add_option("--random-seed", an_seed, "seed for the random-init curve");
  an->add_flag("--no-random-init", an_no_random, "skip the random-init curve");
  an->add_flag("--no-ssl-mos", an_no_sslmos, "skip the ssl-mos-style curve");
  an->add_option("--out", an_out, "write the curve table to this file");
  an->add_option("--plot", an_plot, "write an SVG line chart");

  // predict
  auto* pr = app.add_subcommand("predict", "predict MOS for one audio file");
  std::string pr_ckpt, pr_audio;
  std::size_t pr_rate = 0;
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
  pr->add_option("--audio", pr_audio, "audio file (.wav or raw .f32)")->required();
  pr->add_option("--sample-rate", pr_rate, "sample rate for raw .f32 input");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_n, synth_seed, synth_rate);
    if (*fit) return cmd_fit_tokens(fit_config);
    if (*tr) return cmd_train(tr_config, tr_head, tr_run_dir, tr_resume, tr_stop_after);
    if (*ev)
      return cmd_evaluate(ev_ckpt, ev_manifest, ev_system, ev_zero_shot, ev_split,
                          ev_dump, ev_plot, ev_out);
    if (*sw) return cmd_sweep_k(sw_config, sw_klist, sw_out, sw_plot);
    if (*an)
      return cmd_analyze_cca(an_ckpts, an_manifest, an_split, an_seed, an_no_random,
                             an_no_sslmos, an_out, an_plot);
    if (*pr) return cmd_predict(pr_ckpt, pr_audio, pr_rate);
  } catch (const DmosError& e) {
    std::fprintf(stderr, "error [%s]: %s\n", error_kind_name(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 2;
}

}  // namespace dmos::cli
