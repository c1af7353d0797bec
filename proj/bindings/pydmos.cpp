// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "dmos/cca.hpp"
#include "dmos/checkpoint.hpp"
#include "dmos/data.hpp"
#include "dmos/evaluation.hpp"
#include "dmos/metrics.hpp"
#include "dmos/run_config.hpp"
#include "dmos/tokenizer.hpp"
#include "dmos/trainer.hpp"

namespace py = pybind11;
using namespace dmos;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> as_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

Tensor as_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Tensor t({std::size_t(a.shape(0)), std::size_t(a.shape(1))});
  std::copy_n(a.data(), t.numel(), t.v.begin());
  return t;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["level"] = r.level == MetricLevel::utterance ? "utterance" : "system";
  d["lcc"] = r.lcc ? py::object(py::float_(*r.lcc)) : py::none();
  d["srcc"] = r.srcc ? py::object(py::float_(*r.srcc)) : py::none();
  d["ktau"] = r.ktau ? py::object(py::float_(*r.ktau)) : py::none();
  d["mse"] = r.mse;
  return d;
}

std::optional<Split> split_arg(const std::string& s) {
  if (s == "all") return std::nullopt;
  return split_from_string(s);
}

py::dict run_train(const std::string& config_path, const std::string& head_mode,
                   const std::string& run_dir, bool resume, std::size_t stop_after) {
  RunConfig rc = load_run_config(config_path);
  if (!head_mode.empty()) rc.model.head_mode = head_mode_from_string(head_mode);
  if (!run_dir.empty()) rc.run_dir = run_dir;
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
  TrainResult r = train(job);
  py::dict d;
  d["best_step"] = r.best_step;
  d["best_valid_srcc"] =
      r.best_srcc_defined ? py::object(py::float_(r.best_valid_srcc)) : py::none();
  d["best_checkpoint"] = r.best_checkpoint;
  d["log_path"] = r.log_path;
  d["run_dir"] = r.run_dir;
  return d;
}

}  // namespace

PYBIND11_MODULE(_distilmos, m) {
  m.doc() = "MOS prediction toolkit: layer-distilled training, metrics and analysis";
  m.attr("__version__") = "0.1.0";

  py::register_exception<DmosError>(m, "DmosError", PyExc_RuntimeError);

  // corpus
  m.def(
      "generate_synthetic_corpus",
      [](const std::string& path, std::size_t n, std::uint64_t seed,
         std::size_t sample_rate) {
        CorpusManifest c = generate_synthetic_corpus(n, seed, sample_rate);
        save_manifest(c, path);
        py::dict d;
        d["path"] = path;
        d["n"] = c.entries.size();
        d["sample_rate"] = c.sample_rate;
        return d;
      },
      py::arg("path"), py::arg("n"), py::arg("seed"), py::arg("sample_rate") = 16000,
      "Write a deterministic synthetic corpus (manifest + waveform sidecar).");

  m.def(
      "manifest_info",
      [](const std::string& path) {
        CorpusManifest c = load_manifest(path);
        std::size_t train = 0, valid = 0, test = 0;
        for (const auto& u : c.entries) {
          train += u.split == Split::train;
          valid += u.split == Split::valid;
          test += u.split == Split::test;
        }
        py::dict d;
        d["name"] = c.name;
        d["n"] = c.entries.size();
        d["sample_rate"] = c.sample_rate;
        d["train"] = train;
        d["valid"] = valid;
        d["test"] = test;
        return d;
      },
      py::arg("path"));

  // metrics
  m.def("lcc", [](DoubleArray x, DoubleArray y) { return lcc(as_vector(x), as_vector(y)); },
        py::arg("x"), py::arg("y"), "Pearson correlation.");
  m.def("srcc", [](DoubleArray x, DoubleArray y) { return srcc(as_vector(x), as_vector(y)); },
        py::arg("x"), py::arg("y"), "Spearman rank correlation (average ranks).");
  m.def("ktau", [](DoubleArray x, DoubleArray y) { return ktau(as_vector(x), as_vector(y)); },
        py::arg("x"), py::arg("y"), "Kendall tau-b.");
  m.def("mse", [](DoubleArray x, DoubleArray y) { return mse(as_vector(x), as_vector(y)); },
        py::arg("x"), py::arg("y"));

  // tokenizer
  m.def(
      "fit_kmeans",
      [](DoubleArray frames, std::uint32_t k, std::uint32_t batch_size,
         std::uint64_t seed) {
        Tensor data = as_matrix(frames);
        const std::size_t dim = data.cols();
        auto pos = std::make_shared<bool>(false);
        auto stream = [pos, data]() -> std::optional<LayerStack> {
          if (*pos) return std::nullopt;
          *pos = true;
          LayerStack st;
          st.frames = data.rows();
          st.frame_mask.assign(data.rows(), 1);
          st.frame_rate = 0.0;
          st.layers.push_back(data);
          return st;
        };
        auto cbs = fit_codebooks(stream, k, batch_size, seed);
        py::array_t<float> out({std::size_t(k), dim});
        std::copy_n(cbs[0].centroids.data(), std::size_t(k) * dim,
                    out.mutable_data());
        return out;
      },
      py::arg("frames"), py::arg("k"), py::arg("batch_size") = 64, py::arg("seed") = 1,
      "Streaming mini-batch k-means over a frame matrix; returns [k, D] centroids.");

  m.def(
      "kmeans_assign",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> centroids,
         DoubleArray frames) {
        if (centroids.ndim() != 2) throw py::value_error("centroids must be 2-D");
        Codebook cb;
        cb.layer_index = 1;
        cb.k = std::uint32_t(centroids.shape(0));
        cb.dim = std::uint32_t(centroids.shape(1));
        cb.centroids.assign(centroids.data(),
                            centroids.data() + centroids.size());
        Tensor data = as_matrix(frames);
        auto ids = assign(cb, data);
        py::array_t<std::int32_t> out(
            std::vector<py::ssize_t>{py::ssize_t(ids.size())});
        std::copy(ids.begin(), ids.end(), out.mutable_data());
        return out;
      },
      py::arg("centroids"), py::arg("frames"),
      "Nearest-centroid token ids (ties -> lowest index).");

  // cca
  m.def(
      "cca_similarity",
      [](DoubleArray x, DoubleArray y, double ridge_scale) {
        CcaOptions opts;
        opts.ridge_scale = ridge_scale;
        return cca_similarity(as_matrix(x), as_matrix(y), opts);
      },
      py::arg("x"), py::arg("y"), py::arg("ridge_scale") = 1e-6,
      "Mean canonical correlation between two [U, d] matrices.");

  // pipeline
  m.def(
      "fit_tokens",
      [](const std::string& config_path) {
        RunConfig rc = load_run_config(config_path);
        CorpusManifest manifest = load_manifest(rc.manifest_path);
        auto backend = make_backend(rc.backend, rc.backend_seed, rc.finetune_frontend,
                                    rc.backend_checkpoint);
        auto stream = manifest_feature_stream(manifest, *backend, Split::train);
        auto cbs = fit_codebooks(stream, rc.tokenizer_k, rc.tokenizer_batch_size,
                                 rc.tokenizer_seed);
        save_codebooks(cbs, rc.codebooks_path);
        return rc.codebooks_path;
      },
      py::arg("config_path"),
      "Fit per-layer codebooks on the manifest's train split; returns the file path.");

  m.def("train", &run_train, py::arg("config_path"), py::arg("head_mode") = "",
        py::arg("run_dir") = "", py::arg("resume") = false, py::arg("stop_after") = 0,
        "Run the training recipe from a config file.");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& manifest_path,
         bool system_level, const std::string& split, bool zero_shot) {
        CorpusManifest manifest = load_manifest(manifest_path);
        EvalOptions opts;
        opts.system_level = system_level && !zero_shot;
        opts.split = split_arg(zero_shot && split == "test" ? "all" : split);
        EvalResult r = evaluate_checkpoint(checkpoint, manifest, opts);
        py::dict d;
        d["utterance"] = report_dict(r.utterance);
        if (r.system) d["system"] = report_dict(*r.system);
        py::list rows;
        for (const auto& row : r.predictions.rows) {
          py::dict pr;
          pr["utterance_id"] = row.utterance_id;
          pr["system_id"] = row.system_id;
          pr["predicted"] = row.predicted;
          pr["target"] = row.target;
          rows.append(pr);
        }
        d["predictions"] = rows;
        return d;
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("system_level") = false,
      py::arg("split") = "test", py::arg("zero_shot") = false);

  m.def(
      "predict",
      [](const std::string& checkpoint, DoubleArray samples, std::size_t sample_rate) {
        LoadedCheckpoint ck = load_checkpoint(checkpoint, /*inference_only=*/true);
        const auto v = as_vector(samples);
        std::vector<float> wave(v.begin(), v.end());
        return predict_mos(*ck.model, *ck.backend, wave, sample_rate);
      },
      py::arg("checkpoint"), py::arg("samples"), py::arg("sample_rate") = 16000,
      "Predict the MOS of one waveform with the inference path only.");

  m.def(
      "analyze_cca",
      [](const std::vector<std::string>& checkpoints, const std::string& manifest_path,
         const std::string& split) {
        CorpusManifest manifest = load_manifest(manifest_path);
        CcaAnalyzeRequest req;
        req.checkpoint_paths = checkpoints;
        req.manifest = &manifest;
        req.split = split_arg(split);
        auto curves = analyze_cca(req);
        py::dict d;
        for (const auto& c : curves) d[py::str(c.model_tag)] = c.values;
        return d;
      },
      py::arg("checkpoints"), py::arg("manifest"), py::arg("split") = "test");
}
