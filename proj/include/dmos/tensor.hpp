// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dmos/common.hpp"

namespace dmos {

// Dense row-major tensor of doubles. Per-frame operations treat a tensor of
// shape [d0, ..., dn-1, C] as a (d0*...*dn-1) x C matrix; the last dimension
// is always channel-contiguous.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)) {
    v.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor scalar(double x) {
    Tensor t({1});
    t.v[0] = x;
    return t;
  }

  static Tensor from(std::vector<double> data, std::vector<std::size_t> s) {
    Tensor t;
    t.shape = std::move(s);
    DMOS_CHECK(data.size() == numel_of(t.shape), ErrorKind::ShapeMismatch,
               "tensor data size does not match shape");
    t.v = std::move(data);
    return t;
  }

  std::size_t numel() const { return v.size(); }
  bool empty() const { return v.empty(); }

  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
  std::size_t rows() const { return cols() ? numel() / cols() : 0; }

  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  // [B, T, C] accessor
  double& at3(std::size_t b, std::size_t t, std::size_t c) {
    return v[(b * shape[1] + t) * shape[2] + c];
  }
  double at3(std::size_t b, std::size_t t, std::size_t c) const {
    return v[(b * shape[1] + t) * shape[2] + c];
  }

  void fill(double x) { v.assign(v.size(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Validity mask over the frames of a padded batch: on[b*frames + t] is true
// iff frame t of item b is real (not padding).
struct FrameMask {
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::vector<std::uint8_t> on;

  FrameMask() = default;
  FrameMask(std::size_t b, std::size_t t, bool value = true)
      : batch(b), frames(t), on(b * t, value ? 1 : 0) {}

  static FrameMask from_lengths(const std::vector<std::size_t>& lengths,
                                std::size_t frames) {
    FrameMask m(lengths.size(), frames, false);
    for (std::size_t b = 0; b < lengths.size(); ++b)
      for (std::size_t t = 0; t < lengths[b] && t < frames; ++t)
        m.on[b * frames + t] = 1;
    return m;
  }

  bool at(std::size_t b, std::size_t t) const { return on[b * frames + t] != 0; }
  void set(std::size_t b, std::size_t t, bool value) { on[b * frames + t] = value ? 1 : 0; }

  std::size_t count_row(std::size_t b) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < frames; ++t) n += at(b, t);
    return n;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto x : on) n += x != 0;
    return n;
  }
};

}  // namespace dmos
