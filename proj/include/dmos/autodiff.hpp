// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "dmos/tensor.hpp"

namespace dmos::ad {

struct Node;
using NodeP = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily, same shape as val
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<NodeP> parents;
  std::function<void(Node&)> backward;

  Tensor& g() {
    if (!grad_alloc) {
      grad = Tensor(val.shape, 0.0);
      grad_alloc = true;
    }
    return grad;
  }
  void zero_grad() {
    if (grad_alloc) grad.fill(0.0);
  }
};

// Handle to a node in (or outside) a graph. Parameters are leaves created
// with make_leaf and live independently of any Graph; intermediates belong to
// the Graph tape that created them.
struct Var {
  NodeP n;
  bool defined() const { return n != nullptr; }
  const Tensor& val() const { return n->val; }
  Tensor& value() { return n->val; }
  const Tensor& grad() const { return n->grad; }
  double scalar() const { return n->val.v[0]; }
};

Var make_leaf(Tensor t, bool requires_grad);
inline Var make_constant(Tensor t) { return make_leaf(std::move(t), false); }

// Running batch-norm buffers, owned by the module that uses them.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

// Reverse-mode tape. Build ops forward, then call backward(root) once on a
// scalar root. Ops executed while grad_enabled == false compute values only
// and are not recorded (inference path).
class Graph {
public:
  bool grad_enabled = true;

  void backward(const Var& root);
  void clear() { tape_.clear(); }
  std::size_t tape_size() const { return tape_.size(); }

  // elementwise / linear algebra
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_bias(Var x, Var b);            // [R x C] + [C]
  Var matmul(Var a, Var b);              // [..., K] x [K, C] -> [..., C]
  Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }
  Var tanh_act(Var x);
  Var sigmoid(Var x);
  Var gelu(Var x);                       // exact erf form
  Var softmax_vec(Var w);                // [N] -> [N]

  // sequence ops over [B, T, C] tensors
  Var weighted_layer_sum(const std::vector<Var>& layers, Var weights);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var x, std::size_t c0, std::size_t len);
  Var time_slice(Var x, std::size_t t);                 // -> [B, C]
  Var time_stack(const std::vector<Var>& steps);        // T x [B, C] -> [B, T, C]
  Var conv1d_time(Var x, Var w, Var b);                 // w: [K, Cin, Cout], same padding
  Var apply_time_mask(Var x, const FrameMask& mask);    // zero padded frames
  Var batchnorm_time(Var x, Var gamma, Var beta, BatchNormState& state,
                     const FrameMask& mask, bool training, bool update_running,
                     double momentum = 0.1, double eps = 1e-5);
  Var layernorm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var masked_mean_time(Var x, const FrameMask& mask);   // -> [B, C]
  Var lstm_cell(Var z, Var c_prev);                     // z: [B, 4H] -> [B, 2H] = (h | c)

  // loss reductions (scalar outputs)
  Var mse_vec(Var pred, const Tensor& target);
  Var ce_masked_time(Var logits, const std::vector<std::int32_t>& targets,
                     const FrameMask& mask);
  Var masked_mse_time(Var pred, const Tensor& target, const FrameMask& mask);
  Var add_scaled(Var a, Var b, double c);               // a + c * b, scalars
  Var mean_of(const std::vector<Var>& scalars);

private:
  std::vector<NodeP> tape_;
  Var record(Tensor val, std::vector<NodeP> parents,
             std::function<void(Node&)> backward);
};

// Gate order inside lstm_cell pre-activations: input, forget, cell, output.

}  // namespace dmos::ad
