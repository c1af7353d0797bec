// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace dmos::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace {

ECMap as_mat(const Tensor& t) {
  return ECMap(t.v.data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}

EMap as_mat_mut(Tensor& t) {
  return EMap(t.v.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_bwd(double x) {
  const double phi = std::exp(-0.5 * x * x) * 0.3989422804014326779399;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace

Var make_leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad;
  return Var{n};
}

Var Graph::record(Tensor val, std::vector<NodeP> parents,
                  std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  bool rg = false;
  if (grad_enabled)
    for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
    tape_.push_back(n);
  }
  return Var{n};
}

void Graph::backward(const Var& root) {
  DMOS_CHECK(root.defined() && root.n->val.numel() == 1, ErrorKind::ShapeMismatch,
             "backward root must be a scalar");
  if (!root.n->requires_grad) return;
  root.n->g().v[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (n.grad_alloc && n.backward) n.backward(n);
  }
}

Var Graph::add(Var a, Var b) {
  DMOS_CHECK(a.val().same_shape(b.val()), ErrorKind::ShapeMismatch, "add: shape mismatch");
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += b.val().v[i];
  return record(std::move(out), {a.n, b.n}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Tensor& g = p.g();
      for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += self.grad.v[i];
    }
  });
}

Var Graph::sub(Var a, Var b) {
  DMOS_CHECK(a.val().same_shape(b.val()), ErrorKind::ShapeMismatch, "sub: shape mismatch");
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] -= b.val().v[i];
  return record(std::move(out), {a.n, b.n}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->g();
      for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += self.grad.v[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->g();
      for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] -= self.grad.v[i];
    }
  });
}

Var Graph::mul(Var a, Var b) {
  DMOS_CHECK(a.val().same_shape(b.val()), ErrorKind::ShapeMismatch, "mul: shape mismatch");
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] *= b.val().v[i];
  return record(std::move(out), {a.n, b.n}, [](Node& self) {
    const Tensor& av = self.parents[0]->val;
    const Tensor& bv = self.parents[1]->val;
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->g();
      for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += self.grad.v[i] * bv.v[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->g();
      for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += self.grad.v[i] * av.v[i];
    }
  });
}

Var Graph::scale(Var a, double c) {
  Tensor out = a.val();
  for (double& x : out.v) x *= c;
  return record(std::move(out), {a.n}, [c](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += c * self.grad.v[i];
  });
}

Var Graph::add_bias(Var x, Var b) {
  const std::size_t C = x.val().cols();
  DMOS_CHECK(b.val().numel() == C, ErrorKind::ShapeMismatch, "add_bias: bias length mismatch");
  Tensor out = x.val();
  const std::size_t R = out.rows();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out.v[r * C + c] += b.val().v[c];
  return record(std::move(out), {x.n, b.n}, [R, C](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& g = self.parents[0]->g();
      for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += self.grad.v[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->g();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g.v[c] += self.grad.v[r * C + c];
    }
  });
}

Var Graph::matmul(Var a, Var b) {
  DMOS_CHECK(b.val().rank() == 2, ErrorKind::ShapeMismatch, "matmul: rhs must be 2-D");
  const std::size_t K = a.val().cols();
  DMOS_CHECK(b.val().dim(0) == K, ErrorKind::ShapeMismatch, "matmul: inner dims differ");
  std::vector<std::size_t> out_shape = a.val().shape;
  out_shape.back() = b.val().dim(1);
  Tensor out(out_shape);
  as_mat_mut(out).noalias() = as_mat(a.val()) * as_mat(b.val());
  return record(std::move(out), {a.n, b.n}, [](Node& self) {
    const Tensor& av = self.parents[0]->val;
    const Tensor& bv = self.parents[1]->val;
    if (self.parents[0]->requires_grad)
      as_mat_mut(self.parents[0]->g()).noalias() +=
          as_mat(self.grad) * as_mat(bv).transpose();
    if (self.parents[1]->requires_grad)
      as_mat_mut(self.parents[1]->g()).noalias() +=
          as_mat(av).transpose() * as_mat(self.grad);
  });
}

Var Graph::tanh_act(Var x) {
  Tensor out = x.val();
  for (double& v : out.v) v = std::tanh(v);
  Tensor saved = out;
  return record(std::move(out), {x.n}, [saved](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t i = 0; i < g.numel(); ++i)
      g.v[i] += self.grad.v[i] * (1.0 - saved.v[i] * saved.v[i]);
  });
}

Var Graph::sigmoid(Var x) {
  Tensor out = x.val();
  for (double& v : out.v) v = 1.0 / (1.0 + std::exp(-v));
  Tensor saved = out;
  return record(std::move(out), {x.n}, [saved](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t i = 0; i < g.numel(); ++i)
      g.v[i] += self.grad.v[i] * saved.v[i] * (1.0 - saved.v[i]);
  });
}

Var Graph::gelu(Var x) {
  Tensor out = x.val();
  for (double& v : out.v) v = gelu_fwd(v);
  return record(std::move(out), {x.n}, [](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    const Tensor& xv = self.parents[0]->val;
    Tensor& g = self.parents[0]->g();
    for (std::size_t i = 0; i < g.numel(); ++i)
      g.v[i] += self.grad.v[i] * gelu_bwd(xv.v[i]);
  });
}

Var Graph::softmax_vec(Var w) {
  const std::size_t N = w.val().numel();
  Tensor out = w.val();
  double m = out.v[0];
  for (double v : out.v) m = std::max(m, v);
  double z = 0.0;
  for (double& v : out.v) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : out.v) v /= z;
  Tensor saved = out;
  return record(std::move(out), {w.n}, [saved, N](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < N; ++i) dot += self.grad.v[i] * saved.v[i];
    Tensor& g = self.parents[0]->g();
    for (std::size_t i = 0; i < N; ++i)
      g.v[i] += saved.v[i] * (self.grad.v[i] - dot);
  });
}

Var Graph::weighted_layer_sum(const std::vector<Var>& layers, Var weights) {
  const std::size_t N = layers.size();
  DMOS_CHECK(N >= 1 && weights.val().numel() == N, ErrorKind::ShapeMismatch,
             "weighted_layer_sum: weight count must match layer count");
  for (const auto& l : layers)
    DMOS_CHECK(l.val().same_shape(layers[0].val()), ErrorKind::ShapeMismatch,
               "weighted_layer_sum: layer shapes differ");
  Tensor out(layers[0].val().shape, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const double wn = weights.val().v[n];
    const Tensor& f = layers[n].val();
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += wn * f.v[i];
  }
  std::vector<NodeP> parents;
  parents.reserve(N + 1);
  for (const auto& l : layers) parents.push_back(l.n);
  parents.push_back(weights.n);
  return record(std::move(out), std::move(parents), [N](Node& self) {
    Node& wnode = *self.parents[N];
    for (std::size_t n = 0; n < N; ++n) {
      Node& f = *self.parents[n];
      const double wn = wnode.val.v[n];
      if (f.requires_grad) {
        Tensor& g = f.g();
        for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += wn * self.grad.v[i];
      }
      if (wnode.requires_grad) {
        double dot = 0.0;
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
          dot += f.val.v[i] * self.grad.v[i];
        wnode.g().v[n] += dot;
      }
    }
  });
}

Var Graph::concat_cols(Var a, Var b) {
  const std::size_t R = a.val().rows();
  DMOS_CHECK(b.val().rows() == R, ErrorKind::ShapeMismatch, "concat_cols: row mismatch");
  const std::size_t Ca = a.val().cols(), Cb = b.val().cols();
  std::vector<std::size_t> shape = a.val().shape;
  shape.back() = Ca + Cb;
  Tensor out(shape);
  for (std::size_t r = 0; r < R; ++r) {
    std::copy_n(&a.val().v[r * Ca], Ca, &out.v[r * (Ca + Cb)]);
    std::copy_n(&b.val().v[r * Cb], Cb, &out.v[r * (Ca + Cb) + Ca]);
  }
  return record(std::move(out), {a.n, b.n}, [R, Ca, Cb](Node& self) {
    for (std::size_t r = 0; r < R; ++r) {
      if (self.parents[0]->requires_grad) {
        Tensor& g = self.parents[0]->g();
        for (std::size_t c = 0; c < Ca; ++c)
          g.v[r * Ca + c] += self.grad.v[r * (Ca + Cb) + c];
      }
      if (self.parents[1]->requires_grad) {
        Tensor& g = self.parents[1]->g();
        for (std::size_t c = 0; c < Cb; ++c)
          g.v[r * Cb + c] += self.grad.v[r * (Ca + Cb) + Ca + c];
      }
    }
  });
}

Var Graph::slice_cols(Var x, std::size_t c0, std::size_t len) {
  const std::size_t R = x.val().rows(), C = x.val().cols();
  DMOS_CHECK(c0 + len <= C, ErrorKind::ShapeMismatch, "slice_cols: out of range");
  std::vector<std::size_t> shape = x.val().shape;
  shape.back() = len;
  Tensor out(shape);
  for (std::size_t r = 0; r < R; ++r)
    std::copy_n(&x.val().v[r * C + c0], len, &out.v[r * len]);
  return record(std::move(out), {x.n}, [R, C, c0, len](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < len; ++c)
        g.v[r * C + c0 + c] += self.grad.v[r * len + c];
  });
}

Var Graph::time_slice(Var x, std::size_t t) {
  DMOS_CHECK(x.val().rank() == 3, ErrorKind::ShapeMismatch, "time_slice: need [B,T,C]");
  const std::size_t B = x.val().dim(0), T = x.val().dim(1), C = x.val().dim(2);
  DMOS_CHECK(t < T, ErrorKind::ShapeMismatch, "time_slice: t out of range");
  Tensor out({B, C});
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(&x.val().v[(b * T + t) * C], C, &out.v[b * C]);
  return record(std::move(out), {x.n}, [B, T, C, t](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        g.v[(b * T + t) * C + c] += self.grad.v[b * C + c];
  });
}

Var Graph::time_stack(const std::vector<Var>& steps) {
  const std::size_t T = steps.size();
  DMOS_CHECK(T >= 1, ErrorKind::ShapeMismatch, "time_stack: empty");
  const std::size_t B = steps[0].val().dim(0), C = steps[0].val().dim(1);
  Tensor out({B, T, C});
  for (std::size_t t = 0; t < T; ++t) {
    DMOS_CHECK(steps[t].val().dim(0) == B && steps[t].val().dim(1) == C,
               ErrorKind::ShapeMismatch, "time_stack: step shape mismatch");
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(&steps[t].val().v[b * C], C, &out.v[(b * T + t) * C]);
  }
  std::vector<NodeP> parents;
  parents.reserve(T);
  for (const auto& s : steps) parents.push_back(s.n);
  return record(std::move(out), std::move(parents), [B, T, C](Node& self) {
    for (std::size_t t = 0; t < T; ++t) {
      Node& p = *self.parents[t];
      if (!p.requires_grad) continue;
      Tensor& g = p.g();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          g.v[b * C + c] += self.grad.v[(b * T + t) * C + c];
    }
  });
}

// Same-padded temporal convolution. x: [B, T, Cin], w: [K, Cin, Cout].
// Implemented as a sum over kernel taps of time-shifted GEMMs.
Var Graph::conv1d_time(Var x, Var w, Var b) {
  DMOS_CHECK(x.val().rank() == 3 && w.val().rank() == 3, ErrorKind::ShapeMismatch,
             "conv1d_time: need x [B,T,C], w [K,Cin,Cout]");
  const std::size_t B = x.val().dim(0), T = x.val().dim(1), Cin = x.val().dim(2);
  const std::size_t K = w.val().dim(0), Cout = w.val().dim(2);
  DMOS_CHECK(w.val().dim(1) == Cin, ErrorKind::ShapeMismatch, "conv1d_time: Cin mismatch");
  DMOS_CHECK(K % 2 == 1, ErrorKind::ShapeMismatch, "conv1d_time: kernel must be odd");
  DMOS_CHECK(b.val().numel() == Cout, ErrorKind::ShapeMismatch, "conv1d_time: bias mismatch");
  const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(K / 2);

  Tensor out({B, T, Cout});
  const std::size_t R = B * T;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < Cout; ++c) out.v[r * Cout + c] = b.val().v[c];

  Tensor shifted({B, T, Cin});
  for (std::size_t k = 0; k < K; ++k) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - P;
    shifted.fill(0.0);
    for (std::size_t bb = 0; bb < B; ++bb)
      for (std::size_t t = 0; t < T; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + off;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        std::copy_n(&x.val().v[(bb * T + src) * Cin], Cin,
                    &shifted.v[(bb * T + t) * Cin]);
      }
    ECMap wk(&w.val().v[k * Cin * Cout], Cin, Cout);
    as_mat_mut(out).noalias() += as_mat(shifted) * wk;
  }

  return record(std::move(out), {x.n, w.n, b.n}, [B, T, Cin, Cout, K, P](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    const std::size_t R = B * T;
    if (bn.requires_grad) {
      Tensor& g = bn.g();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < Cout; ++c) g.v[c] += self.grad.v[r * Cout + c];
    }
    Tensor shifted({B, T, Cin});
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - P;
      shifted.fill(0.0);
      for (std::size_t bb = 0; bb < B; ++bb)
        for (std::size_t t = 0; t < T; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + off;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          std::copy_n(&xn.val.v[(bb * T + src) * Cin], Cin,
                      &shifted.v[(bb * T + t) * Cin]);
        }
      if (wn.requires_grad) {
        EMap gwk(&wn.g().v[k * Cin * Cout], Cin, Cout);
        gwk.noalias() += as_mat(shifted).transpose() * as_mat(self.grad);
      }
      if (xn.requires_grad) {
        // dX[b, t+off] += dY[b, t] * wk^T
        ECMap wk(&wn.val.v[k * Cin * Cout], Cin, Cout);
        Tensor dshift({B, T, Cin});
        as_mat_mut(dshift).noalias() = as_mat(self.grad) * wk.transpose();
        Tensor& gx = xn.g();
        for (std::size_t bb = 0; bb < B; ++bb)
          for (std::size_t t = 0; t < T; ++t) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + off;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t c = 0; c < Cin; ++c)
              gx.v[(bb * T + src) * Cin + c] += dshift.v[(bb * T + t) * Cin + c];
          }
      }
    }
  });
}

Var Graph::apply_time_mask(Var x, const FrameMask& mask) {
  DMOS_CHECK(x.val().rank() == 3, ErrorKind::ShapeMismatch, "apply_time_mask: need [B,T,C]");
  const std::size_t B = x.val().dim(0), T = x.val().dim(1), C = x.val().dim(2);
  DMOS_CHECK(mask.batch == B && mask.frames == T, ErrorKind::ShapeMismatch,
             "apply_time_mask: mask shape mismatch");
  Tensor out = x.val();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      if (!mask.at(b, t))
        std::fill_n(&out.v[(b * T + t) * C], C, 0.0);
  FrameMask m = mask;
  return record(std::move(out), {x.n}, [m, B, T, C](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        if (!m.at(b, t)) continue;
        for (std::size_t c = 0; c < C; ++c)
          g.v[(b * T + t) * C + c] += self.grad.v[(b * T + t) * C + c];
      }
  });
}

// Batch normalization across (batch, time) per channel. Statistics use only
// unmasked frames; normalization is applied to every position with those
// statistics. Running buffers are updated with the unbiased variance.
Var Graph::batchnorm_time(Var x, Var gamma, Var beta, BatchNormState& state,
                          const FrameMask& mask, bool training, bool update_running,
                          double momentum, double eps) {
  DMOS_CHECK(x.val().rank() == 3, ErrorKind::ShapeMismatch, "batchnorm_time: need [B,T,C]");
  const std::size_t B = x.val().dim(0), T = x.val().dim(1), C = x.val().dim(2);
  DMOS_CHECK(gamma.val().numel() == C && beta.val().numel() == C,
             ErrorKind::ShapeMismatch, "batchnorm_time: affine shape mismatch");
  DMOS_CHECK(mask.batch == B && mask.frames == T, ErrorKind::ShapeMismatch,
             "batchnorm_time: mask shape mismatch");

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  std::size_t M = 0;
  if (training) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask.at(b, t)) continue;
        ++M;
        const double* row = &x.val().v[(b * T + t) * C];
        for (std::size_t c = 0; c < C; ++c) mean[c] += row[c];
      }
    DMOS_CHECK(M >= 1, ErrorKind::AllFramesMasked, "batchnorm_time: no unmasked frames");
    for (std::size_t c = 0; c < C; ++c) mean[c] /= double(M);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask.at(b, t)) continue;
        const double* row = &x.val().v[(b * T + t) * C];
        for (std::size_t c = 0; c < C; ++c) {
          const double d = row[c] - mean[c];
          var[c] += d * d;
        }
      }
    for (std::size_t c = 0; c < C; ++c) var[c] /= double(M);
    if (update_running) {
      const double unbias = M > 1 ? double(M) / double(M - 1) : 1.0;
      for (std::size_t c = 0; c < C; ++c) {
        state.running_mean.v[c] =
            (1.0 - momentum) * state.running_mean.v[c] + momentum * mean[c];
        state.running_var.v[c] =
            (1.0 - momentum) * state.running_var.v[c] + momentum * var[c] * unbias;
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = state.running_mean.v[c];
      var[c] = state.running_var.v[c];
    }
  }

  std::vector<double> inv(C);
  for (std::size_t c = 0; c < C; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out({B, T, C});
  Tensor xhat({B, T, C});
  const std::size_t R = B * T;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (x.val().v[r * C + c] - mean[c]) * inv[c];
      xhat.v[r * C + c] = h;
      out.v[r * C + c] = gamma.val().v[c] * h + beta.val().v[c];
    }

  FrameMask m = mask;
  std::vector<double> inv_saved = inv;
  const std::size_t Msaved = M;
  return record(std::move(out), {x.n, gamma.n, beta.n},
                [xhat, m, inv_saved, Msaved, training, B, T, C](Node& self) {
    Node& xn = *self.parents[0];
    Node& gn = *self.parents[1];
    Node& bn = *self.parents[2];
    const std::size_t R = B * T;
    if (gn.requires_grad) {
      Tensor& g = gn.g();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          g.v[c] += self.grad.v[r * C + c] * xhat.v[r * C + c];
    }
    if (bn.requires_grad) {
      Tensor& g = bn.g();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g.v[c] += self.grad.v[r * C + c];
    }
    if (!xn.requires_grad) return;
    Tensor& gx = xn.g();
    const Tensor& gamma_v = gn.val;
    if (!training) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          gx.v[r * C + c] += self.grad.v[r * C + c] * gamma_v.v[c] * inv_saved[c];
      return;
    }
    // Training mode: statistics depend on unmasked x. All output positions,
    // masked included, were normalized with them, so the mean terms sum the
    // incoming gradient over every position.
    std::vector<double> sum_g(C, 0.0), sum_gh(C, 0.0);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        sum_g[c] += self.grad.v[r * C + c];
        sum_gh[c] += self.grad.v[r * C + c] * xhat.v[r * C + c];
      }
    const double invM = 1.0 / double(Msaved);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = b * T + t;
        const bool in_stats = m.at(b, t);
        for (std::size_t c = 0; c < C; ++c) {
          double d = self.grad.v[r * C + c];
          if (in_stats)
            d -= invM * (sum_g[c] + xhat.v[r * C + c] * sum_gh[c]);
          gx.v[r * C + c] += gamma_v.v[c] * inv_saved[c] * d;
        }
      }
  });
}

Var Graph::layernorm_rows(Var x, Var gamma, Var beta, double eps) {
  const std::size_t C = x.val().cols(), R = x.val().rows();
  DMOS_CHECK(gamma.val().numel() == C && beta.val().numel() == C,
             ErrorKind::ShapeMismatch, "layernorm_rows: affine shape mismatch");
  Tensor out(x.val().shape);
  Tensor xhat(x.val().shape);
  std::vector<double> inv(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = &x.val().v[r * C];
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += row[c];
    mu /= double(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = row[c] - mu;
      var += d * d;
    }
    var /= double(C);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (row[c] - mu) * inv[r];
      xhat.v[r * C + c] = h;
      out.v[r * C + c] = gamma.val().v[c] * h + beta.val().v[c];
    }
  }
  return record(std::move(out), {x.n, gamma.n, beta.n}, [xhat, inv, R, C](Node& self) {
    Node& xn = *self.parents[0];
    Node& gn = *self.parents[1];
    Node& bn = *self.parents[2];
    if (gn.requires_grad) {
      Tensor& g = gn.g();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          g.v[c] += self.grad.v[r * C + c] * xhat.v[r * C + c];
    }
    if (bn.requires_grad) {
      Tensor& g = bn.g();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g.v[c] += self.grad.v[r * C + c];
    }
    if (!xn.requires_grad) return;
    Tensor& gx = xn.g();
    for (std::size_t r = 0; r < R; ++r) {
      double mg = 0.0, mgh = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double gg = self.grad.v[r * C + c] * gn.val.v[c];
        mg += gg;
        mgh += gg * xhat.v[r * C + c];
      }
      mg /= double(C);
      mgh /= double(C);
      for (std::size_t c = 0; c < C; ++c) {
        const double gg = self.grad.v[r * C + c] * gn.val.v[c];
        gx.v[r * C + c] += inv[r] * (gg - mg - xhat.v[r * C + c] * mgh);
      }
    }
  });
}

Var Graph::masked_mean_time(Var x, const FrameMask& mask) {
  DMOS_CHECK(x.val().rank() == 3, ErrorKind::ShapeMismatch, "masked_mean_time: need [B,T,C]");
  const std::size_t B = x.val().dim(0), T = x.val().dim(1), C = x.val().dim(2);
  DMOS_CHECK(mask.batch == B && mask.frames == T, ErrorKind::ShapeMismatch,
             "masked_mean_time: mask shape mismatch");
  std::vector<double> invL(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t L = mask.count_row(b);
    DMOS_CHECK(L >= 1, ErrorKind::AllFramesMasked, "masked_mean_time: empty row");
    invL[b] = 1.0 / double(L);
  }
  Tensor out({B, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      if (!mask.at(b, t)) continue;
      const double* row = &x.val().v[(b * T + t) * C];
      for (std::size_t c = 0; c < C; ++c) out.v[b * C + c] += row[c] * invL[b];
    }
  FrameMask m = mask;
  return record(std::move(out), {x.n}, [m, invL, B, T, C](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        if (!m.at(b, t)) continue;
        for (std::size_t c = 0; c < C; ++c)
          g.v[(b * T + t) * C + c] += self.grad.v[b * C + c] * invL[b];
      }
  });
}

// Fused LSTM cell. z holds the pre-activations [B, 4H] in gate order
// (input, forget, cell, output); output is (h | c_new) as [B, 2H].
Var Graph::lstm_cell(Var z, Var c_prev) {
  const std::size_t B = z.val().dim(0);
  const std::size_t H4 = z.val().cols();
  DMOS_CHECK(H4 % 4 == 0, ErrorKind::ShapeMismatch, "lstm_cell: z must be [B,4H]");
  const std::size_t H = H4 / 4;
  DMOS_CHECK(c_prev.val().dim(0) == B && c_prev.val().cols() == H,
             ErrorKind::ShapeMismatch, "lstm_cell: c_prev shape mismatch");

  Tensor gates({B, 4 * H});  // activated gates: i, f, g, o
  Tensor out({B, 2 * H});
  for (std::size_t b = 0; b < B; ++b) {
    const double* zrow = &z.val().v[b * 4 * H];
    double* grow = &gates.v[b * 4 * H];
    for (std::size_t h = 0; h < H; ++h) {
      const double i = 1.0 / (1.0 + std::exp(-zrow[h]));
      const double f = 1.0 / (1.0 + std::exp(-zrow[H + h]));
      const double g = std::tanh(zrow[2 * H + h]);
      const double o = 1.0 / (1.0 + std::exp(-zrow[3 * H + h]));
      grow[h] = i;
      grow[H + h] = f;
      grow[2 * H + h] = g;
      grow[3 * H + h] = o;
      const double c_new = f * c_prev.val().v[b * H + h] + i * g;
      out.v[b * 2 * H + h] = o * std::tanh(c_new);
      out.v[b * 2 * H + H + h] = c_new;
    }
  }
  Tensor saved_gates = gates;
  return record(std::move(out), {z.n, c_prev.n}, [saved_gates, B, H](Node& self) {
    Node& zn = *self.parents[0];
    Node& cn = *self.parents[1];
    for (std::size_t b = 0; b < B; ++b) {
      const double* grow = &saved_gates.v[b * 4 * H];
      for (std::size_t h = 0; h < H; ++h) {
        const double i = grow[h], f = grow[H + h], g = grow[2 * H + h], o = grow[3 * H + h];
        const double c_new = self.val.v[b * 2 * H + H + h];
        const double tc = std::tanh(c_new);
        const double dh = self.grad.v[b * 2 * H + h];
        const double dc_out = self.grad.v[b * 2 * H + H + h];
        const double dc = dc_out + dh * o * (1.0 - tc * tc);
        if (zn.requires_grad) {
          Tensor& gz = zn.g();
          gz.v[b * 4 * H + h] += dc * g * i * (1.0 - i);
          gz.v[b * 4 * H + H + h] += dc * cn.val.v[b * H + h] * f * (1.0 - f);
          gz.v[b * 4 * H + 2 * H + h] += dc * i * (1.0 - g * g);
          gz.v[b * 4 * H + 3 * H + h] += dh * tc * o * (1.0 - o);
        }
        if (cn.requires_grad) cn.g().v[b * H + h] += dc * f;
      }
    }
  });
}

Var Graph::mse_vec(Var pred, const Tensor& target) {
  const std::size_t B = pred.val().numel();
  DMOS_CHECK(target.numel() == B, ErrorKind::ShapeMismatch, "mse_vec: length mismatch");
  DMOS_CHECK(pred.val().all_finite() && target.all_finite(), ErrorKind::NonFiniteInput,
             "mse_vec: non-finite input");
  double acc = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double d = pred.val().v[i] - target.v[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / double(B));
  Tensor tgt = target;
  return record(std::move(out), {pred.n}, [tgt, B](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    const double s = 2.0 * self.grad.v[0] / double(B);
    for (std::size_t i = 0; i < B; ++i)
      g.v[i] += s * (self.parents[0]->val.v[i] - tgt.v[i]);
  });
}

// Per-layer token cross entropy: per utterance, mean of
// -log softmax(logits)[target] over unmasked frames; reduced by mean over
// the batch.
Var Graph::ce_masked_time(Var logits, const std::vector<std::int32_t>& targets,
                          const FrameMask& mask) {
  Tensor lg = logits.val();
  std::size_t B, T, K;
  if (lg.rank() == 3) {
    B = lg.dim(0);
    T = lg.dim(1);
    K = lg.dim(2);
  } else {
    DMOS_CHECK(lg.rank() == 2, ErrorKind::ShapeMismatch, "ce_masked_time: need [B,T,K] or [T,K]");
    B = 1;
    T = lg.dim(0);
    K = lg.dim(1);
  }
  DMOS_CHECK(mask.batch == B && mask.frames == T, ErrorKind::ShapeMismatch,
             "ce_masked_time: mask shape mismatch");
  DMOS_CHECK(targets.size() == B * T, ErrorKind::ShapeMismatch,
             "ce_masked_time: target count mismatch");

  std::vector<double> invL(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t L = mask.count_row(b);
    DMOS_CHECK(L >= 1, ErrorKind::AllFramesMasked, "ce_masked_time: empty utterance");
    invL[b] = 1.0 / double(L);
  }

  double total = 0.0;
  Tensor probs({B, T, K});  // saved softmax for backward
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      if (!mask.at(b, t)) continue;
      const std::int32_t tgt = targets[b * T + t];
      DMOS_CHECK(tgt >= 0 && std::size_t(tgt) < K, ErrorKind::TargetOutOfRange,
                 "ce_masked_time: target id out of range");
      const double* row = &logits.val().v[(b * T + t) * K];
      double m = row[0];
      for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
      const double lse = m + std::log(z);
      total += (lse - row[tgt]) * invL[b] / double(B);
      double* prow = &probs.v[(b * T + t) * K];
      for (std::size_t k = 0; k < K; ++k) prow[k] = std::exp(row[k] - lse);
    }

  FrameMask msk = mask;
  std::vector<std::int32_t> tgts = targets;
  return record(Tensor::scalar(total), {logits.n},
                [probs, msk, tgts, invL, B, T, K](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    const double G = self.grad.v[0];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        if (!msk.at(b, t)) continue;
        const double s = G * invL[b] / double(B);
        const double* prow = &probs.v[(b * T + t) * K];
        double* grow = &g.v[(b * T + t) * K];
        for (std::size_t k = 0; k < K; ++k) grow[k] += s * prow[k];
        grow[tgts[b * T + t]] -= s;
      }
  });
}

// MSE distillation head loss: per utterance, mean squared error over unmasked
// frames and channels; reduced by mean over the batch.
Var Graph::masked_mse_time(Var pred, const Tensor& target, const FrameMask& mask) {
  DMOS_CHECK(pred.val().same_shape(target), ErrorKind::ShapeMismatch,
             "masked_mse_time: shape mismatch");
  std::size_t B, T, C;
  if (pred.val().rank() == 3) {
    B = pred.val().dim(0);
    T = pred.val().dim(1);
    C = pred.val().dim(2);
  } else {
    DMOS_CHECK(pred.val().rank() == 2, ErrorKind::ShapeMismatch,
               "masked_mse_time: need [B,T,C] or [T,C]");
    B = 1;
    T = pred.val().dim(0);
    C = pred.val().dim(1);
  }
  DMOS_CHECK(mask.batch == B && mask.frames == T, ErrorKind::ShapeMismatch,
             "masked_mse_time: mask shape mismatch");
  std::vector<double> w(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t L = mask.count_row(b);
    DMOS_CHECK(L >= 1, ErrorKind::AllFramesMasked, "masked_mse_time: empty utterance");
    w[b] = 1.0 / (double(L) * double(C) * double(B));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      if (!mask.at(b, t)) continue;
      const double* prow = &pred.val().v[(b * T + t) * C];
      const double* trow = &target.v[(b * T + t) * C];
      for (std::size_t c = 0; c < C; ++c) {
        const double d = prow[c] - trow[c];
        total += d * d * w[b];
      }
    }
  FrameMask msk = mask;
  Tensor tgt = target;
  return record(Tensor::scalar(total), {pred.n}, [msk, tgt, w, B, T, C](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Tensor& g = self.parents[0]->g();
    const double G = self.grad.v[0];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        if (!msk.at(b, t)) continue;
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = (b * T + t) * C + c;
          g.v[i] += G * 2.0 * w[b] * (self.parents[0]->val.v[i] - tgt.v[i]);
        }
      }
  });
}

Var Graph::add_scaled(Var a, Var b, double c) {
  DMOS_CHECK(a.val().numel() == 1 && b.val().numel() == 1, ErrorKind::ShapeMismatch,
             "add_scaled: scalars only");
  Tensor out = Tensor::scalar(a.val().v[0] + c * b.val().v[0]);
  return record(std::move(out), {a.n, b.n}, [c](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->g().v[0] += self.grad.v[0];
    if (self.parents[1]->requires_grad) self.parents[1]->g().v[0] += c * self.grad.v[0];
  });
}

Var Graph::mean_of(const std::vector<Var>& scalars) {
  const std::size_t N = scalars.size();
  DMOS_CHECK(N >= 1, ErrorKind::ShapeMismatch, "mean_of: empty");
  double acc = 0.0;
  std::vector<NodeP> parents;
  parents.reserve(N);
  for (const auto& s : scalars) {
    DMOS_CHECK(s.val().numel() == 1, ErrorKind::ShapeMismatch, "mean_of: scalars only");
    acc += s.val().v[0];
    parents.push_back(s.n);
  }
  return record(Tensor::scalar(acc / double(N)), std::move(parents), [N](Node& self) {
    const double s = self.grad.v[0] / double(N);
    for (auto& p : self.parents)
      if (p->requires_grad) p->g().v[0] += s;
  });
}

}  // namespace dmos::ad
