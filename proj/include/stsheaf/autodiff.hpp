// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "stsheaf/core.hpp"

namespace stsheaf::ad {

inline int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int s : shape) n *= s;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major tensor. No broadcasting anywhere except scalar * tensor;
// mismatched shapes are an error, never silently expanded.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data size does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(numel_of(t.shape), 0.0);
    return t;
  }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor from_mat(const Mat& m) {
    return Tensor({m.rows, m.cols}, m.data);
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int last_dim() const { return shape.empty() ? 1 : shape.back(); }
  bool empty() const { return data.empty() && shape.empty(); }

  Mat to_mat() const {
    require(rank() == 2, "to_mat requires a rank-2 tensor");
    return Mat(shape[0], shape[1], data);
  }
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Append-only reverse-mode tape. Nodes are recorded in topological order by
// construction; backward() runs once per tape in reverse order.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  Var leaf(Tensor t) {
    bool rg = t.requires_grad;
    return push(std::move(t), {}, nullptr, rg);
  }

  Var constant(Tensor t) {
    t.requires_grad = false;
    return push(std::move(t), {}, nullptr, false);
  }

  const Tensor& value(Var v) const { return nodes_[check_id(v)].value; }

  // Gradient of the last backward pass; zeros for unreached nodes.
  Tensor grad(Var v) const {
    int id = check_id(v);
    require(consumed_, "grad: backward has not been run on this tape");
    if (grads_[id].empty()) return Tensor::zeros(nodes_[id].value.shape);
    return grads_[id];
  }

  bool consumed() const { return consumed_; }
  size_t num_nodes() const { return nodes_.size(); }

  void backward(Var loss) {
    int id = check_id(loss);
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    if (nodes_[id].value.numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  shape_str(nodes_[id].value.shape));
    consumed_ = true;
    grads_.assign(nodes_.size(), Tensor{});
    grads_[id] = Tensor::full(nodes_[id].value.shape, 1.0);
    for (int i = id; i >= 0; --i) {
      if (!nodes_[i].backward || grads_[i].empty() || !nodes_[i].needs_grad) continue;
      nodes_[i].backward(*this, i);
    }
  }

  // ---- primitives ----

  Var add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.shape == tb.shape, "add: shape mismatch " + shape_str(ta.shape) + " vs " +
                                      shape_str(tb.shape));
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] + tb.data[i];
    return push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      t.accumulate(t.nodes_[self].parents[0], g.data, 1.0);
      t.accumulate(t.nodes_[self].parents[1], g.data, 1.0);
    });
  }

  Var sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.shape == tb.shape, "sub: shape mismatch " + shape_str(ta.shape) + " vs " +
                                      shape_str(tb.shape));
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] - tb.data[i];
    return push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      t.accumulate(t.nodes_[self].parents[0], g.data, 1.0);
      t.accumulate(t.nodes_[self].parents[1], g.data, -1.0);
    });
  }

  Var elementwise_mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.shape == tb.shape, "elementwise_mul: shape mismatch " + shape_str(ta.shape) +
                                      " vs " + shape_str(tb.shape));
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i];
    return push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int pa = t.nodes_[self].parents[0], pb = t.nodes_[self].parents[1];
      const Tensor& va = t.nodes_[pa].value;
      const Tensor& vb = t.nodes_[pb].value;
      if (t.wants_grad(pa)) {
        Tensor& ga = t.grad_mut(pa);
        for (int64_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * vb.data[i];
      }
      if (t.wants_grad(pb)) {
        Tensor& gb = t.grad_mut(pb);
        for (int64_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * va.data[i];
      }
    });
  }

  // the single permitted broadcast: scalar * tensor
  Var mul_scalar(Var a, double s) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = s * ta.data[i];
    return push(std::move(out), {a.id}, [s](Tape& t, int self) {
      t.accumulate(t.nodes_[self].parents[0], t.grads_[self].data, s);
    });
  }

  // adds a length-C vector across the last axis (bias add)
  Var add_rowvec(Var x, Var b) {
    const Tensor& tx = value(x);
    const Tensor& tb = value(b);
    require(tb.rank() == 1, "add_rowvec: vector must be rank 1");
    int c = tx.last_dim();
    require(tb.shape[0] == c, "add_rowvec: vector length " + std::to_string(tb.shape[0]) +
                                  " != last dim " + std::to_string(c));
    Tensor out = tx;
    out.requires_grad = false;
    int64_t rows = tx.numel() / c;
    for (int64_t r = 0; r < rows; ++r)
      for (int k = 0; k < c; ++k) out.data[r * c + k] += tb.data[k];
    return push(std::move(out), {x.id, b.id}, [c](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int px = t.nodes_[self].parents[0], pb = t.nodes_[self].parents[1];
      t.accumulate(px, g.data, 1.0);
      if (t.wants_grad(pb)) {
        Tensor& gb = t.grad_mut(pb);
        int64_t rows = g.numel() / c;
        for (int64_t r = 0; r < rows; ++r)
          for (int k = 0; k < c; ++k) gb.data[k] += g.data[r * c + k];
      }
    });
  }

  // matmul: rank-2 x rank-2, or batched with identical leading dims
  Var matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require(ta.rank() >= 2 && tb.rank() >= 2, "matmul: operands must have rank >= 2");
    require(ta.rank() == tb.rank(), "matmul: operand ranks must match, got " +
                                        shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    for (int i = 0; i + 2 < ta.rank(); ++i)
      require(ta.shape[i] == tb.shape[i], "matmul: batch dims mismatch");
    int m = ta.shape[ta.rank() - 2], k = ta.shape[ta.rank() - 1];
    int k2 = tb.shape[tb.rank() - 2], n = tb.shape[tb.rank() - 1];
    require(k == k2, "matmul: inner dims mismatch " + shape_str(ta.shape) + " vs " +
                         shape_str(tb.shape));
    int64_t batch = ta.numel() / (static_cast<int64_t>(m) * k);
    std::vector<int> oshape(ta.shape.begin(), ta.shape.end() - 2);
    oshape.push_back(m);
    oshape.push_back(n);
    Tensor out = Tensor::zeros(oshape);
    for (int64_t g = 0; g < batch; ++g) {
      const double* A = ta.data.data() + g * m * k;
      const double* B = tb.data.data() + g * k * n;
      double* C = out.data.data() + g * m * n;
      for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double aik = A[i * k + kk];
          if (aik == 0.0) continue;
          const double* Br = B + kk * n;
          double* Cr = C + i * n;
          for (int j = 0; j < n; ++j) Cr[j] += aik * Br[j];
        }
    }
    return push(std::move(out), {a.id, b.id}, [m, k, n, batch](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int pa = t.nodes_[self].parents[0], pb = t.nodes_[self].parents[1];
      const Tensor& va = t.nodes_[pa].value;
      const Tensor& vb = t.nodes_[pb].value;
      if (t.wants_grad(pa)) {
        Tensor& ga = t.grad_mut(pa);  // dA = dC * B^T
        for (int64_t bt = 0; bt < batch; ++bt) {
          const double* G = g.data.data() + bt * m * n;
          const double* B = vb.data.data() + bt * k * n;
          double* GA = ga.data.data() + bt * m * k;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              double gij = G[i * n + j];
              if (gij == 0.0) continue;
              for (int kk = 0; kk < k; ++kk) GA[i * k + kk] += gij * B[kk * n + j];
            }
        }
      }
      if (t.wants_grad(pb)) {
        Tensor& gb = t.grad_mut(pb);  // dB = A^T * dC
        for (int64_t bt = 0; bt < batch; ++bt) {
          const double* G = g.data.data() + bt * m * n;
          const double* A = va.data.data() + bt * m * k;
          double* GB = gb.data.data() + bt * k * n;
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              double aik = A[i * k + kk];
              if (aik == 0.0) continue;
              const double* Gr = G + i * n;
              double* GBr = GB + kk * n;
              for (int j = 0; j < n; ++j) GBr[j] += aik * Gr[j];
            }
        }
      }
    });
  }

  Var concat(const std::vector<Var>& parts, int axis) {
    require(!parts.empty(), "concat: needs at least one input");
    const Tensor& t0 = value(parts[0]);
    int r = t0.rank();
    require(axis >= 0 && axis < r, "concat: axis out of range");
    std::vector<int> oshape = t0.shape;
    int64_t axis_total = 0;
    for (Var p : parts) {
      const Tensor& tp = value(p);
      require(tp.rank() == r, "concat: rank mismatch");
      for (int i = 0; i < r; ++i)
        if (i != axis)
          require(tp.shape[i] == t0.shape[i], "concat: non-axis dims must match");
      axis_total += tp.shape[axis];
    }
    oshape[axis] = static_cast<int>(axis_total);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= t0.shape[i];
    for (int i = axis + 1; i < r; ++i) inner *= t0.shape[i];
    Tensor out = Tensor::zeros(oshape);
    std::vector<int> ids;
    std::vector<int64_t> spans;  // per part: shape[axis] * inner
    int64_t offset = 0;
    for (Var p : parts) {
      const Tensor& tp = value(p);
      int64_t span = static_cast<int64_t>(tp.shape[axis]) * inner;
      for (int64_t o = 0; o < outer; ++o)
        std::copy(tp.data.begin() + o * span, tp.data.begin() + (o + 1) * span,
                  out.data.begin() + o * axis_total * inner + offset);
      ids.push_back(p.id);
      spans.push_back(span);
      offset += span;
    }
    int64_t row = axis_total * inner;
    return push(std::move(out), ids, [outer, row, spans](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int64_t offset = 0;
      for (size_t pi = 0; pi < t.nodes_[self].parents.size(); ++pi) {
        int p = t.nodes_[self].parents[pi];
        int64_t span = spans[pi];
        if (t.wants_grad(p)) {
          Tensor& gp = t.grad_mut(p);
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < span; ++i)
              gp.data[o * span + i] += g.data[o * row + offset + i];
        }
        offset += span;
      }
    });
  }

  Var slice(Var a, int axis, int start, int len) {
    const Tensor& ta = value(a);
    int r = ta.rank();
    require(axis >= 0 && axis < r, "slice: axis out of range");
    require(start >= 0 && len > 0 && start + len <= ta.shape[axis], "slice: range out of bounds");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= ta.shape[i];
    for (int i = axis + 1; i < r; ++i) inner *= ta.shape[i];
    std::vector<int> oshape = ta.shape;
    oshape[axis] = len;
    Tensor out = Tensor::zeros(oshape);
    int64_t in_row = static_cast<int64_t>(ta.shape[axis]) * inner;
    int64_t out_row = static_cast<int64_t>(len) * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy(ta.data.begin() + o * in_row + start * inner,
                ta.data.begin() + o * in_row + (start + len) * inner,
                out.data.begin() + o * out_row);
    return push(std::move(out), {a.id}, [outer, inner, in_row, out_row, start](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < out_row; ++i)
          gp.data[o * in_row + start * inner + i] += g.data[o * out_row + i];
    });
  }

  Var reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = value(a);
    require(numel_of(shape) == ta.numel(), "reshape: element count mismatch " +
                                               shape_str(ta.shape) + " -> " + shape_str(shape));
    Tensor out = ta;
    out.requires_grad = false;
    out.shape = std::move(shape);
    return push(std::move(out), {a.id}, [](Tape& t, int self) {
      t.accumulate(t.nodes_[self].parents[0], t.grads_[self].data, 1.0);
    });
  }

  // swap the last two axes; leading axes act as batch
  Var transpose_last(Var a) {
    const Tensor& ta = value(a);
    require(ta.rank() >= 2, "transpose_last: rank must be >= 2");
    int m = ta.shape[ta.rank() - 2], n = ta.shape[ta.rank() - 1];
    int64_t batch = ta.numel() / (static_cast<int64_t>(m) * n);
    std::vector<int> oshape = ta.shape;
    std::swap(oshape[ta.rank() - 2], oshape[ta.rank() - 1]);
    Tensor out = Tensor::zeros(oshape);
    for (int64_t g = 0; g < batch; ++g) {
      const double* A = ta.data.data() + g * m * n;
      double* B = out.data.data() + g * m * n;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) B[j * m + i] = A[i * n + j];
    }
    return push(std::move(out), {a.id}, [m, n, batch](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      for (int64_t bt = 0; bt < batch; ++bt) {
        const double* G = g.data.data() + bt * m * n;
        double* GP = gp.data.data() + bt * m * n;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) GP[i * n + j] += G[j * m + i];
      }
    });
  }

  Var sigmoid(Var a) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
      double x = ta.data[i];
      // branch keeps exp() off the overflow path for large |x|
      out.data[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return push(std::move(out), {a.id}, [](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      const Tensor& y = t.nodes_[self].value;
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      for (int64_t i = 0; i < g.numel(); ++i)
        gp.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
  }

  Var relu(Var a) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
    return push(std::move(out), {a.id}, [](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      const Tensor& x = t.nodes_[p].value;
      Tensor& gp = t.grad_mut(p);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (x.data[i] > 0.0) gp.data[i] += g.data[i];
    });
  }

  Var abs_op(Var a) {
    const Tensor& ta = value(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::abs(ta.data[i]);
    return push(std::move(out), {a.id}, [](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      const Tensor& x = t.nodes_[p].value;
      Tensor& gp = t.grad_mut(p);
      for (int64_t i = 0; i < g.numel(); ++i) {
        double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
        gp.data[i] += g.data[i] * s;
      }
    });
  }

  Var softmax(Var a) {
    const Tensor& ta = value(a);
    int c = ta.last_dim();
    require(c > 0, "softmax: zero-length last axis");
    int64_t rows = ta.numel() / c;
    Tensor out = Tensor::zeros(ta.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const double* x = ta.data.data() + r * c;
      double* y = out.data.data() + r * c;
      double mx = x[0];
      for (int k = 1; k < c; ++k) mx = std::max(mx, x[k]);
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        y[k] = std::exp(x[k] - mx);
        sum += y[k];
      }
      for (int k = 0; k < c; ++k) y[k] /= sum;
    }
    return push(std::move(out), {a.id}, [c](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      const Tensor& y = t.nodes_[self].value;
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      int64_t rows = g.numel() / c;
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g.data.data() + r * c;
        const double* yr = y.data.data() + r * c;
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += gr[k] * yr[k];
        double* gpr = gp.data.data() + r * c;
        for (int k = 0; k < c; ++k) gpr[k] += yr[k] * (gr[k] - dot);
      }
    });
  }

  // LayerNorm over the last axis with learned affine (gain, bias), eps inside
  // the variance square root.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gain);
    const Tensor& tb = value(bias);
    int c = tx.last_dim();
    require(tg.rank() == 1 && tg.shape[0] == c, "layer_norm: gain must have shape [last_dim]");
    require(tb.rank() == 1 && tb.shape[0] == c, "layer_norm: bias must have shape [last_dim]");
    require(c > 0, "layer_norm: zero-length last axis");
    int64_t rows = tx.numel() / c;
    Tensor out = Tensor::zeros(tx.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = tx.data.data() + r * c;
      double* yr = out.data.data() + r * c;
      double mu = 0.0;
      for (int k = 0; k < c; ++k) mu += xr[k];
      mu /= c;
      double var = 0.0;
      for (int k = 0; k < c; ++k) var += (xr[k] - mu) * (xr[k] - mu);
      var /= c;
      double inv = 1.0 / std::sqrt(var + eps);
      for (int k = 0; k < c; ++k) yr[k] = tg.data[k] * (xr[k] - mu) * inv + tb.data[k];
    }
    return push(std::move(out), {x.id, gain.id, bias.id}, [c, eps](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int px = t.nodes_[self].parents[0];
      int pg = t.nodes_[self].parents[1];
      int pb = t.nodes_[self].parents[2];
      const Tensor& x = t.nodes_[px].value;
      const Tensor& gain = t.nodes_[pg].value;
      int64_t rows = g.numel() / c;
      std::vector<double> xhat(c);
      for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * c;
        const double* gr = g.data.data() + r * c;
        double mu = 0.0;
        for (int k = 0; k < c; ++k) mu += xr[k];
        mu /= c;
        double var = 0.0;
        for (int k = 0; k < c; ++k) var += (xr[k] - mu) * (xr[k] - mu);
        var /= c;
        double inv = 1.0 / std::sqrt(var + eps);
        for (int k = 0; k < c; ++k) xhat[k] = (xr[k] - mu) * inv;
        if (t.wants_grad(pg)) {
          Tensor& gg = t.grad_mut(pg);
          for (int k = 0; k < c; ++k) gg.data[k] += gr[k] * xhat[k];
        }
        if (t.wants_grad(pb)) {
          Tensor& gb = t.grad_mut(pb);
          for (int k = 0; k < c; ++k) gb.data[k] += gr[k];
        }
        if (t.wants_grad(px)) {
          Tensor& gx = t.grad_mut(px);
          double m1 = 0.0, m2 = 0.0;  // means of dxhat and dxhat*xhat
          for (int k = 0; k < c; ++k) {
            double dxh = gr[k] * gain.data[k];
            m1 += dxh;
            m2 += dxh * xhat[k];
          }
          m1 /= c;
          m2 /= c;
          double* gxr = gx.data.data() + r * c;
          for (int k = 0; k < c; ++k) {
            double dxh = gr[k] * gain.data[k];
            gxr[k] += inv * (dxh - m1 - xhat[k] * m2);
          }
        }
      }
    });
  }

  // out[pos[i], :] += v[i, :]; out[neg[i], :] -= v[i, :]. Either index list
  // may be empty to skip that side. Backward is the signed gather.
  Var scatter_add_signed(Var values, std::vector<int> pos_idx, std::vector<int> neg_idx,
                         int out_rows) {
    const Tensor& tv = value(values);
    require(tv.rank() == 2, "scatter_add_signed: values must be rank 2");
    int r = tv.shape[0], c = tv.shape[1];
    require(pos_idx.empty() || static_cast<int>(pos_idx.size()) == r,
            "scatter_add_signed: pos index length must be 0 or match rows");
    require(neg_idx.empty() || static_cast<int>(neg_idx.size()) == r,
            "scatter_add_signed: neg index length must be 0 or match rows");
    for (int i : pos_idx) require(i >= 0 && i < out_rows, "scatter_add_signed: pos index range");
    for (int i : neg_idx) require(i >= 0 && i < out_rows, "scatter_add_signed: neg index range");
    Tensor out = Tensor::zeros({out_rows, c});
    for (int i = 0; i < r; ++i) {
      const double* src = tv.data.data() + static_cast<int64_t>(i) * c;
      if (!pos_idx.empty()) {
        double* dst = out.data.data() + static_cast<int64_t>(pos_idx[i]) * c;
        for (int k = 0; k < c; ++k) dst[k] += src[k];
      }
      if (!neg_idx.empty()) {
        double* dst = out.data.data() + static_cast<int64_t>(neg_idx[i]) * c;
        for (int k = 0; k < c; ++k) dst[k] -= src[k];
      }
    }
    return push(std::move(out), {values.id},
                [pos = std::move(pos_idx), neg = std::move(neg_idx), r, c](Tape& t, int self) {
                  const Tensor& g = t.grads_[self];
                  int p = t.nodes_[self].parents[0];
                  if (!t.wants_grad(p)) return;
                  Tensor& gp = t.grad_mut(p);
                  for (int i = 0; i < r; ++i) {
                    double* dst = gp.data.data() + static_cast<int64_t>(i) * c;
                    if (!pos.empty()) {
                      const double* src = g.data.data() + static_cast<int64_t>(pos[i]) * c;
                      for (int k = 0; k < c; ++k) dst[k] += src[k];
                    }
                    if (!neg.empty()) {
                      const double* src = g.data.data() + static_cast<int64_t>(neg[i]) * c;
                      for (int k = 0; k < c; ++k) dst[k] -= src[k];
                    }
                  }
                });
  }

  // out[i, :] = a[idx[i], :]; the transpose of scatter_add
  Var gather_rows(Var a, std::vector<int> idx) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "gather_rows: input must be rank 2");
    int c = ta.shape[1];
    for (int i : idx) require(i >= 0 && i < ta.shape[0], "gather_rows: index out of range");
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), c});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(ta.data.begin() + static_cast<int64_t>(idx[i]) * c,
                ta.data.begin() + static_cast<int64_t>(idx[i] + 1) * c,
                out.data.begin() + static_cast<int64_t>(i) * c);
    return push(std::move(out), {a.id}, [idx = std::move(idx), c](Tape& t, int self) {
      const Tensor& g = t.grads_[self];
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      for (size_t i = 0; i < idx.size(); ++i) {
        const double* src = g.data.data() + static_cast<int64_t>(i) * c;
        double* dst = gp.data.data() + static_cast<int64_t>(idx[i]) * c;
        for (int k = 0; k < c; ++k) dst[k] += src[k];
      }
    });
  }

  Var reduce_sum(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double x : ta.data) acc += x;
    return push(Tensor::scalar(acc), {a.id}, [](Tape& t, int self) {
      const double g = t.grads_[self].data[0];
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      for (double& x : gp.data) x += g;
    });
  }

  Var reduce_mean(Var a) {
    const Tensor& ta = value(a);
    require(ta.numel() > 0, "reduce_mean: empty tensor");
    double acc = 0.0;
    for (double x : ta.data) acc += x;
    double inv = 1.0 / static_cast<double>(ta.numel());
    return push(Tensor::scalar(acc * inv), {a.id}, [inv](Tape& t, int self) {
      const double g = t.grads_[self].data[0] * inv;
      int p = t.nodes_[self].parents[0];
      if (!t.wants_grad(p)) return;
      Tensor& gp = t.grad_mut(p);
      for (double& x : gp.data) x += g;
    });
  }

 private:
  struct Node {
    Tensor value;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;
    bool needs_grad = false;
  };

  int check_id(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("invalid tape handle");
    return v.id;
  }

  bool wants_grad(int id) const { return nodes_[id].needs_grad; }

  Tensor& grad_mut(int id) {
    if (grads_[id].empty()) grads_[id] = Tensor::zeros(nodes_[id].value.shape);
    return grads_[id];
  }

  void accumulate(int id, const std::vector<double>& g, double scale) {
    if (!wants_grad(id)) return;
    Tensor& dst = grad_mut(id);
    for (size_t i = 0; i < g.size(); ++i) dst.data[i] += scale * g[i];
  }

  Var push(Tensor value, std::vector<int> parents, std::function<void(Tape&, int)> backward,
           bool leaf_requires_grad = false) {
    if (check_finite_ && !all_finite(value.data))
      throw NumericError("non-finite value produced on tape at node " +
                         std::to_string(nodes_.size()));
    Node n;
    bool needs = leaf_requires_grad;
    for (int p : parents) {
      check_id(Var{p});
      needs = needs || nodes_[p].needs_grad;
    }
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool consumed_ = false;
  bool check_finite_ = true;
};

}  // namespace stsheaf::ad
