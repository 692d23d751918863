#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rayzer/tensor.hpp"

namespace rayzer::ad {

// Reverse-mode tape over 2-D tensors.
//
// A Tape owns every node created through it; node creation order is a
// topological order of the graph, so the backward pass is a single reverse
// sweep. All reductions run in a fixed (row-major) order, which makes both
// passes bit-deterministic on a given platform. Ops only record a backward
// closure when some input requires gradients, so constant subgraphs cost
// nothing on the way back.

template <typename T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;
  std::function<void()> back;  // empty for leaves and constants
  bool needs_grad = false;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> values;
  Tensor<T> grad;
  int uid = -1;  // position in the owning Weights, for external grad buffers

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), values(std::move(v)), grad(values.rows, values.cols) {}

  void zero_grad() { std::fill(grad.a.begin(), grad.a.end(), T(0)); }
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Node<T>* n = nullptr;
  Tape<T>* tape = nullptr;

  int rows() const { return n->val.rows; }
  int cols() const { return n->val.cols; }
  const Tensor<T>& val() const { return n->val; }
  T scalar() const { return n->val.a[0]; }
};

template <typename T>
class Tape {
 public:
  Var<T> make(Tensor<T> val, bool needs_grad) {
    nodes_.push_back(std::make_unique<Node<T>>());
    Node<T>* n = nodes_.back().get();
    n->val = std::move(val);
    n->grad = Tensor<T>(n->val.rows, n->val.cols);
    n->needs_grad = needs_grad;
    return Var<T>{n, this};
  }

  Var<T> constant(Tensor<T> v) { return make(std::move(v), false); }

  Var<T> scalar_const(T v) { return constant(Tensor<T>::scalar(v)); }

  // Leaf backed by a Parameter; harvest() accumulates its gradient.
  Var<T> leaf(Parameter<T>& p) {
    Var<T> v = make(p.values, true);
    leaves_.emplace_back(&p, v.n);
    return v;
  }

  // Seeds d(loss)=1 and sweeps the tape in reverse creation order.
  void backward(const Var<T>& loss) {
    if (loss.n->val.size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar (1x1)");
    }
    loss.n->grad.a[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* n = it->get();
      if (n->needs_grad && n->back) n->back();
    }
  }

  // Adds node gradients into their Parameters, in registration order.
  void harvest(T scale = T(1)) {
    for (auto& [p, n] : leaves_) {
      for (size_t i = 0; i < p->grad.a.size(); ++i) p->grad.a[i] += scale * n->grad.a[i];
    }
  }

  // Same accumulation into external per-uid buffers; lets batch samples run
  // on worker threads without touching the shared Parameters.
  void harvest_buffers(std::vector<Tensor<T>>& by_uid) const {
    for (auto& [p, n] : leaves_) {
      Tensor<T>& buf = by_uid[size_t(p->uid)];
      for (size_t i = 0; i < buf.a.size(); ++i) buf.a[i] += n->grad.a[i];
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node<T>>> nodes_;
  std::vector<std::pair<Parameter<T>*, Node<T>*>> leaves_;
};

namespace detail {

inline std::string shape_str(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
void check_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.rows(), a.cols()) + " vs " +
                                shape_str(b.rows(), b.cols()));
  }
}

}  // namespace detail

// ----- elementwise -----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<T> out = a.val();
  for (size_t i = 0; i < out.a.size(); ++i) out.a[i] += b.val().a[i];
  bool ng = a.n->needs_grad || b.n->needs_grad;
  Var<T> y = a.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*an = a.n, *bn = b.n, *yn = y.n;
    y.n->back = [an, bn, yn] {
      if (an->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i) an->grad.a[i] += yn->grad.a[i];
      if (bn->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i) bn->grad.a[i] += yn->grad.a[i];
    };
  }
  return y;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("sub", a, b);
  Tensor<T> out = a.val();
  for (size_t i = 0; i < out.a.size(); ++i) out.a[i] -= b.val().a[i];
  bool ng = a.n->needs_grad || b.n->needs_grad;
  Var<T> y = a.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*an = a.n, *bn = b.n, *yn = y.n;
    y.n->back = [an, bn, yn] {
      if (an->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i) an->grad.a[i] += yn->grad.a[i];
      if (bn->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i) bn->grad.a[i] -= yn->grad.a[i];
    };
  }
  return y;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<T> out = a.val();
  for (size_t i = 0; i < out.a.size(); ++i) out.a[i] *= b.val().a[i];
  bool ng = a.n->needs_grad || b.n->needs_grad;
  Var<T> y = a.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*an = a.n, *bn = b.n, *yn = y.n;
    y.n->back = [an, bn, yn] {
      if (an->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i)
          an->grad.a[i] += yn->grad.a[i] * bn->val.a[i];
      if (bn->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i)
          bn->grad.a[i] += yn->grad.a[i] * an->val.a[i];
    };
  }
  return y;
}

template <typename T>
Var<T> cmul(const Var<T>& a, T c) {
  Tensor<T> out = a.val();
  for (auto& x : out.a) x *= c;
  bool ng = a.n->needs_grad;
  Var<T> y = a.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*an = a.n, *yn = y.n;
    y.n->back = [an, yn, c] {
      for (size_t i = 0; i < yn->grad.a.size(); ++i) an->grad.a[i] += c * yn->grad.a[i];
    };
  }
  return y;
}

// y = x * s with s a 1x1 var.
template <typename T>
Var<T> scalar_mul(const Var<T>& x, const Var<T>& s) {
  if (s.n->val.size() != 1) throw std::invalid_argument("scalar_mul: s must be 1x1");
  const T sv = s.scalar();
  Tensor<T> out = x.val();
  for (auto& v : out.a) v *= sv;
  bool ng = x.n->needs_grad || s.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *sn = s.n, *yn = y.n;
    y.n->back = [xn, sn, yn] {
      const T sv2 = sn->val.a[0];
      if (xn->needs_grad)
        for (size_t i = 0; i < yn->grad.a.size(); ++i)
          xn->grad.a[i] += sv2 * yn->grad.a[i];
      if (sn->needs_grad) {
        T acc = T(0);
        for (size_t i = 0; i < yn->grad.a.size(); ++i)
          acc += yn->grad.a[i] * xn->val.a[i];
        sn->grad.a[0] += acc;
      }
    };
  }
  return y;
}

template <typename T, typename FwdFn, typename BwdFn>
Var<T> unary_op(const Var<T>& x, FwdFn fwd, BwdFn dfdx) {
  Tensor<T> out(x.rows(), x.cols());
  for (size_t i = 0; i < out.a.size(); ++i) out.a[i] = fwd(x.val().a[i]);
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, dfdx] {
      for (size_t i = 0; i < yn->grad.a.size(); ++i)
        xn->grad.a[i] += yn->grad.a[i] * dfdx(xn->val.a[i], yn->val.a[i]);
    };
  }
  return y;
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return unary_op(
      x, [=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [=](T v, T) {
        T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> exp_(const Var<T>& x) {
  return unary_op(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> abs_(const Var<T>& x) {
  return unary_op(
      x, [](T v) { return std::fabs(v); },
      [](T v, T) { return v >= T(0) ? T(1) : T(-1); });
}

template <typename T>
Var<T> reciprocal(const Var<T>& x) {
  return unary_op(x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

// (x + eps)^(-1/2)
template <typename T>
Var<T> rsqrt(const Var<T>& x, T eps) {
  return unary_op(
      x, [eps](T v) { return T(1) / std::sqrt(v + eps); },
      [](T, T y) { return T(-0.5) * y * y * y; });
}

// ----- matrix products -----

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dims differ, " +
                                detail::shape_str(a.rows(), a.cols()) + " * " +
                                detail::shape_str(b.rows(), b.cols()));
  }
  Var<T> y = a.tape->make(rayzer::matmul(a.val(), b.val()),
                          a.n->needs_grad || b.n->needs_grad);
  if (y.n->needs_grad) {
    Node<T>*an = a.n, *bn = b.n, *yn = y.n;
    y.n->back = [an, bn, yn] {
      if (an->needs_grad) matmul_nt_acc(yn->grad, bn->val, an->grad);  // dA += dY B^T
      if (bn->needs_grad) matmul_tn_acc(an->val, yn->grad, bn->grad);  // dB += A^T dY
    };
  }
  return y;
}

// y = a * b^T (used for attention logits).
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dims differ, " +
                                detail::shape_str(a.rows(), a.cols()) + " vs " +
                                detail::shape_str(b.rows(), b.cols()));
  }
  Var<T> y = a.tape->make(rayzer::matmul_nt(a.val(), b.val()),
                          a.n->needs_grad || b.n->needs_grad);
  if (y.n->needs_grad) {
    Node<T>*an = a.n, *bn = b.n, *yn = y.n;
    y.n->back = [an, bn, yn] {
      if (an->needs_grad) matmul_acc(yn->grad, bn->val, an->grad);     // dA += dY B
      if (bn->needs_grad) matmul_tn_acc(yn->grad, an->val, bn->grad);  // dB += dY^T A
    };
  }
  return y;
}

// ----- shape ops -----

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  int cols = parts[0].cols(), rows = 0;
  bool ng = false;
  for (auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || p.n->needs_grad;
  }
  Tensor<T> out(rows, cols);
  size_t off = 0;
  for (auto& p : parts) {
    std::copy(p.val().a.begin(), p.val().a.end(), out.a.begin() + off);
    off += p.val().a.size();
  }
  Var<T> y = parts[0].tape->make(std::move(out), ng);
  if (ng) {
    std::vector<Node<T>*> ins;
    for (auto& p : parts) ins.push_back(p.n);
    Node<T>* yn = y.n;
    y.n->back = [ins, yn] {
      size_t o = 0;
      for (Node<T>* in : ins) {
        if (in->needs_grad)
          for (size_t i = 0; i < in->grad.a.size(); ++i) in->grad.a[i] += yn->grad.a[o + i];
        o += in->grad.a.size();
      }
    };
  }
  return y;
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int rows = parts[0].rows(), cols = 0;
  bool ng = false;
  for (auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || p.n->needs_grad;
  }
  Tensor<T> out(rows, cols);
  int coff = 0;
  for (auto& p : parts) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < p.cols(); ++c) out(r, coff + c) = p.val()(r, c);
    coff += p.cols();
  }
  Var<T> y = parts[0].tape->make(std::move(out), ng);
  if (ng) {
    std::vector<Node<T>*> ins;
    for (auto& p : parts) ins.push_back(p.n);
    Node<T>* yn = y.n;
    y.n->back = [ins, yn, rows] {
      int co = 0;
      for (Node<T>* in : ins) {
        if (in->needs_grad)
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < in->grad.cols; ++c)
              in->grad(r, c) += yn->grad(r, co + c);
        co += in->grad.cols;
      }
    };
  }
  return y;
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, int r0, int r1) {
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range");
  Tensor<T> out(r1 - r0, x.cols());
  std::copy(x.val().a.begin() + size_t(r0) * x.cols(),
            x.val().a.begin() + size_t(r1) * x.cols(), out.a.begin());
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, r0] {
      size_t off = size_t(r0) * xn->grad.cols;
      for (size_t i = 0; i < yn->grad.a.size(); ++i) xn->grad.a[off + i] += yn->grad.a[i];
    };
  }
  return y;
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, int c0, int c1) {
  if (c0 < 0 || c1 > x.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  Tensor<T> out(x.rows(), c1 - c0);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = c0; c < c1; ++c) out(r, c - c0) = x.val()(r, c);
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, c0] {
      for (int r = 0; r < yn->grad.rows; ++r)
        for (int c = 0; c < yn->grad.cols; ++c) xn->grad(r, c0 + c) += yn->grad(r, c);
    };
  }
  return y;
}

// Row gather; backward scatter-adds (duplicate indices accumulate).
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::vector<int> idx) {
  Tensor<T> out(int(idx.size()), x.cols());
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    for (int c = 0; c < x.cols(); ++c) out(int(r), c) = x.val()(idx[r], c);
  }
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, idx = std::move(idx)] {
      for (size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < yn->grad.cols; ++c) xn->grad(idx[r], c) += yn->grad(int(r), c);
    };
  }
  return y;
}

// ----- reductions / broadcasts -----

template <typename T>
Var<T> rowsum(const Var<T>& x) {
  Tensor<T> out(x.rows(), 1);
  for (int r = 0; r < x.rows(); ++r) {
    T s = T(0);
    for (int c = 0; c < x.cols(); ++c) s += x.val()(r, c);
    out(r, 0) = s;
  }
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn] {
      for (int r = 0; r < xn->grad.rows; ++r)
        for (int c = 0; c < xn->grad.cols; ++c) xn->grad(r, c) += yn->grad(r, 0);
    };
  }
  return y;
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T s = T(0);
  for (const T& v : x.val().a) s += v;
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(Tensor<T>::scalar(s), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn] {
      for (auto& g : xn->grad.a) g += yn->grad.a[0];
    };
  }
  return y;
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  return cmul(sum_all(x), T(1) / T(x.val().size()));
}

template <typename T>
Var<T> rowbcast(const Var<T>& x, int n) {
  if (x.rows() != 1) throw std::invalid_argument("rowbcast: input must be 1xD");
  Tensor<T> out(n, x.cols());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < x.cols(); ++c) out(r, c) = x.val()(0, c);
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn] {
      for (int r = 0; r < yn->grad.rows; ++r)
        for (int c = 0; c < yn->grad.cols; ++c) xn->grad(0, c) += yn->grad(r, c);
    };
  }
  return y;
}

template <typename T>
Var<T> colbcast(const Var<T>& x, int d) {
  if (x.cols() != 1) throw std::invalid_argument("colbcast: input must be Nx1");
  Tensor<T> out(x.rows(), d);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < d; ++c) out(r, c) = x.val()(r, 0);
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn] {
      for (int r = 0; r < yn->grad.rows; ++r)
        for (int c = 0; c < yn->grad.cols; ++c) xn->grad(r, 0) += yn->grad(r, c);
    };
  }
  return y;
}

// ----- row-wise softmax / layer norm -----

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  Tensor<T> out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    T mx = x.val()(r, 0);
    for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, x.val()(r, c));
    T denom = T(0);
    for (int c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x.val()(r, c) - mx);
      denom += out(r, c);
    }
    T inv = T(1) / denom;
    for (int c = 0; c < x.cols(); ++c) out(r, c) *= inv;
  }
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn] {
      for (int r = 0; r < yn->grad.rows; ++r) {
        T dot = T(0);
        for (int c = 0; c < yn->grad.cols; ++c) dot += yn->grad(r, c) * yn->val(r, c);
        for (int c = 0; c < yn->grad.cols; ++c)
          xn->grad(r, c) += yn->val(r, c) * (yn->grad(r, c) - dot);
      }
    };
  }
  return y;
}

// Per-row mean-0 / var-1 normalization (no affine); variance uses 1/D.
template <typename T>
Var<T> layernorm_rows(const Var<T>& x, T eps) {
  const int d = x.cols();
  Tensor<T> out(x.rows(), d);
  Tensor<T> inv_sigma(x.rows(), 1);
  for (int r = 0; r < x.rows(); ++r) {
    T mu = T(0);
    for (int c = 0; c < d; ++c) mu += x.val()(r, c);
    mu /= T(d);
    T var = T(0);
    for (int c = 0; c < d; ++c) {
      T dv = x.val()(r, c) - mu;
      var += dv * dv;
    }
    var /= T(d);
    T is = T(1) / std::sqrt(var + eps);
    inv_sigma(r, 0) = is;
    for (int c = 0; c < d; ++c) out(r, c) = (x.val()(r, c) - mu) * is;
  }
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, inv_sigma = std::move(inv_sigma), d] {
      for (int r = 0; r < yn->grad.rows; ++r) {
        T gmean = T(0), gxmean = T(0);
        for (int c = 0; c < d; ++c) {
          gmean += yn->grad(r, c);
          gxmean += yn->grad(r, c) * yn->val(r, c);
        }
        gmean /= T(d);
        gxmean /= T(d);
        const T is = inv_sigma(r, 0);
        for (int c = 0; c < d; ++c)
          xn->grad(r, c) += is * (yn->grad(r, c) - gmean - yn->val(r, c) * gxmean);
      }
    };
  }
  return y;
}

// ----- patch reindexing -----
//
// (H*W)xC pixel rows -> (h*w)x(C*s^2) patch rows. Within a patch the layout is
// pixel-major then channel: out[p, (py*s+px)*C + ch].

inline std::vector<int> patch_pixel_order(int H, int W, int s) {
  const int h = H / s, w = W / s;
  std::vector<int> order;
  order.reserve(size_t(H) * W);
  for (int pr = 0; pr < h; ++pr)
    for (int pc = 0; pc < w; ++pc)
      for (int py = 0; py < s; ++py)
        for (int px = 0; px < s; ++px)
          order.push_back((pr * s + py) * W + pc * s + px);
  return order;
}

template <typename T>
Var<T> patchify_ch(const Var<T>& x, int H, int W, int C, int s) {
  if (H % s != 0 || W % s != 0)
    throw std::invalid_argument("patchify_ch: patch size must divide H and W");
  if (x.rows() != H * W || x.cols() != C)
    throw std::invalid_argument("patchify_ch: expected " + detail::shape_str(H * W, C) +
                                ", got " + detail::shape_str(x.rows(), x.cols()));
  const int h = H / s, w = W / s, pp = s * s;
  auto order = patch_pixel_order(H, W, s);
  Tensor<T> out(h * w, C * pp);
  for (int p = 0; p < h * w; ++p)
    for (int k = 0; k < pp; ++k) {
      const int src = order[size_t(p) * pp + k];
      for (int c = 0; c < C; ++c) out(p, k * C + c) = x.val()(src, c);
    }
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, order = std::move(order), pp, C] {
      for (int p = 0; p < yn->grad.rows; ++p)
        for (int k = 0; k < pp; ++k) {
          const int src = order[size_t(p) * pp + k];
          for (int c = 0; c < C; ++c) xn->grad(src, c) += yn->grad(p, k * C + c);
        }
    };
  }
  return y;
}

template <typename T>
Var<T> unpatchify_ch(const Var<T>& x, int H, int W, int C, int s) {
  const int h = H / s, w = W / s, pp = s * s;
  if (x.rows() != h * w || x.cols() != C * pp)
    throw std::invalid_argument("unpatchify_ch: expected " +
                                detail::shape_str(h * w, C * pp) + ", got " +
                                detail::shape_str(x.rows(), x.cols()));
  auto order = patch_pixel_order(H, W, s);
  Tensor<T> out(H * W, C);
  for (int p = 0; p < h * w; ++p)
    for (int k = 0; k < pp; ++k) {
      const int dst = order[size_t(p) * pp + k];
      for (int c = 0; c < C; ++c) out(dst, c) = x.val()(p, k * C + c);
    }
  bool ng = x.n->needs_grad;
  Var<T> y = x.tape->make(std::move(out), ng);
  if (ng) {
    Node<T>*xn = x.n, *yn = y.n;
    y.n->back = [xn, yn, order = std::move(order), pp, C] {
      for (int p = 0; p < xn->grad.rows; ++p)
        for (int k = 0; k < pp; ++k) {
          const int dst = order[size_t(p) * pp + k];
          for (int c = 0; c < C; ++c) xn->grad(p, k * C + c) += yn->grad(dst, c);
        }
    };
  }
  return y;
}

}  // namespace rayzer::ad
