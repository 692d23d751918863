#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rayzer/autodiff.hpp"
#include "rayzer/rng.hpp"

namespace rayzer::nn {

using ad::Parameter;
using ad::Tape;
using ad::Var;

enum class Init { TruncNormal, Ones, Zeros };

// Named parameter store. Creation order is fixed by the builder and drives
// both RNG consumption at init and checkpoint layout, so a given seed always
// produces the same weights. No parameter is ever a bias: the model family
// uses bias-free linear and normalization layers throughout.
template <typename T>
class Weights {
 public:
  Parameter<T>& add(const std::string& name, int rows, int cols, Init init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    params_.push_back(std::make_unique<Parameter<T>>(name, Tensor<T>(rows, cols)));
    inits_.push_back(init);
    index_[name] = params_.size() - 1;
    params_.back()->uid = int(params_.size() - 1);
    return *params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return *params_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::unique_ptr<Parameter<T>>>& all() const { return params_; }
  std::vector<std::unique_ptr<Parameter<T>>>& all() { return params_; }

  // Fills values in creation order: trunc-normal(sigma) clipped at 2 sigma
  // for matrices, constants otherwise.
  void init_params(Rng& rng, double sigma = 0.02) {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      switch (inits_[i]) {
        case Init::TruncNormal:
          for (auto& v : p.values.a) v = T(rng.trunc_normal(sigma));
          break;
        case Init::Ones:
          for (auto& v : p.values.a) v = T(1);
          break;
        case Init::Zeros:
          for (auto& v : p.values.a) v = T(0);
          break;
      }
      p.zero_grad();
    }
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  size_t total_values() const {
    size_t n = 0;
    for (auto& p : params_) n += p->values.size();
    return n;
  }

  double grad_norm_sq() const {
    double s = 0;
    for (auto& p : params_)
      for (const T& g : p->grad.a) s += double(g) * double(g);
    return s;
  }

  template <typename U>
  Weights<U> cast() const {
    Weights<U> out;
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = out.add(params_[i]->name, params_[i]->values.rows,
                        params_[i]->values.cols, inits_[i]);
      p.values = params_[i]->values.template cast<U>();
    }
    return out;
  }

 private:
  template <typename U>
  friend class Weights;

  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::vector<Init> inits_;
  std::map<std::string, size_t> index_;
};

struct LayerConfig {
  int dim = 64;
  int heads = 4;
  int mlp_ratio = 4;
};

constexpr double kLayerNormEps = 1e-6;

// ----- parameter registration -----

template <typename T>
void add_attention_params(Weights<T>& w, const std::string& p, const LayerConfig& c) {
  if (c.dim % c.heads != 0)
    throw std::invalid_argument("attention: dim must be divisible by heads");
  w.add(p + ".wq", c.dim, c.dim, Init::TruncNormal);
  w.add(p + ".wk", c.dim, c.dim, Init::TruncNormal);
  w.add(p + ".wv", c.dim, c.dim, Init::TruncNormal);
  w.add(p + ".wo", c.dim, c.dim, Init::TruncNormal);
  w.add(p + ".qscale", c.heads, 1, Init::Ones);  // QK-Norm learnable scales
  w.add(p + ".kscale", c.heads, 1, Init::Ones);
}

template <typename T>
void add_transformer_params(Weights<T>& w, const std::string& p, const LayerConfig& c) {
  w.add(p + ".ln1.gain", 1, c.dim, Init::Ones);
  add_attention_params(w, p + ".attn", c);
  w.add(p + ".ln2.gain", 1, c.dim, Init::Ones);
  w.add(p + ".mlp.w1", c.dim, c.dim * c.mlp_ratio, Init::TruncNormal);
  w.add(p + ".mlp.w2", c.dim * c.mlp_ratio, c.dim, Init::TruncNormal);
}

template <typename T>
void add_stack_params(Weights<T>& w, const std::string& p, int layers,
                      const LayerConfig& c) {
  for (int l = 0; l < layers; ++l)
    add_transformer_params(w, p + ".layer" + std::to_string(l), c);
}

template <typename T>
void add_mlp2_params(Weights<T>& w, const std::string& p, int d_in, int d_hid, int d_out) {
  w.add(p + ".w1", d_in, d_hid, Init::TruncNormal);
  w.add(p + ".w2", d_hid, d_out, Init::TruncNormal);
}

// Residual-branch output projections get scaled by 1/sqrt(2*depth) after the
// base init; depth is the layer count of the owning stack.
template <typename T>
void apply_depthwise_init(Weights<T>& w, const std::string& p, int layers) {
  const T s = T(1.0 / std::sqrt(2.0 * layers));
  for (int l = 0; l < layers; ++l) {
    const std::string lp = p + ".layer" + std::to_string(l);
    for (auto* param : {&w.get(lp + ".attn.wo"), &w.get(lp + ".mlp.w2")})
      for (auto& v : param->values.a) v *= s;
  }
}

// ----- forward ops -----

template <typename T>
Var<T> linear(Tape<T>& t, const Var<T>& x, Parameter<T>& w) {
  return ad::matmul(x, t.leaf(w));
}

template <typename T>
Var<T> layer_norm(Tape<T>& t, const Var<T>& x, Parameter<T>& gain) {
  Var<T> n = ad::layernorm_rows(x, T(kLayerNormEps));
  return ad::mul(n, ad::rowbcast(t.leaf(gain), x.rows()));
}

// Multi-head softmax attention over all tokens, no masking. Queries and keys
// are layer-normalized per head and multiplied by a learnable per-head scale
// before the 1/sqrt(head_dim) dot product (QK-Norm).
template <typename T>
Var<T> attention(Tape<T>& t, const Var<T>& x, Weights<T>& w, const std::string& p,
                 const LayerConfig& cfg) {
  const int hd = cfg.dim / cfg.heads;
  Var<T> q = linear(t, x, w.get(p + ".wq"));
  Var<T> k = linear(t, x, w.get(p + ".wk"));
  Var<T> v = linear(t, x, w.get(p + ".wv"));
  Var<T> qs = t.leaf(w.get(p + ".qscale"));
  Var<T> ks = t.leaf(w.get(p + ".kscale"));

  std::vector<Var<T>> heads;
  heads.reserve(cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    Var<T> qh = ad::layernorm_rows(ad::slice_cols(q, h * hd, (h + 1) * hd),
                                   T(kLayerNormEps));
    Var<T> kh = ad::layernorm_rows(ad::slice_cols(k, h * hd, (h + 1) * hd),
                                   T(kLayerNormEps));
    qh = ad::scalar_mul(qh, ad::slice_rows(qs, h, h + 1));
    kh = ad::scalar_mul(kh, ad::slice_rows(ks, h, h + 1));
    Var<T> vh = ad::slice_cols(v, h * hd, (h + 1) * hd);
    Var<T> logits = ad::cmul(ad::matmul_nt(qh, kh), T(1.0 / std::sqrt(double(hd))));
    heads.push_back(ad::matmul(ad::softmax_rows(logits), vh));
  }
  return linear(t, ad::concat_cols(heads), w.get(p + ".wo"));
}

template <typename T>
Var<T> mlp2(Tape<T>& t, const Var<T>& x, Weights<T>& w, const std::string& p) {
  return linear(t, ad::gelu(linear(t, x, w.get(p + ".w1"))), w.get(p + ".w2"));
}

// Pre-norm residual block: x + Attn(LN(x)), then + MLP(LN(.)) with GELU.
template <typename T>
Var<T> transformer_layer(Tape<T>& t, const Var<T>& x, Weights<T>& w,
                         const std::string& p, const LayerConfig& cfg) {
  Var<T> h = ad::add(x, attention(t, layer_norm(t, x, w.get(p + ".ln1.gain")), w,
                                  p + ".attn", cfg));
  return ad::add(h, mlp2(t, layer_norm(t, h, w.get(p + ".ln2.gain")), w, p + ".mlp"));
}

template <typename T>
Var<T> transformer_stack(Tape<T>& t, Var<T> x, Weights<T>& w, const std::string& p,
                         int layers, const LayerConfig& cfg) {
  for (int l = 0; l < layers; ++l)
    x = transformer_layer(t, x, w, p + ".layer" + std::to_string(l), cfg);
  return x;
}

// ----- positional embeddings -----

// Interleaved sin/cos with base 10000; frequencies run geometrically from 1
// down to 1/10000 across the dim/2 pairs.
inline std::vector<double> sinusoidal_pe(int position, int dim) {
  if (position < 0) throw std::invalid_argument("sinusoidal_pe: position must be >= 0");
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_pe: dim must be even and >= 2");
  std::vector<double> out(size_t(dim), 0.0);
  const int pairs = dim / 2;
  for (int i = 0; i < pairs; ++i) {
    double expo = pairs == 1 ? 0.0 : 2.0 * i / double(dim - 2);
    double freq = std::pow(10000.0, -expo);
    out[size_t(2 * i)] = std::sin(position * freq);
    out[size_t(2 * i) + 1] = std::cos(position * freq);
  }
  return out;
}

// 2-D spatial embedding for a patch grid position: row embedding in the first
// dim/2 channels, column embedding in the second.
inline std::vector<double> spatial_pe(int row, int col, int dim) {
  if (dim % 4 != 0) throw std::invalid_argument("spatial_pe: dim must be divisible by 4");
  auto r = sinusoidal_pe(row, dim / 2);
  auto c = sinusoidal_pe(col, dim / 2);
  r.insert(r.end(), c.begin(), c.end());
  return r;
}

}  // namespace rayzer::nn
