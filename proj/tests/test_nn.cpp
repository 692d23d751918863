#include <doctest.h>

#include <cmath>

#include "rayzer/grad_check.hpp"
#include "rayzer/image.hpp"
#include "rayzer/model.hpp"

using namespace rayzer;
using ad::Tape;
using ad::Var;
using nn::Weights;

namespace {

Tensor<double> random_tensor(int r, int c, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(r, c);
  for (auto& v : t.a) v = rng.uniform(lo, hi);
  return t;
}

Weights<double> attn_weights(const nn::LayerConfig& lc, Rng& rng) {
  Weights<double> w;
  nn::add_attention_params(w, "attn", lc);
  w.init_params(rng, 0.2);
  return w;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear pinned cases") {
  Rng rng(1);
  Weights<double> w;
  auto& wp = w.add("w", 3, 4, nn::Init::Zeros);
  for (auto& v : wp.values.a) v = rng.uniform(-1, 1);

  Tape<double> t;
  Tensor<double> eye(3, 3);
  eye(0, 0) = eye(1, 1) = eye(2, 2) = 1;
  auto y = nn::linear(t, t.constant(eye), w.get("w"));
  CHECK(y.val().a == wp.values.a);  // identity rows reproduce the matrix

  auto& zp = w.add("zero", 3, 4, nn::Init::Zeros);
  auto x = t.constant(random_tensor(5, 3, rng));
  auto z = nn::linear(t, x, w.get("zero"));
  for (double v : z.val().a) CHECK(v == 0.0);
}

TEST_CASE("layer_norm pinned cases") {
  Weights<double> w;
  w.add("gain", 1, 2, nn::Init::Ones);
  Rng r0(0);
  w.init_params(r0);

  Tape<double> t;
  Tensor<double> x(2, 2);
  x(0, 0) = 3.0;
  x(0, 1) = 3.0;  // constant token -> zero output
  x(1, 0) = 1.0;
  x(1, 1) = -1.0;  // unit-variance token -> unchanged (up to eps)
  auto y = nn::layer_norm(t, t.constant(x), w.get("gain"));
  CHECK(y.val()(0, 0) == 0.0);
  CHECK(y.val()(0, 1) == 0.0);
  CHECK(y.val()(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(y.val()(1, 1) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm output statistics") {
  Rng rng(3);
  Tape<double> t;
  auto x = t.constant(random_tensor(16, 8, rng, -4, 4));
  auto y = ad::layernorm_rows(x, 1e-6);
  for (int r = 0; r < 16; ++r) {
    double mu = 0, var = 0;
    for (int c = 0; c < 8; ++c) mu += y.val()(r, c);
    mu /= 8;
    for (int c = 0; c < 8; ++c) {
      double d = y.val()(r, c) - mu;
      var += d * d;
    }
    var /= 8;
    CHECK(std::fabs(mu) <= 1e-6);
    CHECK(std::fabs(var - 1.0) <= 1e-4);
  }
}

TEST_CASE("attention with one token reduces to value+output projection") {
  Rng rng(5);
  nn::LayerConfig lc{8, 2, 4};
  auto w = attn_weights(lc, rng);
  Tape<double> t;
  auto x = t.constant(random_tensor(1, 8, rng));
  auto y = nn::attention(t, x, w, "attn", lc);

  auto manual = matmul(matmul(x.val(), w.get("attn.wv").values),
                       w.get("attn.wo").values);
  for (size_t i = 0; i < manual.a.size(); ++i)
    CHECK(y.val().a[i] == doctest::Approx(manual.a[i]).epsilon(1e-12));
}

TEST_CASE("attention maps identical tokens to identical outputs") {
  Rng rng(6);
  nn::LayerConfig lc{8, 2, 4};
  auto w = attn_weights(lc, rng);
  Tape<double> t;
  Tensor<double> x(3, 8);
  for (int c = 0; c < 8; ++c) {
    double v = rng.uniform(-1, 1);
    for (int r = 0; r < 3; ++r) x(r, c) = v;
  }
  auto y = nn::attention(t, t.constant(x), w, "attn", lc);
  for (int c = 0; c < 8; ++c) {
    CHECK(y.val()(0, c) == doctest::Approx(y.val()(1, c)).epsilon(1e-12));
    CHECK(y.val()(1, c) == doctest::Approx(y.val()(2, c)).epsilon(1e-12));
  }
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(7);
  nn::LayerConfig lc{8, 2, 4};
  for (int i = 0; i < 10; ++i) {
    Weights<double> w = attn_weights(lc, rng);
    auto& xin = w.add("x", 5, 8, nn::Init::Zeros);
    for (auto& v : xin.values.a) v = rng.uniform(-1, 1);
    auto rep = ad::grad_check(
        [&lc](Tape<double>& t, Weights<double>& ww) {
          auto y = nn::attention(t, t.leaf(ww.get("x")), ww, "attn", lc);
          return ad::sum_all(ad::mul(y, y));
        },
        w, rng, 1e-3, 4);
    INFO("worst " << rep.worst_coord << " err " << rep.max_rel_err);
    CHECK(rep.ok);
  }
}

TEST_CASE("transformer layer with zeroed residual branches is the identity") {
  Rng rng(8);
  nn::LayerConfig lc{8, 2, 4};
  Weights<double> w;
  nn::add_transformer_params(w, "layer", lc);
  w.init_params(rng, 0.2);
  for (auto& v : w.get("layer.attn.wo").values.a) v = 0;
  for (auto& v : w.get("layer.mlp.w2").values.a) v = 0;

  Tape<double> t;
  Tensor<double> x = random_tensor(6, 8, rng);
  auto y = nn::transformer_layer(t, t.constant(x), w, "layer", lc);
  CHECK(y.val().a == x.a);
}

TEST_CASE("transformer layer is permutation equivariant") {
  Rng rng(9);
  nn::LayerConfig lc{8, 2, 4};
  Weights<double> w;
  nn::add_transformer_params(w, "layer", lc);
  w.init_params(rng, 0.2);

  Tensor<double> x = random_tensor(6, 8, rng);
  std::vector<int> perm{3, 1, 5, 0, 4, 2};
  Tape<double> t;
  auto y = nn::transformer_layer(t, t.constant(x), w, "layer", lc);
  auto yp = nn::transformer_layer(t, ad::gather_rows(t.constant(x), perm), w, "layer", lc);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(yp.val()(r, c) == doctest::Approx(y.val()(perm[size_t(r)], c)).epsilon(1e-9));
}

TEST_CASE("transformer layer gradients match finite differences") {
  Rng rng(10);
  nn::LayerConfig lc{8, 2, 2};
  for (int i = 0; i < 10; ++i) {
    Weights<double> w;
    nn::add_transformer_params(w, "layer", lc);
    w.init_params(rng, 0.2);
    auto& xin = w.add("x", 4, 8, nn::Init::Zeros);
    for (auto& v : xin.values.a) v = rng.uniform(-1, 1);
    auto rep = ad::grad_check(
        [&lc](Tape<double>& t, Weights<double>& ww) {
          auto y = nn::transformer_layer(t, t.leaf(ww.get("x")), ww, "layer", lc);
          return ad::mean_all(ad::mul(y, y));
        },
        w, rng, 1e-3, 3);
    INFO("worst " << rep.worst_coord << " err " << rep.max_rel_err);
    CHECK(rep.ok);
  }
}

TEST_CASE("sinusoidal_pe pinned values") {
  auto z = nn::sinusoidal_pe(0, 8);
  for (int i = 0; i < 8; i += 2) {
    CHECK(z[size_t(i)] == 0.0);      // sin entries
    CHECK(z[size_t(i) + 1] == 1.0);  // cos entries
  }
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    auto v = nn::sinusoidal_pe(rng.uniform_int(0, 10000), 16);
    for (double x : v) {
      CHECK(x >= -1.0);
      CHECK(x <= 1.0);
    }
  }
  // dim 4, position 1: frequencies 1 and 1/10000.
  auto e = nn::sinusoidal_pe(1, 4);
  CHECK(e[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(e[2] == doctest::Approx(std::sin(1e-4)).epsilon(1e-12));
  CHECK(e[3] == doctest::Approx(std::cos(1e-4)).epsilon(1e-12));
}

TEST_CASE("image patchify shapes and exact round trip") {
  Image big(256, 256);
  Rng rng(12);
  for (auto& v : big.px) v = float(rng.uniform(0, 1));
  auto p = patchify<float>(big, 16);
  CHECK(p.rows == 256);
  CHECK(p.cols == 768);

  Image small(32, 32);
  for (auto& v : small.px) v = float(rng.uniform(0, 1));
  auto q = patchify<float>(small, 8);
  CHECK(q.rows == 16);
  Image back = unpatchify(q, 32, 32, 8);
  CHECK(back.px == small.px);

  CHECK_THROWS_AS(patchify<float>(small, 5), std::invalid_argument);
}

TEST_CASE("no parameter anywhere is tagged as a bias") {
  Rng rng(13);
  auto w = model::build_weights<float>(model::ModelConfig::toy(), rng);
  for (const auto& p : w.all())
    CHECK(p->name.find("bias") == std::string::npos);
  CHECK(w.all().size() > 0);
}

TEST_CASE("depth-wise init scales residual projections") {
  Rng rng1(42), rng2(42);
  nn::LayerConfig lc{8, 2, 4};
  Weights<double> base;
  nn::add_stack_params(base, "s", 2, lc);
  base.init_params(rng1);
  Weights<double> scaled;
  nn::add_stack_params(scaled, "s", 2, lc);
  scaled.init_params(rng2);
  nn::apply_depthwise_init(scaled, "s", 2);
  const double f = 1.0 / std::sqrt(4.0);
  for (const char* name : {"s.layer0.attn.wo", "s.layer1.mlp.w2"}) {
    auto& a = base.get(name).values;
    auto& b = scaled.get(name).values;
    for (size_t i = 0; i < a.a.size(); ++i)
      CHECK(b.a[i] == doctest::Approx(a.a[i] * f).epsilon(1e-12));
  }
  // untouched: the non-residual projections
  CHECK(base.get("s.layer0.attn.wq").values.a == scaled.get("s.layer0.attn.wq").values.a);
}

}  // TEST_SUITE
