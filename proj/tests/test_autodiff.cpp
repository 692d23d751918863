#include <doctest.h>

#include <cmath>

#include "rayzer/grad_check.hpp"

using namespace rayzer;
using ad::Tape;
using ad::Var;
using nn::Weights;

namespace {

// Registers a random matrix parameter to act as a differentiable input.
ad::Parameter<double>& add_input(Weights<double>& w, const std::string& name, int r,
                                 int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto& p = w.add(name, r, c, nn::Init::Zeros);
  for (auto& v : p.values.a) v = rng.uniform(lo, hi);
  return p;
}

using BuildFn = std::function<Var<double>(Tape<double>&, Weights<double>&)>;

// Runs grad_check over n fresh random instances of a single-op graph.
void check_op(const char* name, int instances,
              const std::function<BuildFn(Weights<double>&, Rng&)>& make) {
  Rng rng(0xad5eedULL ^ std::hash<std::string>{}(name));
  for (int i = 0; i < instances; ++i) {
    Weights<double> w;
    BuildFn fn = make(w, rng);
    auto rep = ad::grad_check(fn, w, rng, 1e-3, 6);
    INFO(name << " instance " << i << " worst " << rep.worst_coord << " err "
              << rep.max_rel_err << " " << rep.message);
    CHECK(rep.ok);
  }
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("grad_check accepts a quadratic with tiny error") {
  Rng rng(1);
  Weights<double> w;
  add_input(w, "x", 4, 5, rng, 0.5, 2.0);  // bounded away from zero gradients
  auto rep = ad::grad_check(
      [](Tape<double>& t, Weights<double>& ww) {
        auto x = t.leaf(ww.get("x"));
        return ad::sum_all(ad::mul(x, x));
      },
      w, rng, 1e-3, 20);
  CHECK(rep.ok);
  CHECK(rep.max_rel_err <= 1e-8);
}

TEST_CASE("grad_check flags a corrupted gradient") {
  Rng rng(2);
  Weights<double> w;
  add_input(w, "x", 3, 3, rng, 0.5, 2.0);
  auto rep = ad::grad_check(
      [](Tape<double>& t, Weights<double>& ww) {
        auto x = t.leaf(ww.get("x"));
        auto y = ad::sum_all(ad::mul(x, x));
        // Corrupt the reverse pass by an extra harvest-time contribution.
        ww.get("x").grad.a[0] += 1.0;
        return y;
      },
      w, rng, 1e-3, 9);
  CHECK_FALSE(rep.ok);
}

TEST_CASE("grad_check reports non-finite losses as diagnostic failures") {
  Rng rng(3);
  Weights<double> w;
  add_input(w, "x", 2, 2, rng);
  auto rep = ad::grad_check(
      [](Tape<double>& t, Weights<double>& ww) {
        auto x = t.leaf(ww.get("x"));
        return t.constant(Tensor<double>::scalar(std::nan("")));
      },
      w, rng);
  CHECK_FALSE(rep.ok);
  CHECK(!rep.message.empty());
}

TEST_CASE("elementwise and scalar primitives match finite differences") {
  check_op("add", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "a", 3, 4, rng);
    add_input(w, "b", 3, 4, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::add(t.leaf(ww.get("a")), t.leaf(ww.get("b")));
      return ad::sum_all(ad::mul(y, y));
    };
  });
  check_op("sub_mul", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "a", 3, 4, rng);
    add_input(w, "b", 3, 4, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto a = t.leaf(ww.get("a"));
      auto b = t.leaf(ww.get("b"));
      return ad::sum_all(ad::mul(ad::sub(a, b), a));
    };
  });
  check_op("cmul_scalar_mul", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "x", 4, 3, rng);
    add_input(w, "s", 1, 1, rng, 0.5, 1.5);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::scalar_mul(ad::cmul(t.leaf(ww.get("x")), 0.7), t.leaf(ww.get("s")));
      return ad::sum_all(ad::mul(y, y));
    };
  });
  check_op("unaries", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "x", 3, 5, rng, 0.2, 1.5);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto x = t.leaf(ww.get("x"));
      auto y = ad::add(ad::gelu(x), ad::sigmoid(x));
      y = ad::add(y, ad::exp_(ad::cmul(x, 0.3)));
      y = ad::add(y, ad::reciprocal(x));
      y = ad::add(y, ad::rsqrt(x, 1e-8));
      y = ad::add(y, ad::abs_(x));
      return ad::sum_all(ad::mul(y, y));
    };
  });
}

TEST_CASE("matrix products match finite differences") {
  check_op("matmul", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "a", 3, 4, rng);
    add_input(w, "b", 4, 5, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::matmul(t.leaf(ww.get("a")), t.leaf(ww.get("b")));
      return ad::sum_all(ad::mul(y, y));
    };
  });
  check_op("matmul_nt", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "a", 3, 4, rng);
    add_input(w, "b", 6, 4, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::matmul_nt(t.leaf(ww.get("a")), t.leaf(ww.get("b")));
      return ad::sum_all(ad::mul(y, y));
    };
  });
}

TEST_CASE("shape ops match finite differences") {
  check_op("concat_slice_gather", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "a", 3, 4, rng);
    add_input(w, "b", 2, 4, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto a = t.leaf(ww.get("a"));
      auto b = t.leaf(ww.get("b"));
      auto y = ad::concat_rows<double>({a, b});            // 5x4
      y = ad::concat_cols<double>({y, y});                 // 5x8
      y = ad::slice_cols(y, 2, 7);                         // 5x5
      y = ad::slice_rows(y, 1, 5);                         // 4x5
      y = ad::gather_rows(y, {0, 0, 3, 2, 1, 3});          // duplicates on purpose
      return ad::sum_all(ad::mul(y, y));
    };
  });
  check_op("reductions_broadcasts", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "x", 4, 3, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto x = t.leaf(ww.get("x"));
      auto y = ad::mul(ad::colbcast(ad::rowsum(x), 3), x);
      y = ad::add(y, ad::rowbcast(ad::slice_rows(x, 0, 1), 4));
      return ad::add(ad::mean_all(ad::mul(y, y)), ad::sum_all(x));
    };
  });
}

TEST_CASE("softmax and layernorm match finite differences") {
  check_op("softmax", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "x", 4, 6, rng, -2, 2);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::softmax_rows(t.leaf(ww.get("x")));
      auto z = ad::mul(y, ad::cmul(y, 0.5));
      return ad::sum_all(ad::mul(z, z));
    };
  });
  check_op("layernorm", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "x", 4, 6, rng, -2, 2);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::layernorm_rows(t.leaf(ww.get("x")), 1e-6);
      return ad::sum_all(ad::mul(y, ad::gelu(y)));
    };
  });
}

TEST_CASE("patchify round trip and gradients") {
  check_op("patchify", 10, [](Weights<double>& w, Rng& rng) -> BuildFn {
    add_input(w, "x", 8 * 8, 6, rng);
    return [](Tape<double>& t, Weights<double>& ww) {
      auto y = ad::patchify_ch(t.leaf(ww.get("x")), 8, 8, 6, 4);
      return ad::sum_all(ad::mul(y, ad::cmul(y, 0.3)));
    };
  });

  Rng rng(77);
  Tape<double> t;
  Tensor<double> x(16 * 16, 3);
  for (auto& v : x.a) v = rng.uniform(0, 1);
  auto v = t.constant(x);
  auto round = ad::unpatchify_ch(ad::patchify_ch(v, 16, 16, 3, 4), 16, 16, 3, 4);
  CHECK(round.val().a == x.a);  // bit-exact inverse
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(9);
  Tape<double> t;
  Tensor<double> x(5, 7);
  for (auto& v : x.a) v = rng.uniform(-3, 3);
  auto y = ad::softmax_rows(t.constant(x));
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int c = 0; c < 7; ++c) s += y.val()(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("shape mismatches raise with both shapes named") {
  Tape<double> t;
  auto a = t.constant(Tensor<double>(2, 3));
  auto b = t.constant(Tensor<double>(4, 5));
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("2x3"),
                       std::invalid_argument);
  CHECK_THROWS_AS(ad::add(a, b), std::invalid_argument);
}

}  // TEST_SUITE
