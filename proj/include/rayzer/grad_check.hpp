#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "rayzer/nn.hpp"
#include "rayzer/rng.hpp"

namespace rayzer::ad {

struct GradCheckReport {
  bool ok = false;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst_coord;
  std::string message;  // set on diagnostic failure (non-finite values)
};

// Compares the reverse-mode gradient of a scalar function against central
// finite differences, always at double precision.
//
// fn builds the graph from the weights on a fresh tape and returns the scalar
// loss. Every parameter gets up to coords_per_param randomly sampled
// coordinates. Error per coordinate is |a - f| / max(|a|, |f|, grad_floor):
// the floor turns the test into an absolute one for near-zero gradients so
// finite-difference noise cannot fail a legitimately tiny gradient, while any
// absolute disagreement above tol*grad_floor is still caught.
inline GradCheckReport grad_check(
    const std::function<Var<double>(Tape<double>&, nn::Weights<double>&)>& fn,
    nn::Weights<double>& w, Rng& rng, double tol = 1e-3, int coords_per_param = 4,
    double step = 1e-4, double grad_floor = 1e-3) {
  GradCheckReport rep;

  w.zero_grads();
  double base;
  {
    Tape<double> tape;
    Var<double> loss = fn(tape, w);
    base = loss.scalar();
    if (!std::isfinite(base)) {
      rep.message = "non-finite loss value";
      return rep;
    }
    tape.backward(loss);
    tape.harvest();
  }

  auto eval = [&]() {
    Tape<double> tape;
    return fn(tape, w).scalar();
  };

  for (auto& pp : w.all()) {
    auto& p = *pp;
    const int n = int(p.values.size());
    const int picks = std::min(coords_per_param, n);
    for (int s = 0; s < picks; ++s) {
      const int i = picks == n ? s : rng.uniform_int(0, n - 1);
      const double v0 = p.values.a[i];
      p.values.a[i] = v0 + step;
      const double lp = eval();
      p.values.a[i] = v0 - step;
      const double lm = eval();
      p.values.a[i] = v0;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        rep.message = "non-finite loss during finite differencing at " + p.name;
        return rep;
      }
      const double fd = (lp - lm) / (2.0 * step);
      const double an = p.grad.a[i];
      const double err = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), grad_floor});
      ++rep.coords_checked;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_coord = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  rep.ok = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace rayzer::ad
