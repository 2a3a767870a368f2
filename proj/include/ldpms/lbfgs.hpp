#pragma once

// Limited-memory BFGS with a caller-supplied initial inverse Hessian
// (preconditioner) and Armijo backtracking. Accepted iterates never increase
// the objective.

#include "ldpms/core.hpp"

#include <deque>

namespace ldpms {

struct LbfgsOptions {
  int memory = 12;
  int max_iter = 5000;
  /// Converged when the max-norm of the gradient is at or below this.
  double grad_tol = 1e-9;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

struct LbfgsResult {
  Vec x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;  ///< objective after each accepted step
};

/// `objective(x, grad)` returns f(x) and fills grad. `precondition(g)` returns
/// an SPD approximation of H^{-1} g.
template <class Objective, class Preconditioner>
LbfgsResult lbfgs_minimize(Objective&& objective, Vec x, Preconditioner&& precondition,
                           const LbfgsOptions& opts = {}) {
  LbfgsResult res;
  Vec g(x.size());
  double f = objective(x, g);
  if (!std::isfinite(f)) throw DomainError("lbfgs: objective is not finite at the start point");
  res.history.push_back(f);

  struct Pair {
    Vec s, y;
    double rho;
  };
  std::deque<Pair> mem;
  Vec g_new(x.size());

  auto inf_norm = [](const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); };

  for (int it = 0; it < opts.max_iter; ++it) {
    res.grad_norm = inf_norm(g);
    if (res.grad_norm <= opts.grad_tol) {
      res.converged = true;
      break;
    }

    // two-loop recursion
    Vec q = g;
    std::vector<double> alpha(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
      alpha[i] = mem[i].rho * mem[i].s.dot(q);
      q -= alpha[i] * mem[i].y;
    }
    Vec r = precondition(q);
    if (!mem.empty()) {
      const auto& last = mem.back();
      const double ypy = last.y.dot(precondition(last.y));
      if (ypy > 0.0) r *= last.s.dot(last.y) / ypy;
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const double beta = mem[i].rho * mem[i].y.dot(r);
      r += (alpha[i] - beta) * mem[i].s;
    }
    Vec dir = -r;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      mem.clear();
      dir = -precondition(g);
      slope = g.dot(dir);
      if (!(slope < 0.0)) break;
    }

    double step = 1.0;
    bool accepted = false;
    Vec x_new;
    double f_new = f;
    for (int k = 0; k < opts.max_backtracks; ++k) {
      x_new = x + step * dir;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (mem.empty()) break;  // stalled even along the preconditioned gradient
      mem.clear();
      continue;
    }

    Vec s = x_new - x;
    Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      mem.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
    }
    x = std::move(x_new);
    g = g_new;
    f = f_new;
    res.history.push_back(f);
    res.iterations = it + 1;
  }
  res.grad_norm = inf_norm(g);
  if (res.grad_norm <= opts.grad_tol) res.converged = true;
  res.x = std::move(x);
  res.value = f;
  return res;
}

}  // namespace ldpms
