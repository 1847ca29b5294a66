#pragma once

#include "hpi/hybrid_model.hpp"
#include "hpi/numdiff.hpp"
#include "hpi/types.hpp"

#include <functional>

namespace hpi {

/// State costs of the control problem. The control cost 1/2 |u|^2 is implicit.
struct CostSpec {
  /// Running state cost V(t, mode, x) >= 0. Empty means V == 0.
  std::function<double(double t, int mode, const Vec& x)> running;
  /// Terminal cost Psi_T(mode, x, anchor).
  std::function<double(int mode, const Vec& x, double anchor)> terminal;
  /// Optional analytic terminal derivatives; central differences otherwise.
  std::function<Vec(int mode, const Vec& x, double anchor)> terminal_gradient;
  std::function<Mat(int mode, const Vec& x, double anchor)> terminal_hessian;
  /// Optional analytic running-cost derivatives.
  std::function<Vec(double t, int mode, const Vec& x)> running_gradient;
  std::function<Mat(double t, int mode, const Vec& x)> running_hessian;

  Vec goal;
  Mat terminal_weight;

  double running_cost(double t, int mode, const Vec& x) const { return running ? running(t, mode, x) : 0.0; }

  double terminal_cost(const HybridState& s) const { return terminal ? terminal(s.mode, s.x, s.anchor) : 0.0; }

  Vec terminal_grad(const HybridState& s) const {
    if (!terminal) return Vec::Zero(s.x.size());
    if (terminal_gradient) return terminal_gradient(s.mode, s.x, s.anchor);
    return numdiff::gradient([&](const Vec& y) { return terminal(s.mode, y, s.anchor); }, s.x);
  }

  Mat terminal_hess(const HybridState& s) const {
    if (!terminal) return Mat::Zero(s.x.size(), s.x.size());
    if (terminal_hessian) return terminal_hessian(s.mode, s.x, s.anchor);
    return numdiff::hessian([&](const Vec& y) { return terminal(s.mode, y, s.anchor); }, s.x);
  }

  Vec running_grad(double t, int mode, const Vec& x) const {
    if (!running) return Vec::Zero(x.size());
    if (running_gradient) return running_gradient(t, mode, x);
    return numdiff::gradient([&](const Vec& y) { return running(t, mode, y); }, x);
  }

  Mat running_hess(double t, int mode, const Vec& x) const {
    if (!running) return Mat::Zero(x.size(), x.size());
    if (running_hessian) return running_hessian(t, mode, x);
    return numdiff::hessian([&](const Vec& y) { return running(t, mode, y); }, x);
  }
};

/// Psi_T(x) = 1/2 (x - goal)' Q (x - goal), defined in every mode whose
/// dimension matches the goal.
inline CostSpec quadratic_terminal_cost(const Vec& goal, const Mat& weight) {
  CostSpec c;
  c.goal = goal;
  c.terminal_weight = weight;
  c.terminal = [goal, weight](int, const Vec& x, double) {
    const Vec d = x - goal;
    return 0.5 * d.dot(weight * d);
  };
  c.terminal_gradient = [goal, weight](int, const Vec& x, double) -> Vec { return weight * (x - goal); };
  c.terminal_hessian = [weight](int, const Vec&, double) -> Mat { return weight; };
  return c;
}

}  // namespace hpi
