#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include "hpi/hybrid_model.hpp"
#include "hpi/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

using hpi::Mat;
using hpi::Vec;

/// Classical RK4 over a signed duration tau with n substeps.
inline Vec rk4(const std::function<Vec(const Vec&)>& f, Vec x, double tau, int n = 400) {
  const double h = tau / n;
  for (int i = 0; i < n; ++i) {
    const Vec k1 = f(x);
    const Vec k2 = f(x + 0.5 * h * k1);
    const Vec k3 = f(x + 0.5 * h * k2);
    const Vec k4 = f(x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

/// Post-jump state of a perturbed pre-jump state, mapped back to the nominal
/// jump time: flow the perturbed state in `from` (forward or backward) to the
/// guard, reset, then flow in `to` by the opposite time offset. Flows use the
/// held controls and ignore noise.
inline Vec flow_reset_flow(const hpi::HybridModel& model, int from, int to, double t, const Vec& x_pert,
                           const Vec& u_from, const Vec& u_to, double anchor, double search = 0.05) {
  const auto& tr = model.transition(from, to);
  auto f_from = [&](const Vec& x) { return model.effective_drift(from, t, x, u_from); };
  auto f_to = [&](const Vec& x) { return model.effective_drift(to, t, x, u_to); };
  auto g_at = [&](double tau) { return tr.guard(t + tau, rk4(f_from, x_pert, tau)); };
  double lo = -search, hi = search;
  if (!(g_at(lo) > 0.0 && g_at(hi) < 0.0)) throw std::runtime_error("oracle: guard not bracketed");
  for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g_at(mid) > 0.0 ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  const Vec x_hit = rk4(f_from, x_pert, tau);
  const double post_anchor = tr.anchor_update ? tr.anchor_update(t + tau, x_hit, anchor) : anchor;
  const Vec x_plus = tr.reset(t + tau, x_hit, post_anchor);
  return rk4(f_to, x_plus, -tau);
}

/// Discrepancies |oracle(x- + h d) - (R(x-) + Xi h d)| for h, h/2, h/4, h/8.
inline std::array<double, 4> saltation_errors(const hpi::HybridModel& model, int from, int to, double t,
                                              const Vec& x_minus, const Vec& u_from, const Vec& u_to,
                                              double anchor, const Mat& xi, const Vec& direction, double h0) {
  const Vec base = flow_reset_flow(model, from, to, t, x_minus, u_from, u_to, anchor);
  std::array<double, 4> err{};
  double h = h0;
  for (auto& e : err) {
    const Vec pert = flow_reset_flow(model, from, to, t, x_minus + h * direction, u_from, u_to, anchor);
    e = (pert - base - xi * (h * direction)).norm();
    h *= 0.5;
  }
  return err;
}

/// Ballistic flight z(t) = z0 + v0 t - g t^2 / 2; first time z = 0 after 0.
inline double ballistic_impact_time(double z0, double v0, double g) {
  return (v0 + std::sqrt(v0 * v0 + 2.0 * g * z0)) / g;
}

/// Finite-horizon discrete LQR: x+ = A x + B u, cost sum (x'Qx + u'Ru)/2 + x_N' Qf x_N / 2.
struct RiccatiSolution {
  std::vector<Eigen::MatrixXd> K;  // u_i = -K_i x_i
  double cost = 0.0;               // optimal cost from x0
};

inline RiccatiSolution riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R, const Eigen::MatrixXd& Qf, int N,
                               const Eigen::VectorXd& x0) {
  RiccatiSolution s;
  s.K.resize(N);
  Eigen::MatrixXd P = Qf;
  for (int i = N - 1; i >= 0; --i) {
    const Eigen::MatrixXd S = R + B.transpose() * P * B;
    const Eigen::MatrixXd K = S.ldlt().solve(B.transpose() * P * A);
    s.K[i] = K;
    const Eigen::MatrixXd Acl = A - B * K;
    P = Q + K.transpose() * R * K + Acl.transpose() * P * Acl;
    P = 0.5 * (P + P.transpose());
  }
  s.cost = 0.5 * x0.dot(P * x0);
  return s;
}

}  // namespace oracle
