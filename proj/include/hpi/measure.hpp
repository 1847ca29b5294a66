#pragma once

#include "hpi/hybrid_model.hpp"
#include "hpi/rollout.hpp"
#include "hpi/types.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace hpi {

/// Girsanov quantities for one path. log_ratio_u_over_0 = (control_energy + stochastic_term) / eps.
struct PathLogRatio {
  double log_ratio_u_over_0 = 0.0;
  double control_energy = 0.0;   // sum 1/2 |u|^2 dt
  double stochastic_term = 0.0;  // sqrt(eps) sum u' dW
};

/// log dP^u/dP^0 along a path simulated under the control u. The rollout
/// stores the increments it consumed, which are Wiener increments under P^u;
/// the P^0 increments are dW + u dt / sqrt(eps), so
///   sum[-|u|^2 dt / (2 eps) + u' dW0 / sqrt(eps)] = sum[|u|^2 dt / (2 eps) + u' dW / sqrt(eps)].
inline PathLogRatio log_ratio_controlled(const RolloutResult& r, double eps) {
  PathLogRatio out;
  double stoch = 0.0;
  for (const auto& s : r.steps) {
    out.control_energy += 0.5 * s.u.squaredNorm() * s.dt;
    stoch += s.u.dot(s.dw);
  }
  out.stochastic_term = std::sqrt(eps) * stoch;
  out.log_ratio_u_over_0 = (out.control_energy + out.stochastic_term) / eps;
  return out;
}

/// Same quantity from the scalar summary of a controlled rollout.
inline PathLogRatio log_ratio_controlled(const RolloutSummary& r, double eps) {
  PathLogRatio out;
  out.control_energy = r.control_energy_integral;
  out.stochastic_term = std::sqrt(eps) * r.stochastic_integral;
  out.log_ratio_u_over_0 = (out.control_energy + out.stochastic_term) / eps;
  return out;
}

/// Feedback law evaluated along a stored path: u(step, mode, t, x).
using StepControl = std::function<Vec(std::size_t step, int mode, double t, const Vec& x)>;

/// log dP^u/dP^0 for a control law u evaluated along a path drawn under P^0
/// (the stored increments are P^0 increments):
///   sum[-|u|^2 dt / (2 eps) + u' dW / sqrt(eps)].
inline double log_ratio_along_uncontrolled(const RolloutResult& r, const StepControl& u, double eps) {
  const double se = std::sqrt(eps);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& s = r.steps[i];
    const Vec ui = u(r.start_step + i, s.mode, s.t, s.x);
    acc += -0.5 * ui.squaredNorm() * s.dt / eps + ui.dot(s.dw) / se;
  }
  return acc;
}

/// Drift used for the Gaussian transition density of one step: f(step, mode, t, x).
using StepDrift = std::function<Vec(std::size_t step, int mode, double t, const Vec& x)>;

struct DiscreteDensityLedger {
  std::vector<double> log_p;  // -|e_a|^2_M / (2 eps dt), normalizer omitted
  std::vector<double> log_q;  // -|e_b|^2_M / (2 eps dt)
  std::vector<double> mahalanobis_p;
  std::vector<double> mahalanobis_q;
  bool degenerate = false;  // sigma sigma' singular on some visited step

  double log_ratio() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < log_p.size(); ++i) acc += log_q[i] - log_p[i];
    return acc;
  }
};

/// Per-step Gaussian transition densities of the Euler-Maruyama chain along a
/// stored path under two drifts. Each step k conditions on its start state and
/// is evaluated at the smooth endpoint (the pre-reset state on jump steps) with
/// the step's actual length. Norms use the pseudo-inverse of sigma sigma', so
/// they live on the noise-reachable subspace.
inline DiscreteDensityLedger discrete_density_ledger(const HybridModel& model, const RolloutResult& r,
                                                     const StepDrift& drift_a, const StepDrift& drift_b, double eps) {
  DiscreteDensityLedger led;
  const std::size_t n = r.steps.size();
  led.log_p.resize(n);
  led.log_q.resize(n);
  led.mahalanobis_p.resize(n);
  led.mahalanobis_q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = r.steps[i];
    const std::size_t step = r.start_step + i;
    if (s.dt <= 0.0) {
      led.log_p[i] = led.log_q[i] = led.mahalanobis_p[i] = led.mahalanobis_q[i] = 0.0;
      continue;
    }
    const Mat sigma = model.mode(s.mode).diffusion(s.t, s.x);
    const Mat cov = sigma * sigma.transpose();
    Eigen::JacobiSVD<Mat> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff = 1e-12 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
    Vec inv_sv = Vec::Zero(sv.size());
    int rank = 0;
    for (Eigen::Index j = 0; j < sv.size(); ++j)
      if (sv(j) > cutoff) {
        inv_sv(j) = 1.0 / sv(j);
        ++rank;
      }
    if (rank < sigma.cols()) led.degenerate = true;
    const Mat pinv = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();

    const Vec ea = s.x_end - s.x - drift_a(step, s.mode, s.t, s.x) * s.dt;
    const Vec eb = s.x_end - s.x - drift_b(step, s.mode, s.t, s.x) * s.dt;
    const double ma = ea.dot(pinv * ea);
    const double mb = eb.dot(pinv * eb);
    led.mahalanobis_p[i] = ma;
    led.mahalanobis_q[i] = mb;
    led.log_p[i] = -ma / (2.0 * eps * s.dt);
    led.log_q[i] = -mb / (2.0 * eps * s.dt);
  }
  return led;
}

/// sum_k [log q(X_k+1 | X_k) - log p(X_k+1 | X_k)]: the log density of the
/// chain with drift_b relative to the chain with drift_a.
inline double discrete_density_ratio(const HybridModel& model, const RolloutResult& r, const StepDrift& drift_a,
                                     const StepDrift& drift_b, double eps) {
  return discrete_density_ledger(model, r, drift_a, drift_b, eps).log_ratio();
}

/// Uncontrolled drift F of the mode visited at each step.
inline StepDrift passive_drift(const HybridModel& model) {
  return [&model](std::size_t, int mode, double t, const Vec& x) { return model.mode(mode).drift(t, x); };
}

/// F + sigma u with u read from the rollout's stored controls.
inline StepDrift recorded_controlled_drift(const HybridModel& model, const RolloutResult& r) {
  return [&model, &r](std::size_t step, int mode, double t, const Vec& x) {
    return model.effective_drift(mode, t, x, r.steps[step - r.start_step].u);
  };
}

/// L_H = sum V dt + Psi_T, recomputed from the stored steps.
inline double state_cost_L(const RolloutResult& r) {
  double acc = 0.0;
  for (const auto& s : r.steps) acc += s.running_cost * s.dt;
  return acc + r.terminal_cost;
}

/// S_H = sum (1/2 |u|^2 + V) dt + sqrt(eps) u' dW + Psi_T, recomputed from the stored steps.
inline double path_cost_S(const RolloutResult& r, double eps) {
  double acc = 0.0;
  double stoch = 0.0;
  for (const auto& s : r.steps) {
    acc += (0.5 * s.u.squaredNorm() + s.running_cost) * s.dt;
    stoch += s.u.dot(s.dw);
  }
  return acc + std::sqrt(eps) * stoch + r.terminal_cost;
}

struct KlEstimate {
  double kl = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error of log dP^u/dP^0 over paths drawn under P^u.
inline KlEstimate kl_estimate(std::span<const PathLogRatio> paths) {
  if (paths.size() < 100) throw StatisticsError("KL estimate needs at least 100 rollouts");
  const double n = static_cast<double>(paths.size());
  double mean = 0.0;
  for (const auto& p : paths) mean += p.log_ratio_u_over_0;
  mean /= n;
  double var = 0.0;
  for (const auto& p : paths) var += (p.log_ratio_u_over_0 - mean) * (p.log_ratio_u_over_0 - mean);
  var /= (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

}  // namespace hpi
