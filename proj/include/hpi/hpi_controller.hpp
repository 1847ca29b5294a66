#pragma once

#include "hpi/cost.hpp"
#include "hpi/hybrid_model.hpp"
#include "hpi/parallel.hpp"
#include "hpi/random.hpp"
#include "hpi/rollout.hpp"
#include "hpi/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace hpi {

struct WeightSet {
  std::vector<double> log_weights;  // -(S_k - min S) / eps; -inf for failed samples
  std::vector<double> alpha;        // normalized so that mean(alpha) = 1
  double lambda = 1.0;              // 1 / mean(alpha^2)
  double var_alpha = 0.0;           // mean(alpha^2) - 1
  std::size_t non_finite = 0;
};

/// alpha_k = N exp(-S_k/eps) / sum_j exp(-S_j/eps), computed after shifting S
/// by its finite minimum. Non-finite S get weight 0.
inline WeightSet path_weights(std::span<const double> S, double eps) {
  if (S.empty()) throw DegenerateEnsembleError("no samples");
  WeightSet w;
  const std::size_t n = S.size();
  double s_min = std::numeric_limits<double>::infinity();
  for (double s : S) {
    if (std::isfinite(s)) s_min = std::min(s_min, s);
    else ++w.non_finite;
  }
  if (w.non_finite == n) throw DegenerateEnsembleError("all sampled path costs are non-finite");
  w.log_weights.resize(n);
  w.alpha.resize(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w.log_weights[k] = std::isfinite(S[k]) ? -(S[k] - s_min) / eps : -std::numeric_limits<double>::infinity();
    sum += std::exp(w.log_weights[k]);
  }
  const double scale = static_cast<double>(n) / sum;
  double sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w.alpha[k] = std::exp(w.log_weights[k]) * scale;
    sq += w.alpha[k] * w.alpha[k];
  }
  const double mean_sq = sq / static_cast<double>(n);
  w.lambda = 1.0 / mean_sq;
  w.var_alpha = mean_sq - 1.0;
  return w;
}

struct ControlUpdate {
  Vec u;
  Vec du;
  Vec u_star;
};

/// u* = u + (sqrt(eps) / dt) sum_k alpha_k dW_k / N, summed in sample order.
inline ControlUpdate control_update(const WeightSet& w, std::span<const Vec> first_noise, double eps, double dt,
                                    const Vec& u) {
  if (first_noise.size() != w.alpha.size()) throw ConfigurationError("weights and noises differ in length");
  Vec acc = Vec::Zero(u.size());
  for (std::size_t k = 0; k < first_noise.size(); ++k)
    if (w.alpha[k] != 0.0) acc += w.alpha[k] * first_noise[k];
  ControlUpdate cu;
  cu.u = u;
  cu.du = std::sqrt(eps) / dt * acc / static_cast<double>(first_noise.size());
  cu.u_star = u + cu.du;
  if (!cu.u_star.allFinite()) throw DegenerateEnsembleError("non-finite control update");
  return cu;
}

struct SampleBatch {
  std::vector<double> S;
  std::vector<Vec> first_noise;
  std::size_t failures = 0;
  PolicyStats policy_stats;
};

struct HpiOptions {
  std::size_t samples = 1000;
  RolloutOptions rollout;
  unsigned threads = 0;  // 0: worker_count()
};

/// Key of the noise stream for sampled future k drawn at grid step t.
inline std::uint64_t sample_stream_key(std::uint64_t sampling_key, std::size_t t, std::size_t k) {
  return make_key(sampling_key, t, k);
}

/// N_s proposal-controlled rollouts from (state, step) to the horizon. Failed
/// rollouts (divergence, Zeno, non-finite cost) get S = +inf.
template <class Policy>
SampleBatch sample_futures(const HybridModel& model, const TimeGrid& grid, std::size_t step,
                           const HybridState& state, const Policy& policy, const CostSpec& costs,
                           std::uint64_t sampling_key, const HpiOptions& opts) {
  const std::size_t n = opts.samples;
  if (n == 0) throw ConfigurationError("need at least one sample");
  if (step >= grid.steps) throw ConfigurationError("sampling past the horizon");
  SampleBatch b;
  b.S.assign(n, std::numeric_limits<double>::infinity());
  b.first_noise.assign(n, Vec::Zero(model.mode(state.mode).control_dim));
  std::vector<PolicyStats> stats(n);
  std::vector<unsigned char> failed(n, 0);
  auto body = [&](std::size_t k) {
    const KeyedNoise noise(sample_stream_key(sampling_key, step, k));
    b.first_noise[k] = noise.increment(step, model.mode(state.mode).control_dim, grid.dt());
    try {
      const RolloutSummary r = rollout_summary(model, grid, state, policy, noise, costs, opts.rollout, step);
      b.S[k] = r.S_u;
      stats[k] = r.policy_stats;
    } catch (const NumericalError&) {
      failed[k] = 1;
    } catch (const ZenoError&) {
      failed[k] = 1;
    }
  };
  parallel_for(n, body, opts.threads == 0 ? worker_count() : opts.threads);
  for (std::size_t k = 0; k < n; ++k) {
    b.failures += failed[k];
    b.policy_stats += stats[k];
  }
  return b;
}

struct HpiStepDiagnostics {
  std::size_t step = 0;
  double t = 0.0;
  int mode = 0;
  double lambda = 0.0;
  double var_alpha = 0.0;
  double du_norm = 0.0;
  std::size_t failures = 0;
  bool fallback = false;
  bool jumped = false;
  std::size_t mismatches = 0;
};

struct HpiResult {
  RolloutResult trajectory;  // the realized controlled path
  std::vector<HpiStepDiagnostics> diagnostics;
  double realized_cost = 0.0;  // sum (V + 1/2 |u*|^2) dt + Psi_T
  std::size_t fallbacks = 0;
  std::size_t failures = 0;
};

/// Realized cost of a stored path: sum (V + 1/2 |u|^2) dt + Psi_T.
inline double realized_cost(const RolloutResult& r) {
  return r.running_cost_integral + r.control_energy_integral + r.terminal_cost;
}

/// Hybrid path integral control loop. At every grid step: sample N_s futures
/// under the proposal, correct the proposal control by the weighted first
/// noise increments, and advance the true system one step with the corrected
/// control and actuator noise keyed by `actuator_key`.
template <class Policy>
HpiResult run_hpi(const HybridModel& model, const TimeGrid& grid, const HybridState& initial, const Policy& policy,
                  const CostSpec& costs, std::uint64_t sampling_key, std::uint64_t actuator_key,
                  const HpiOptions& opts) {
  HpiResult res;
  auto& traj = res.trajectory;
  traj.steps.reserve(grid.steps);
  const KeyedNoise actuator(actuator_key);
  const double eps = model.noise_intensity();
  const double dt = grid.dt();
  HybridState state = initial;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double t = grid.time(i);
    PolicyStats ps;
    const Vec u_prop = policy(i, t, state, ps);
    const SampleBatch batch = sample_futures(model, grid, i, state, policy, costs, sampling_key, opts);
    HpiStepDiagnostics d;
    d.step = i;
    d.t = t;
    d.mode = state.mode;
    d.failures = batch.failures;
    d.mismatches = batch.policy_stats.mismatches;
    Vec u_star = u_prop;
    try {
      const WeightSet w = path_weights(batch.S, eps);
      const ControlUpdate cu = control_update(w, batch.first_noise, eps, dt, u_prop);
      u_star = cu.u_star;
      d.lambda = w.lambda;
      d.var_alpha = w.var_alpha;
      d.du_norm = cu.du.norm();
    } catch (const DegenerateEnsembleError&) {
      d.fallback = true;
      d.lambda = std::numeric_limits<double>::quiet_NaN();
      d.var_alpha = std::numeric_limits<double>::quiet_NaN();
      ++res.fallbacks;
    }
    res.failures += batch.failures;
    const Vec dw = actuator.increment(i, model.mode(state.mode).control_dim, dt);
    StepOutcome oc = hybrid_step(model, state, t, u_star, dw, dt, i, opts.rollout);
    const double v = costs.running_cost(t, state.mode, state.x);
    traj.running_cost_integral += v * oc.dt_used;
    traj.control_energy_integral += 0.5 * u_star.squaredNorm() * oc.dt_used;
    traj.stochastic_integral += u_star.dot(oc.dw_used);
    for (const auto& j : oc.jumps) traj.jumps.push_back(j);
    d.jumped = !oc.jumps.empty();
    traj.steps.push_back(
        StepRecord{t, oc.dt_used, state.mode, state.anchor, state.x, u_star, oc.dw_used, oc.x_end, v, d.jumped});
    res.diagnostics.push_back(d);
    state = std::move(oc.next);
  }
  traj.final_state = state;
  traj.terminal_cost = costs.terminal_cost(state);
  traj.S_u = traj.running_cost_integral + traj.control_energy_integral +
             std::sqrt(eps) * traj.stochastic_integral + traj.terminal_cost;
  traj.L_H = traj.running_cost_integral + traj.terminal_cost;
  res.realized_cost = realized_cost(traj);
  return res;
}

/// H-PI with the uncontrolled process as proposal: samples are weighted by
/// exp(-L_H / eps), which equals exp(-S / eps) when u = 0.
inline HpiResult run_hpi_zero_proposal(const HybridModel& model, const TimeGrid& grid, const HybridState& initial,
                                       const CostSpec& costs, std::uint64_t sampling_key,
                                       std::uint64_t actuator_key, const HpiOptions& opts) {
  return run_hpi(model, grid, initial, ZeroPolicy(model), costs, sampling_key, actuator_key, opts);
}

}  // namespace hpi
