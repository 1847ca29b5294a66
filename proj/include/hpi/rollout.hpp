#pragma once

#include "hpi/cost.hpp"
#include "hpi/hybrid_model.hpp"
#include "hpi/random.hpp"
#include "hpi/types.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

namespace hpi {

/// Uniform grid t_i = i * dt, i = 0..steps, with t_steps = horizon.
struct TimeGrid {
  double horizon = 0.0;
  std::size_t steps = 0;

  double dt() const noexcept { return horizon / static_cast<double>(steps); }
  double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt(); }

  /// Grid with step `dt` covering `horizon`; the step count is rounded so that
  /// horizon / steps reproduces dt to rounding.
  static TimeGrid from_step(double dt, double horizon) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ConfigurationError("time grid needs dt > 0 and horizon > 0");
    const auto n = static_cast<std::size_t>(std::llround(horizon / dt));
    if (n == 0) throw ConfigurationError("horizon shorter than one step");
    return TimeGrid{static_cast<double>(n) * dt, n};
  }
};

struct RolloutOptions {
  double guard_tol = 1e-9;
  double time_tol_factor = 1e-12;
  int max_events_per_step = 4;
  int max_events_per_rollout = 64;
};

struct JumpRecord {
  std::size_t step = 0;
  double pre_time = 0.0;
  double post_time = 0.0;
  int from = 0;
  int to = 0;
  Vec pre_state;
  Vec post_state;
  double shortened_step = 0.0;
  double pre_anchor = 0.0;
  double post_anchor = 0.0;
};

/// Counters for how a feedback policy handled mode mismatches.
struct PolicyStats {
  std::size_t mismatches = 0;
  std::size_t clamped = 0;
  std::size_t fallbacks = 0;

  PolicyStats& operator+=(const PolicyStats& o) noexcept {
    mismatches += o.mismatches;
    clamped += o.clamped;
    fallbacks += o.fallbacks;
    return *this;
  }
};

/// One grid step as it was simulated. `x_end` is the state reached by the
/// smooth map before any reset (the pre-impact state on jump steps), `dt` and
/// `dw` are the possibly shortened step and the increment actually consumed.
struct StepRecord {
  double t = 0.0;
  double dt = 0.0;
  int mode = 0;
  double anchor = 0.0;
  Vec x;
  Vec u;
  Vec dw;
  Vec x_end;
  double running_cost = 0.0;
  bool jumped = false;
};

struct RolloutResult {
  std::size_t start_step = 0;
  std::vector<StepRecord> steps;
  std::vector<JumpRecord> jumps;
  HybridState final_state;
  double running_cost_integral = 0.0;
  double control_energy_integral = 0.0;
  /// sum of u' dW over the consumed increments (not scaled by sqrt(eps)).
  double stochastic_integral = 0.0;
  double terminal_cost = 0.0;
  double S_u = 0.0;
  double L_H = 0.0;
  PolicyStats policy_stats;
};

/// Scalar outcome of a rollout without the per-step history.
struct RolloutSummary {
  double running_cost_integral = 0.0;
  double control_energy_integral = 0.0;
  double stochastic_integral = 0.0;
  double terminal_cost = 0.0;
  double S_u = 0.0;
  double L_H = 0.0;
  Vec first_noise;
  std::size_t jump_count = 0;
  HybridState final_state;
  PolicyStats policy_stats;
};

/// One Euler-Maruyama step x + (F + sigma u) dt + sqrt(eps) sigma dW.
inline Vec euler_step(const HybridModel& model, int mode, double t, const Vec& x, const Vec& u, const Vec& dw,
                      double dt, std::size_t step = 0) {
  const auto& m = model.mode(mode);
  const Mat sigma = m.diffusion(t, x);
  Vec next = x + (m.drift(t, x) + sigma * u) * dt + std::sqrt(model.noise_intensity()) * (sigma * dw);
  if (!next.allFinite()) throw DivergenceError("non-finite state in mode " + std::to_string(mode), step);
  return next;
}

struct EventLocation {
  double s = 0.0;      // offset from the step start, in (0, dt]
  Vec x_minus;         // interpolated pre-impact state
  Vec dw_shortened;    // dW * sqrt(s / dt)
};

namespace detail {

// Pre-impact interpolant over one step: drift held at its step-start value,
// Wiener increment scaled as dW * sqrt(s/dt) so that the partial increment has
// variance s and the shortened step is itself an Euler-Maruyama step.
struct StepInterpolant {
  const Vec& x;
  const Vec& f;
  const Mat& sigma;
  const Vec& dw;
  double sqrt_eps;
  double dt;

  Vec dw_at(double s) const { return dw * std::sqrt(s / dt); }
  Vec state_at(double s, const Vec& dws) const { return x + f * s + sqrt_eps * (sigma * dws); }
};

inline EventLocation bisect_event(const TransitionSpec& tr, double t0, const StepInterpolant& path,
                                  const RolloutOptions& opts) {
  const double time_tol = std::max(opts.time_tol_factor * path.dt, std::numeric_limits<double>::epsilon());
  auto eval = [&](double s, Vec& dws, Vec& xs) {
    dws = path.dw_at(s);
    xs = path.state_at(s, dws);
    return tr.guard(t0 + s, xs);
  };
  Vec dws, xs;
  if (!(tr.guard(t0, path.x) > 0.0))
    throw InternalInconsistencyError("event refinement: guard not positive at step start");
  double g_hi = eval(path.dt, dws, xs);
  if (!(g_hi <= 0.0)) throw InternalInconsistencyError("event refinement: no sign change over the step");
  if (g_hi >= -opts.guard_tol) return {path.dt, xs, dws};

  double lo = 0.0;
  double hi = path.dt;
  Vec dws_hi = dws, xs_hi = xs;
  while (hi - lo > time_tol) {
    const double mid = 0.5 * (lo + hi);
    const double gm = eval(mid, dws, xs);
    if (std::abs(gm) <= opts.guard_tol) return {mid, xs, dws};
    if (gm > 0.0) {
      lo = mid;
    } else {
      hi = mid;
      dws_hi = dws;
      xs_hi = xs;
    }
  }
  return {hi, xs_hi, dws_hi};
}

}  // namespace detail

/// Bisection for the first zero of g_{jk} inside the step [t_i, t_i + dt].
/// Requires g > 0 at the step start and g <= 0 at the tentative endpoint.
inline EventLocation refine_event_time(const HybridModel& model, int from, int to, double t_i, const Vec& x_i,
                                       const Vec& u, const Vec& dw, double dt,
                                       const RolloutOptions& opts = {}) {
  const auto& m = model.mode(from);
  const Mat sigma = m.diffusion(t_i, x_i);
  const Vec f = m.drift(t_i, x_i) + sigma * u;
  detail::StepInterpolant path{x_i, f, sigma, dw, std::sqrt(model.noise_intensity()), dt};
  return detail::bisect_event(model.transition(from, to), t_i, path, opts);
}

struct StepOutcome {
  HybridState next;
  Vec x_end;
  double dt_used = 0.0;
  Vec dw_used;
  std::vector<JumpRecord> jumps;
};

/// Tentative Euler step; if a guard is crossed (positive at the start,
/// non-positive at the end) locate the event, shorten the step and its noise
/// increment, apply the reset, and resolve any guards already violated by the
/// post-reset state. The remainder of the step after the event is not integrated.
inline StepOutcome hybrid_step(const HybridModel& model, const HybridState& state, double t, const Vec& u,
                               const Vec& dw, double dt, std::size_t step = 0,
                               const RolloutOptions& opts = {}) {
  const auto& m = model.mode(state.mode);
  if (u.size() != m.control_dim || dw.size() != m.control_dim)
    throw ConfigurationError("control/noise dimension does not match mode " + std::to_string(state.mode));
  const Mat sigma = m.diffusion(t, state.x);
  const Vec f = m.drift(t, state.x) + sigma * u;
  const double sqrt_eps = std::sqrt(model.noise_intensity());
  const Vec x_tent = state.x + f * dt + sqrt_eps * (sigma * dw);
  if (!x_tent.allFinite()) throw DivergenceError("non-finite state in mode " + std::to_string(state.mode), step);

  const TransitionSpec* fired = nullptr;
  double fired_g = 0.0;
  for (std::size_t idx : model.outgoing(state.mode)) {
    const auto& tr = model.transitions()[idx];
    const double g1 = tr.guard(t + dt, x_tent);
    if (!(g1 <= 0.0)) continue;
    if (!(tr.guard(t, state.x) > 0.0)) continue;
    if (fired == nullptr || g1 < fired_g) {
      fired = &tr;
      fired_g = g1;
    }
  }

  StepOutcome out;
  if (fired == nullptr) {
    out.next = {state.mode, x_tent, state.anchor, state.epoch};
    out.x_end = x_tent;
    out.dt_used = dt;
    out.dw_used = dw;
  } else {
    detail::StepInterpolant path{state.x, f, sigma, dw, sqrt_eps, dt};
    EventLocation ev = detail::bisect_event(*fired, t, path, opts);
    out.x_end = ev.x_minus;
    out.dt_used = ev.s;
    out.dw_used = ev.dw_shortened;
    const double t_event = t + ev.s;
    HybridState post = apply_reset(model, fired->from, fired->to, t_event, ev.x_minus, state.anchor);
    post.epoch = state.epoch + 1;
    out.jumps.push_back({step, t_event, t_event, fired->from, fired->to, ev.x_minus, post.x, ev.s, state.anchor,
                         post.anchor});
    // Chained events: guards strictly violated right after the reset.
    while (true) {
      const auto active = active_transitions(model, post.mode, t_event, post.x);
      const TransitionSpec* next = nullptr;
      for (const auto& [j, k] : active) {
        const auto& tr = model.transition(j, k);
        if (tr.guard(t_event, post.x) < -opts.guard_tol) {
          next = &tr;
          break;
        }
      }
      if (next == nullptr) break;
      if (static_cast<int>(out.jumps.size()) >= opts.max_events_per_step)
        throw ZenoError("more than " + std::to_string(opts.max_events_per_step) + " events in one step", step);
      HybridState chained = apply_reset(model, next->from, next->to, t_event, post.x, post.anchor);
      chained.epoch = post.epoch + 1;
      out.jumps.push_back({step, t_event, t_event, next->from, next->to, post.x, chained.x, 0.0, post.anchor,
                           chained.anchor});
      post = std::move(chained);
    }
    out.next = std::move(post);
  }
  const auto& nm = model.mode(out.next.mode);
  if (nm.in_domain && !nm.in_domain(out.next.x))
    throw DivergenceError("state left the domain of mode " + std::to_string(out.next.mode), step);
  return out;
}

/// Zero control of the right dimension in every mode.
class ZeroPolicy {
 public:
  explicit ZeroPolicy(const HybridModel& model) : model_(&model) {}
  Vec operator()(std::size_t, double, const HybridState& s, PolicyStats&) const {
    return Vec::Zero(model_->mode(s.mode).control_dim);
  }

 private:
  const HybridModel* model_;
};

namespace detail {

struct FullRecorder {
  RolloutResult* out;
  void on_step(StepRecord&& rec, const StepOutcome& oc) {
    for (const auto& j : oc.jumps) out->jumps.push_back(j);
    out->steps.push_back(std::move(rec));
  }
};

struct SummaryRecorder {
  RolloutSummary* out;
  bool first = true;
  void on_outcome(const StepOutcome& oc) {
    if (first) {
      out->first_noise = oc.dw_used;
      first = false;
    }
    out->jump_count += oc.jumps.size();
  }
};

struct Accumulators {
  double running = 0.0;
  double energy = 0.0;
  double stochastic = 0.0;
  std::size_t jumps = 0;
};

template <class Policy, class Noise, class Recorder>
HybridState simulate(const HybridModel& model, const TimeGrid& grid, std::size_t start_step, HybridState state,
                     const Policy& policy, const Noise& noise, const CostSpec& costs, const RolloutOptions& opts,
                     Recorder& rec, Accumulators& acc, PolicyStats& stats) {
  const double dt = grid.dt();
  for (std::size_t i = start_step; i < grid.steps; ++i) {
    const double t = grid.time(i);
    const int m = model.mode(state.mode).control_dim;
    Vec u = policy(i, t, state, stats);
    if (!u.allFinite()) throw DivergenceError("policy returned a non-finite control", i);
    const Vec dw = noise.increment(i, m, dt);
    StepOutcome oc = hybrid_step(model, state, t, u, dw, dt, i, opts);
    const double v = costs.running_cost(t, state.mode, state.x);
    acc.running += v * oc.dt_used;
    acc.energy += 0.5 * u.squaredNorm() * oc.dt_used;
    acc.stochastic += u.dot(oc.dw_used);
    acc.jumps += oc.jumps.size();
    if (static_cast<int>(acc.jumps) > opts.max_events_per_rollout)
      throw ZenoError("more than " + std::to_string(opts.max_events_per_rollout) + " events in one rollout", i);
    if constexpr (std::is_same_v<Recorder, SummaryRecorder>)
      rec.on_outcome(oc);
    else
      rec.on_step(StepRecord{t, oc.dt_used, state.mode, state.anchor, state.x, std::move(u), oc.dw_used, oc.x_end,
                             v, !oc.jumps.empty()},
                  oc);
    state = std::move(oc.next);
  }
  return state;
}

}  // namespace detail

/// Full hybrid rollout from grid step `start_step` to the horizon, recording
/// every step. Cost accumulation per step k:
///   S += (V + 1/2 |u|^2) dt_k + sqrt(eps) u' dW_k,   L += V dt_k,
/// with Psi_T added to both at the end.
template <class Policy, class Noise>
RolloutResult rollout(const HybridModel& model, const TimeGrid& grid, const HybridState& initial,
                      const Policy& policy, const Noise& noise, const CostSpec& costs,
                      const RolloutOptions& opts = {}, std::size_t start_step = 0) {
  RolloutResult res;
  res.start_step = start_step;
  res.steps.reserve(grid.steps - start_step);
  detail::FullRecorder rec{&res};
  detail::Accumulators acc;
  res.final_state =
      detail::simulate(model, grid, start_step, initial, policy, noise, costs, opts, rec, acc, res.policy_stats);
  res.running_cost_integral = acc.running;
  res.control_energy_integral = acc.energy;
  res.stochastic_integral = acc.stochastic;
  res.terminal_cost = costs.terminal_cost(res.final_state);
  const double sqrt_eps = std::sqrt(model.noise_intensity());
  res.S_u = acc.running + acc.energy + sqrt_eps * acc.stochastic + res.terminal_cost;
  res.L_H = acc.running + res.terminal_cost;
  if (!std::isfinite(res.S_u) || !std::isfinite(res.L_H))
    throw DivergenceError("non-finite path cost", grid.steps);
  return res;
}

/// Same as rollout() but keeps only the scalar outcome.
template <class Policy, class Noise>
RolloutSummary rollout_summary(const HybridModel& model, const TimeGrid& grid, const HybridState& initial,
                               const Policy& policy, const Noise& noise, const CostSpec& costs,
                               const RolloutOptions& opts = {}, std::size_t start_step = 0) {
  RolloutSummary res;
  detail::SummaryRecorder rec{&res};
  detail::Accumulators acc;
  res.final_state =
      detail::simulate(model, grid, start_step, initial, policy, noise, costs, opts, rec, acc, res.policy_stats);
  res.running_cost_integral = acc.running;
  res.control_energy_integral = acc.energy;
  res.stochastic_integral = acc.stochastic;
  res.terminal_cost = costs.terminal_cost(res.final_state);
  const double sqrt_eps = std::sqrt(model.noise_intensity());
  res.S_u = acc.running + acc.energy + sqrt_eps * acc.stochastic + res.terminal_cost;
  res.L_H = acc.running + res.terminal_cost;
  if (!std::isfinite(res.S_u) || !std::isfinite(res.L_H))
    throw DivergenceError("non-finite path cost", grid.steps);
  return res;
}

}  // namespace hpi
