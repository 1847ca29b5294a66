#pragma once

#include "hpi/cost.hpp"
#include "hpi/hybrid_model.hpp"
#include "hpi/rollout.hpp"
#include "hpi/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace hpi {

/// Zero-noise trajectory on a grid. Index i = 0..N for states, modes and
/// anchors (entry N is the final state); i = 0..N-1 for controls and steps.
struct NominalTrajectory {
  TimeGrid grid;
  std::vector<int> modes;
  std::vector<Vec> x;
  std::vector<double> anchors;
  std::vector<Vec> u;
  std::vector<double> dt_used;
  std::vector<Vec> x_end;
  std::vector<JumpRecord> jumps;
  std::vector<int> epochs;  // transitions completed before grid step i
  double cost = 0.0;

  std::size_t steps() const noexcept { return u.size(); }
  HybridState state(std::size_t i) const { return {modes[i], x[i], anchors[i], epochs[i]}; }

  static NominalTrajectory from_rollout(const RolloutResult& r, const TimeGrid& grid) {
    NominalTrajectory nt;
    nt.grid = grid;
    const std::size_t n = r.steps.size();
    nt.modes.reserve(n + 1);
    nt.x.reserve(n + 1);
    nt.anchors.reserve(n + 1);
    nt.u.reserve(n);
    nt.dt_used.reserve(n);
    nt.x_end.reserve(n);
    for (const auto& s : r.steps) {
      nt.modes.push_back(s.mode);
      nt.x.push_back(s.x);
      nt.anchors.push_back(s.anchor);
      nt.u.push_back(s.u);
      nt.dt_used.push_back(s.dt);
      nt.x_end.push_back(s.x_end);
    }
    nt.modes.push_back(r.final_state.mode);
    nt.x.push_back(r.final_state.x);
    nt.anchors.push_back(r.final_state.anchor);
    nt.jumps = r.jumps;
    nt.epochs.assign(n + 1, 0);
    for (const auto& j : nt.jumps)
      for (std::size_t i = j.step + 1; i <= n; ++i) ++nt.epochs[i];
    nt.cost = r.S_u;
    return nt;
  }
};

/// Second-order expansion of the state-action value at one step.
struct QuadraticExpansion {
  Vec Qx;
  Vec Qu;
  Mat Qxx;
  Mat Qux;
  Mat Quu;
};

/// u_i = u_ref_i + K_i (x - x_ref_i) + k_i.
struct Gains {
  std::vector<Mat> K;
  std::vector<Vec> k;
};

/// Mode-consistent references around one nominal jump at grid step `jump_step`.
/// Forward entries continue the pre-jump mode past the event and sit at grid
/// steps jump_step+1, jump_step+2, ...; backward entries run the post-jump mode
/// back in time from the event and sit at grid steps jump_step, jump_step-1, ...
struct ReferenceExtension {
  std::size_t jump_step = 0;
  int from = 0;
  int to = 0;
  double event_time = 0.0;

  std::vector<Vec> fwd_x;
  Vec fwd_u;
  Mat fwd_K;
  Vec fwd_k;

  std::vector<Vec> bwd_x;
  Vec bwd_u;
  Mat bwd_K;
  Vec bwd_k;
  bool truncated = false;
};

struct Reference {
  Vec x;
  Vec u;
  Mat K;
  Vec k;
};

struct IlqrOptions {
  int max_iters = 200;
  double tol_cost = 1e-6;
  double reg_init = 1e-6;
  double reg_factor = 10.0;
  double reg_max = 1e6;
  double alpha_min = 1e-4;
  /// Keep the feedforward terms of the final backward pass. Off by default:
  /// the returned policy then reproduces its nominal exactly under zero noise.
  bool keep_final_feedforward = false;
  /// Extension horizons; negative means ceil(0.1 N_T).
  long ext_forward = -1;
  long ext_backward = -1;
  RolloutOptions rollout;
};

inline std::size_t default_extension_horizon(std::size_t n_steps) {
  return static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n_steps)));
}

/// H-iLQR feedback policy with reference-extension substitution on mode mismatch.
class ProposalPolicy {
 public:
  ProposalPolicy() = default;
  ProposalPolicy(const HybridModel& model, NominalTrajectory nominal, Gains gains,
                 std::vector<ReferenceExtension> extensions)
      : model_(&model), nominal_(std::move(nominal)), gains_(std::move(gains)), ext_(std::move(extensions)) {}

  const NominalTrajectory& nominal() const noexcept { return nominal_; }
  const Gains& gains() const noexcept { return gains_; }
  const std::vector<ReferenceExtension>& extensions() const noexcept { return ext_; }
  const HybridModel& model() const noexcept { return *model_; }

  bool use_extensions = true;
  /// Scale on the feedforward term k (line-search step during optimization).
  double feedforward_scale = 1.0;

  Vec operator()(std::size_t step, double, const HybridState& s, PolicyStats& stats) const {
    const std::size_t i = std::min(step, nominal_.steps() - 1);
    if (s.mode == nominal_.modes[i]) return law(nominal_.x[i], nominal_.u[i], gains_.K[i], gains_.k[i], s.x);
    ++stats.mismatches;
    const Reference ref = select(i, s.mode, s.epoch, stats);
    return law(ref.x, ref.u, ref.K, ref.k, s.x);
  }

  /// Reference for a state in `actual_mode` that has completed `actual_epoch`
  /// transitions, queried at grid step i. When the mode differs from the
  /// nominal's, the transition counts decide which nominal jump the mismatch
  /// belongs to: a state ahead of the nominal (early arrival) tracks the
  /// backward extension of the nominal jump it has already made; a state
  /// behind (late arrival) tracks the forward extension of the nominal jump it
  /// has not made yet. Entries are indexed by the grid offset from the jump and
  /// clamped to the extension length. Without a matching extension the raw
  /// nominal is used when dimensions agree, else the nearest-in-time nominal
  /// point in the actual mode (counted as a fallback).
  Reference select(std::size_t i, int actual_mode, int actual_epoch, PolicyStats& stats) const {
    if (actual_mode == nominal_.modes[i]) return {nominal_.x[i], nominal_.u[i], gains_.K[i], gains_.k[i]};
    const bool same_dim = model_->mode(nominal_.modes[i]).state_dim == model_->mode(actual_mode).state_dim;
    if (use_extensions) {
      const int nominal_epoch = nominal_.epochs[i];
      if (actual_epoch > nominal_epoch) {
        const auto idx = static_cast<std::size_t>(actual_epoch - 1);
        if (idx < ext_.size() && ext_[idx].to == actual_mode && ext_[idx].jump_step >= i && !ext_[idx].bwd_x.empty())
          return entry(ext_[idx], true, ext_[idx].jump_step - i, stats);
      } else if (actual_epoch < nominal_epoch) {
        const auto idx = static_cast<std::size_t>(actual_epoch);
        if (idx < ext_.size() && ext_[idx].from == actual_mode && ext_[idx].jump_step < i && !ext_[idx].fwd_x.empty())
          return entry(ext_[idx], false, i - ext_[idx].jump_step - 1, stats);
      }
    }
    if (same_dim) return {nominal_.x[i], nominal_.u[i], gains_.K[i], gains_.k[i]};
    ++stats.fallbacks;
    return nearest_same_mode(i, actual_mode);
  }

 private:
  static Reference entry(const ReferenceExtension& e, bool backward, std::size_t offset, PolicyStats& stats) {
    const auto& xs = backward ? e.bwd_x : e.fwd_x;
    if (offset >= xs.size()) {
      offset = xs.size() - 1;
      ++stats.clamped;
    }
    if (backward) return {xs[offset], e.bwd_u, e.bwd_K, e.bwd_k};
    return {xs[offset], e.fwd_u, e.fwd_K, e.fwd_k};
  }

  Vec law(const Vec& xr, const Vec& ur, const Mat& K, const Vec& k, const Vec& x) const {
    return ur + K * (x - xr) + feedforward_scale * k;
  }

  Reference nearest_same_mode(std::size_t i, int mode) const {
    const std::size_t n = nominal_.steps();
    for (std::size_t d = 1; d < n; ++d) {
      if (i >= d && nominal_.modes[i - d] == mode) {
        const std::size_t j = i - d;
        return {nominal_.x[j], nominal_.u[j], gains_.K[j], gains_.k[j]};
      }
      if (i + d < n && nominal_.modes[i + d] == mode) {
        const std::size_t j = i + d;
        return {nominal_.x[j], nominal_.u[j], gains_.K[j], gains_.k[j]};
      }
    }
    const auto& m = model_->mode(mode);
    return {Vec::Zero(m.state_dim), Vec::Zero(m.control_dim), Mat::Zero(m.control_dim, m.state_dim),
            Vec::Zero(m.control_dim)};
  }

  const HybridModel* model_ = nullptr;
  NominalTrajectory nominal_;
  Gains gains_;
  std::vector<ReferenceExtension> ext_;
};

struct StepLinearization {
  Mat A;
  Mat B;
};

/// Jacobians of the discrete map at nominal step i: A = I + df/dx dt, B = df/du dt,
/// left-multiplied by the saltation matrix of every jump inside the step.
inline StepLinearization linearize_step(const HybridModel& model, const NominalTrajectory& nt, std::size_t i) {
  const int mode = nt.modes[i];
  const int n = model.mode(mode).state_dim;
  const double dt = nt.grid.dt();
  const double t = nt.grid.time(i);
  Mat dfdx, dfdu;
  model.drift_jacobian(mode, t, nt.x[i], nt.u[i], dfdx, dfdu);
  StepLinearization lin{Mat::Identity(n, n) + dfdx * dt, dfdu * dt};
  Vec u_pre = nt.u[i];
  for (const auto& j : nt.jumps) {
    if (j.step != i) continue;
    const auto& to_mode = model.mode(j.to);
    Vec u_post = Vec::Zero(to_mode.control_dim);
    if (i + 1 < nt.steps() && nt.modes[i + 1] == j.to) u_post = nt.u[i + 1];
    const Mat xi = saltation_matrix(model, j.from, j.to, j.pre_time, j.pre_state, u_pre, u_post, j.pre_anchor);
    lin.A = xi * lin.A;
    lin.B = xi * lin.B;
    u_pre = u_post;
  }
  return lin;
}

struct BackwardPassResult {
  Gains gains;
  double expected_reduction = 0.0;  // -(sum k'Qu + 1/2 k'Quu k)
  double reg_used = 0.0;
};

/// Riccati-like sweep. `reg` is added to Quu at every step; when Quu + reg I is
/// not positive definite, an extra diagonal shift starting at reg_init grows by
/// reg_factor until it is (SolverError past reg_max).
inline BackwardPassResult backward_pass(const std::vector<StepLinearization>& lin, const std::vector<Vec>& lx,
                                        const std::vector<Vec>& lu, const std::vector<Mat>& lxx,
                                        const std::vector<Mat>& luu, const Vec& terminal_Vx, const Mat& terminal_Vxx,
                                        double reg, const IlqrOptions& opts = {}) {
  const std::size_t n = lin.size();
  BackwardPassResult out;
  out.gains.K.resize(n);
  out.gains.k.resize(n);
  out.reg_used = reg;
  Vec Vx = terminal_Vx;
  Mat Vxx = terminal_Vxx;
  double dv1 = 0.0, dv2 = 0.0;
  for (std::size_t r = n; r-- > 0;) {
    const Mat& A = lin[r].A;
    const Mat& B = lin[r].B;
    const Vec Qx = lx[r] + A.transpose() * Vx;
    const Vec Qu = lu[r] + B.transpose() * Vx;
    const Mat VxxA = Vxx * A;
    const Mat Qxx = lxx[r] + A.transpose() * VxxA;
    const Mat Qux = B.transpose() * VxxA;
    Mat Quu = luu[r] + B.transpose() * Vxx * B;
    Quu = 0.5 * (Quu + Quu.transpose()).eval();
    const Eigen::Index m = Quu.rows();

    Mat Quu_reg = Quu + reg * Mat::Identity(m, m);
    Eigen::LLT<Mat> llt(Quu_reg);
    double shift = opts.reg_init;
    while (llt.info() != Eigen::Success) {
      if (shift > opts.reg_max) throw SolverError("Quu indefinite beyond maximum regularization");
      Quu_reg = Quu + (reg + shift) * Mat::Identity(m, m);
      llt.compute(Quu_reg);
      out.reg_used = std::max(out.reg_used, reg + shift);
      shift *= opts.reg_factor;
    }
    Mat K = -llt.solve(Qux);
    Vec k = -llt.solve(Qu);
    dv1 += k.dot(Qu);
    dv2 += 0.5 * k.dot(Quu * k);
    Vx = Qx + K.transpose() * (Quu * k) + K.transpose() * Qu + Qux.transpose() * k;
    Mat Vn = Qxx + K.transpose() * Quu * K + K.transpose() * Qux + Qux.transpose() * K;
    Vxx = 0.5 * (Vn + Vn.transpose());
    out.gains.K[r] = std::move(K);
    out.gains.k[r] = std::move(k);
  }
  out.expected_reduction = -(dv1 + dv2);
  return out;
}

namespace detail {

struct CostExpansion {
  std::vector<Vec> lx, lu;
  std::vector<Mat> lxx, luu;
  Vec Vx;
  Mat Vxx;
};

inline CostExpansion expand_costs(const HybridModel& model, const NominalTrajectory& nt, const CostSpec& costs) {
  const std::size_t n = nt.steps();
  CostExpansion ce;
  ce.lx.resize(n);
  ce.lu.resize(n);
  ce.lxx.resize(n);
  ce.luu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = nt.dt_used[i];
    const double t = nt.grid.time(i);
    const int m = model.mode(nt.modes[i]).control_dim;
    ce.lx[i] = costs.running_grad(t, nt.modes[i], nt.x[i]) * h;
    ce.lxx[i] = costs.running_hess(t, nt.modes[i], nt.x[i]) * h;
    ce.lu[i] = nt.u[i] * h;
    ce.luu[i] = Mat::Identity(m, m) * h;
  }
  const HybridState fin = nt.state(n);
  ce.Vx = costs.terminal_grad(fin);
  ce.Vxx = costs.terminal_hess(fin);
  return ce;
}

}  // namespace detail

/// Backward pass around a nominal: linearizes every step (saltation at jumps)
/// and expands the costs.
inline BackwardPassResult backward_pass(const HybridModel& model, const NominalTrajectory& nt, const CostSpec& costs,
                                        double reg, const IlqrOptions& opts = {}) {
  std::vector<StepLinearization> lin(nt.steps());
  for (std::size_t i = 0; i < nt.steps(); ++i) lin[i] = linearize_step(model, nt, i);
  const auto ce = detail::expand_costs(model, nt, costs);
  return backward_pass(lin, ce.lx, ce.lu, ce.lxx, ce.luu, ce.Vx, ce.Vxx, reg, opts);
}

/// Forward/backward extensions around every jump of the nominal. Forward
/// entries integrate the pre-jump mode from (t-, x-) under the held control
/// u_ref at the jump step; backward entries integrate the post-jump mode from
/// (t+, x+) backward in time under u_ref of the step after the jump. Entries
/// stop at the first state outside the mode's domain or non-finite.
inline std::vector<ReferenceExtension> build_extensions(const HybridModel& model, const NominalTrajectory& nt,
                                                        const Gains& gains, std::size_t n_fwd, std::size_t n_bwd) {
  std::vector<ReferenceExtension> out;
  const std::size_t n = nt.steps();
  const double dt = nt.grid.dt();
  auto admissible = [&](const ModeSpec& m, const Vec& x) { return x.allFinite() && (!m.in_domain || m.in_domain(x)); };
  for (const auto& j : nt.jumps) {
    ReferenceExtension e;
    e.jump_step = j.step;
    e.from = j.from;
    e.to = j.to;
    e.event_time = j.pre_time;
    const auto& mf = model.mode(j.from);
    const auto& mt = model.mode(j.to);

    e.fwd_u = nt.modes[j.step] == j.from ? nt.u[j.step] : Vec::Zero(mf.control_dim);
    e.fwd_K = nt.modes[j.step] == j.from ? gains.K[j.step] : Mat::Zero(mf.control_dim, mf.state_dim);
    e.fwd_k = nt.modes[j.step] == j.from ? gains.k[j.step] : Vec::Zero(mf.control_dim);
    {
      Vec x = j.pre_state;
      double t = j.pre_time;
      double h = nt.grid.time(j.step + 1) - t;
      for (std::size_t m = 0; m < n_fwd && j.step + 1 + m <= n; ++m) {
        x = x + (mf.drift(t, x) + mf.diffusion(t, x) * e.fwd_u) * h;
        t += h;
        h = dt;
        if (!admissible(mf, x)) {
          e.truncated = true;
          break;
        }
        e.fwd_x.push_back(x);
      }
    }

    const bool has_post = j.step + 1 < n && nt.modes[j.step + 1] == j.to;
    e.bwd_u = has_post ? nt.u[j.step + 1] : Vec::Zero(mt.control_dim);
    e.bwd_K = has_post ? gains.K[j.step + 1] : Mat::Zero(mt.control_dim, mt.state_dim);
    e.bwd_k = has_post ? gains.k[j.step + 1] : Vec::Zero(mt.control_dim);
    {
      Vec x = j.post_state;
      double t = j.post_time;
      double h = t - nt.grid.time(j.step);
      for (std::size_t m = 0; m < n_bwd && m <= j.step; ++m) {
        x = x - (mt.drift(t, x) + mt.diffusion(t, x) * e.bwd_u) * h;
        t -= h;
        h = dt;
        if (!admissible(mt, x)) {
          e.truncated = true;
          break;
        }
        e.bwd_x.push_back(x);
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Deterministic rollout of a proposal policy with feedforward scale alpha.
inline NominalTrajectory forward_pass(const HybridModel& model, const TimeGrid& grid, const HybridState& initial,
                                      const ProposalPolicy& policy, const CostSpec& costs, double alpha,
                                      const RolloutOptions& opts = {}) {
  ProposalPolicy p = policy;
  p.feedforward_scale = alpha;
  const RolloutResult r = rollout(model, grid, initial, p, ZeroNoise{}, costs, opts);
  return NominalTrajectory::from_rollout(r, grid);
}

struct IlqrResult {
  ProposalPolicy policy;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_history;
};

using InitialGuess = std::function<Vec(std::size_t step, double t, const HybridState& s)>;

/// Alternates backward and forward passes until the relative cost change falls
/// below tol_cost or max_iters is reached. Accepted steps never increase the
/// cost. The returned policy carries feedback gains from a final backward pass
/// around the returned nominal and extensions built from it.
inline IlqrResult solve(const HybridModel& model, const TimeGrid& grid, const HybridState& initial,
                        const CostSpec& costs, const IlqrOptions& opts = {}, const InitialGuess& guess = {}) {
  const std::size_t nf = opts.ext_forward < 0 ? default_extension_horizon(grid.steps)
                                              : static_cast<std::size_t>(opts.ext_forward);
  const std::size_t nb = opts.ext_backward < 0 ? default_extension_horizon(grid.steps)
                                               : static_cast<std::size_t>(opts.ext_backward);
  RolloutResult r0;
  if (guess) {
    auto pol = [&](std::size_t i, double t, const HybridState& s, PolicyStats&) { return guess(i, t, s); };
    r0 = rollout(model, grid, initial, pol, ZeroNoise{}, costs, opts.rollout);
  } else {
    r0 = rollout(model, grid, initial, ZeroPolicy(model), ZeroNoise{}, costs, opts.rollout);
  }
  NominalTrajectory nt = NominalTrajectory::from_rollout(r0, grid);

  IlqrResult res;
  res.cost_history.push_back(nt.cost);
  double reg = 0.0;
  auto make_policy = [&](const NominalTrajectory& nom, Gains g) {
    auto ext = build_extensions(model, nom, g, nf, nb);
    return ProposalPolicy(model, nom, std::move(g), std::move(ext));
  };

  while (res.iterations < opts.max_iters) {
    ++res.iterations;
    BackwardPassResult bp;
    try {
      bp = backward_pass(model, nt, costs, reg, opts);
    } catch (const SolverError&) {
      break;
    }
    const ProposalPolicy trial = make_policy(nt, std::move(bp.gains));
    bool accepted = false;
    NominalTrajectory next;
    for (double alpha = 1.0; alpha >= opts.alpha_min; alpha *= 0.5) {
      try {
        next = forward_pass(model, grid, initial, trial, costs, alpha, opts.rollout);
      } catch (const NumericalError&) {
        continue;
      } catch (const ZenoError&) {
        continue;
      }
      if (std::isfinite(next.cost) && next.cost <= nt.cost) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      reg = reg == 0.0 ? opts.reg_init : reg * opts.reg_factor;
      if (reg > opts.reg_max) break;
      continue;
    }
    const double rel = std::abs(nt.cost - next.cost) / std::max(std::abs(nt.cost), 1e-12);
    nt = std::move(next);
    res.cost_history.push_back(nt.cost);
    reg = reg / opts.reg_factor;
    if (reg < opts.reg_init) reg = 0.0;
    if (rel < opts.tol_cost) {
      res.converged = true;
      break;
    }
  }
  BackwardPassResult fin = backward_pass(model, nt, costs, 0.0, opts);
  if (!opts.keep_final_feedforward)
    for (auto& k : fin.gains.k) k.setZero();
  res.policy = make_policy(nt, std::move(fin.gains));
  return res;
}

}  // namespace hpi
