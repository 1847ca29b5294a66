#pragma once

#include "hpi/numdiff.hpp"
#include "hpi/types.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace hpi {

/// Smooth flow of one mode: dX = F(t,X) dt + sigma(t,X) (u dt + sqrt(eps) dW).
struct ModeSpec {
  int id = 0;
  int state_dim = 0;
  int control_dim = 0;
  std::string name;
  std::function<Vec(double t, const Vec& x)> drift;
  std::function<Mat(double t, const Vec& x)> diffusion;
  /// Optional continuous-time Jacobians of the effective drift F + sigma u
  /// with respect to x and u. Central differences are used when absent.
  std::function<void(double t, const Vec& x, const Vec& u, Mat& dfdx, Mat& dfdu)> jacobian;
  /// Optional admissibility predicate (e.g. positive leg length). Rollouts
  /// that leave the domain fail with a DivergenceError.
  std::function<bool(const Vec& x)> in_domain;
};

struct GuardGradient {
  double dt = 0.0;
  RowVec dx;
};

struct ResetJacobian {
  Vec dt;
  Mat dx;
};

/// Transition j -> k: fires when guard(t, x) <= 0, maps x to reset(t, x, anchor).
///
/// `anchor` is a scalar carried alongside the state and held constant within a
/// mode (the SLIP toe position is the motivating case). Resets may read it and
/// `anchor_update` may replace it at the jump.
struct TransitionSpec {
  int from = 0;
  int to = 0;
  std::function<double(double t, const Vec& x)> guard;
  std::function<Vec(double t, const Vec& x, double anchor)> reset;
  std::function<double(double t, const Vec& x, double anchor)> anchor_update;
  std::function<GuardGradient(double t, const Vec& x)> guard_gradient;
  std::function<ResetJacobian(double t, const Vec& x, double anchor)> reset_jacobian;
};

struct HybridState {
  int mode = 0;
  Vec x;
  double anchor = 0.0;
  /// Number of transitions taken since the start of the trajectory.
  int epoch = 0;
};

/// A transition is singular when |d/dt g| along the flow falls below this.
inline constexpr double kTransversalityTol = 1e-10;

/// The hybrid system tuple: modes (ids 1..N, contiguous), transitions and noise intensity.
class HybridModel {
 public:
  HybridModel(std::string name, std::vector<ModeSpec> modes, std::vector<TransitionSpec> transitions,
              double noise_intensity)
      : name_(std::move(name)),
        modes_(std::move(modes)),
        transitions_(std::move(transitions)),
        eps_(noise_intensity) {
    validate();
    outgoing_.resize(modes_.size());
    for (std::size_t i = 0; i < transitions_.size(); ++i)
      outgoing_[static_cast<std::size_t>(transitions_[i].from - 1)].push_back(i);
  }

  const std::string& name() const noexcept { return name_; }
  double noise_intensity() const noexcept { return eps_; }
  std::size_t num_modes() const noexcept { return modes_.size(); }
  const std::vector<ModeSpec>& modes() const noexcept { return modes_; }
  const std::vector<TransitionSpec>& transitions() const noexcept { return transitions_; }

  const ModeSpec& mode(int id) const {
    if (id < 1 || id > static_cast<int>(modes_.size())) [[unlikely]]
      unknown_mode(id);
    return modes_[static_cast<std::size_t>(id - 1)];
  }

  [[noreturn]] static void unknown_mode(int id) {
    throw ConfigurationError("unknown mode id " + std::to_string(id));
  }

  const TransitionSpec& transition(int from, int to) const {
    for (const auto& tr : transitions_)
      if (tr.from == from && tr.to == to) return tr;
    throw ConfigurationError("no transition " + std::to_string(from) + "->" + std::to_string(to));
  }

  /// Indices into transitions() of every transition leaving `mode`.
  const std::vector<std::size_t>& outgoing(int mode) const {
    return outgoing_[static_cast<std::size_t>(this->mode(mode).id - 1)];
  }

  /// F(t,x) + sigma(t,x) u.
  Vec effective_drift(int mode_id, double t, const Vec& x, const Vec& u) const {
    const auto& m = mode(mode_id);
    return m.drift(t, x) + m.diffusion(t, x) * u;
  }

  /// Continuous-time Jacobians of F + sigma u (analytic if provided).
  void drift_jacobian(int mode_id, double t, const Vec& x, const Vec& u, Mat& dfdx, Mat& dfdu) const {
    const auto& m = mode(mode_id);
    if (m.jacobian) {
      m.jacobian(t, x, u, dfdx, dfdu);
      return;
    }
    dfdx = numdiff::jacobian([&](const Vec& y) { return effective_drift(mode_id, t, y, u); }, x);
    dfdu = m.diffusion(t, x);
  }

  void set_noise_intensity(double eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigurationError("noise intensity must be positive");
    eps_ = eps;
  }

 private:
  void validate() const {
    if (modes_.empty()) throw ConfigurationError("hybrid model needs at least one mode");
    if (!(eps_ > 0.0) || !std::isfinite(eps_)) throw ConfigurationError("noise intensity must be positive");
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      const auto& m = modes_[i];
      if (m.id != static_cast<int>(i) + 1)
        throw ConfigurationError("mode ids must be contiguous starting at 1");
      if (m.state_dim < 1 || m.control_dim < 1) throw ConfigurationError("mode dimensions must be >= 1");
      if (m.state_dim > kMaxDim || m.control_dim > kMaxDim)
        throw ConfigurationError("mode dimension exceeds kMaxDim");
      if (!m.drift || !m.diffusion) throw ConfigurationError("mode " + std::to_string(m.id) + " lacks a flow");
    }
    for (std::size_t i = 0; i < transitions_.size(); ++i) {
      const auto& tr = transitions_[i];
      const int n = static_cast<int>(modes_.size());
      if (tr.from < 1 || tr.from > n || tr.to < 1 || tr.to > n)
        throw ConfigurationError("transition references unknown mode");
      if (!tr.guard || !tr.reset) throw ConfigurationError("transition lacks guard or reset");
      for (std::size_t j = 0; j < i; ++j)
        if (transitions_[j].from == tr.from && transitions_[j].to == tr.to)
          throw ConfigurationError("duplicate transition " + std::to_string(tr.from) + "->" +
                                   std::to_string(tr.to));
    }
  }

  std::string name_;
  std::vector<ModeSpec> modes_;
  std::vector<TransitionSpec> transitions_;
  std::vector<std::vector<std::size_t>> outgoing_;
  double eps_;
};

inline double evaluate_guard(const HybridModel& model, int from, int to, double t, const Vec& x) {
  assert(x.size() == model.mode(from).state_dim);
  return model.transition(from, to).guard(t, x);
}

inline HybridState apply_reset(const HybridModel& model, int from, int to, double t, const Vec& x_minus,
                               double anchor = 0.0) {
  const auto& tr = model.transition(from, to);
  HybridState post;
  post.mode = to;
  post.anchor = tr.anchor_update ? tr.anchor_update(t, x_minus, anchor) : anchor;
  post.x = tr.reset(t, x_minus, post.anchor);
  if (post.x.size() != model.mode(to).state_dim)
    throw ConfigurationError("reset " + std::to_string(from) + "->" + std::to_string(to) +
                             " returned a vector of the wrong dimension");
  if (!post.x.allFinite()) throw NumericalError("reset produced a non-finite state");
  return post;
}

inline GuardGradient guard_gradient(const TransitionSpec& tr, double t, const Vec& x) {
  if (tr.guard_gradient) return tr.guard_gradient(t, x);
  GuardGradient gg;
  const double ht = 1e-6 * std::max(1.0, std::abs(t));
  gg.dt = (tr.guard(t + ht, x) - tr.guard(t - ht, x)) / (2.0 * ht);
  gg.dx = numdiff::gradient([&](const Vec& y) { return tr.guard(t, y); }, x).transpose();
  return gg;
}

inline ResetJacobian reset_jacobian(const TransitionSpec& tr, double t, const Vec& x, double anchor) {
  if (tr.reset_jacobian) return tr.reset_jacobian(t, x, anchor);
  ResetJacobian rj;
  const double ht = 1e-6 * std::max(1.0, std::abs(t));
  rj.dt = numdiff::derivative([&](double s) { return tr.reset(s, x, anchor); }, t, ht);
  rj.dx = numdiff::jacobian([&](const Vec& y) { return tr.reset(t, y, anchor); }, x);
  return rj;
}

/// First-order map from pre-jump perturbations to post-jump perturbations:
///   Xi = dR/dx + (F_k(x+) - dR/dx F_j(x-) - dR/dt) dg/dx / (dg/dt + dg/dx F_j(x-)).
/// The flows include the controls (F + sigma u) active on either side of the jump.
/// `anchor` is the value carried into the jump (before any anchor update).
inline Mat saltation_matrix(const HybridModel& model, int from, int to, double t, const Vec& x_minus,
                            const Vec& u_from, const Vec& u_to, double anchor = 0.0) {
  const auto& tr = model.transition(from, to);
  const double post_anchor = tr.anchor_update ? tr.anchor_update(t, x_minus, anchor) : anchor;
  const Vec x_plus = tr.reset(t, x_minus, post_anchor);
  const Vec f_from = model.effective_drift(from, t, x_minus, u_from);
  const Vec f_to = model.effective_drift(to, t, x_plus, u_to);

  const GuardGradient gg = guard_gradient(tr, t, x_minus);
  ResetJacobian rj;
  if (tr.anchor_update && !tr.reset_jacobian) {
    // The anchor depends on the pre-jump state, so differentiate the full composition.
    const double ht = 1e-6 * std::max(1.0, std::abs(t));
    auto full = [&](double s, const Vec& y) {
      return tr.reset(s, y, tr.anchor_update(s, y, anchor));
    };
    rj.dt = numdiff::derivative([&](double s) { return full(s, x_minus); }, t, ht);
    rj.dx = numdiff::jacobian([&](const Vec& y) { return full(t, y); }, x_minus);
  } else {
    rj = reset_jacobian(tr, t, x_minus, post_anchor);
  }

  const double denom = gg.dt + gg.dx.dot(f_from);
  if (std::abs(denom) < kTransversalityTol)
    throw GrazingContactError("guard " + std::to_string(from) + "->" + std::to_string(to) +
                              " is tangent to the flow");
  const Vec numer = f_to - rj.dx * f_from - rj.dt;
  Mat xi = rj.dx + numer * gg.dx / denom;
  return xi;
}

/// Transitions out of `mode` whose guard is <= 0 at (t, x), most negative first.
inline std::vector<std::pair<int, int>> active_transitions(const HybridModel& model, int mode, double t,
                                                           const Vec& x) {
  std::vector<std::pair<double, std::pair<int, int>>> hits;
  for (std::size_t idx : model.outgoing(mode)) {
    const auto& tr = model.transitions()[idx];
    const double g = tr.guard(t, x);
    if (g <= 0.0) hits.push_back({g, {tr.from, tr.to}});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<int, int>> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.second);
  return out;
}

}  // namespace hpi
