#pragma once

#include "hpi/systems/problem.hpp"

namespace hpi::systems {

struct BouncingBallParams {
  double mass = 1.0;
  double gravity = 9.81;
  double restitution = 0.9;
  double eps = 10.0;
  double dt = 0.0025;
  double horizon = 1.5;
  Vec start = (Vec(2) << 5.0, 1.5).finished();
  Vec goal = (Vec(2) << 2.5, 0.0).finished();
  Mat terminal_weight = (Mat(2, 2) << 200.0, 0.0, 0.0, 20.0).finished();
};

namespace ball {
inline constexpr int kFalling = 1;  // zdot < 0
inline constexpr int kRising = 2;   // zdot >= 0
}  // namespace ball

/// 1-D vertical ball, state [z, zdot], force control u. Impact (falling ->
/// rising) when z <= 0 with zdot+ = -e2 zdot-; apex (rising -> falling) when
/// zdot <= 0 with an identity reset.
inline HybridModel make_bouncing_ball_model(const BouncingBallParams& p) {
  if (!(p.mass > 0.0)) throw ConfigurationError("ball mass must be positive");
  if (!(p.restitution > 0.0 && p.restitution <= 1.0)) throw ConfigurationError("restitution must lie in (0, 1]");
  const double m = p.mass, g = p.gravity, e2 = p.restitution;

  auto make_mode = [&](int id, const char* name) {
    ModeSpec s;
    s.id = id;
    s.state_dim = 2;
    s.control_dim = 1;
    s.name = name;
    s.drift = [g](double, const Vec& x) -> Vec { return (Vec(2) << x(1), -g).finished(); };
    s.diffusion = [m](double, const Vec&) -> Mat { return (Mat(2, 1) << 0.0, 1.0 / m).finished(); };
    s.jacobian = [m](double, const Vec&, const Vec&, Mat& dfdx, Mat& dfdu) {
      dfdx = (Mat(2, 2) << 0.0, 1.0, 0.0, 0.0).finished();
      dfdu = (Mat(2, 1) << 0.0, 1.0 / m).finished();
    };
    return s;
  };

  TransitionSpec impact;
  impact.from = ball::kFalling;
  impact.to = ball::kRising;
  impact.guard = [](double, const Vec& x) { return x(0); };
  impact.reset = [e2](double, const Vec& x, double) -> Vec { return (Vec(2) << x(0), -e2 * x(1)).finished(); };
  impact.guard_gradient = [](double, const Vec&) { return GuardGradient{0.0, (RowVec(2) << 1.0, 0.0).finished()}; };
  impact.reset_jacobian = [e2](double, const Vec&, double) {
    return ResetJacobian{Vec::Zero(2), (Mat(2, 2) << 1.0, 0.0, 0.0, -e2).finished()};
  };

  TransitionSpec apex;
  apex.from = ball::kRising;
  apex.to = ball::kFalling;
  apex.guard = [](double, const Vec& x) { return x(1); };
  apex.reset = [](double, const Vec& x, double) -> Vec { return x; };
  apex.guard_gradient = [](double, const Vec&) { return GuardGradient{0.0, (RowVec(2) << 0.0, 1.0).finished()}; };
  apex.reset_jacobian = [](double, const Vec&, double) { return ResetJacobian{Vec::Zero(2), Mat::Identity(2, 2)}; };

  return HybridModel("bouncing-ball", {make_mode(ball::kFalling, "falling"), make_mode(ball::kRising, "rising")},
                     {impact, apex}, p.eps);
}

inline Problem make_bouncing_ball(const BouncingBallParams& p = {}) {
  HybridModel model = make_bouncing_ball_model(p);
  CostSpec costs = quadratic_terminal_cost(p.goal, p.terminal_weight);
  const int mode = p.start(1) >= 0.0 ? ball::kRising : ball::kFalling;
  return Problem{std::move(model), std::move(costs), HybridState{mode, p.start, 0.0},
                 TimeGrid::from_step(p.dt, p.horizon)};
}

}  // namespace hpi::systems
