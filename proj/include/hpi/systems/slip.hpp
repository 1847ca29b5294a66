#pragma once

#include "hpi/systems/problem.hpp"

#include <cmath>
#include <numbers>

namespace hpi::systems {

struct SlipParams {
  double mass = 1.0;
  double stiffness = 100.0;
  double rest_length = 1.0;
  double gravity = 9.81;
  double eps = 0.005;
  double dt = 0.0008;
  double horizon = 0.8;
  /// Stance start [theta, theta_dot, r, r_dot]; r is given as a fraction of the rest length.
  Vec start = (Vec(4) << 1.74533, -4.0, 0.5, 0.0).finished();
  double toe = 0.0;
  Vec goal = (Vec(5) << 1.1, 2.5, 1.5, 0.0, std::numbers::pi / 3.0).finished();
  double terminal_weight = 60.0;
};

namespace slip {
inline constexpr int kFlight = 1;  // [p_x, v_x, p_z, v_z, theta]
inline constexpr int kStance = 2;  // [theta, theta_dot, r, r_dot]

/// Body position is toe + r (cos theta, sin theta); theta is the leg angle
/// from the ground.
inline Vec stance_to_flight(const Vec& s, double toe) {
  const double th = s(0), thd = s(1), r = s(2), rd = s(3);
  const double c = std::cos(th), sn = std::sin(th);
  return (Vec(5) << toe + r * c, rd * c - r * thd * sn, r * sn, r * thd * c + rd * sn, th).finished();
}
}  // namespace slip

inline HybridModel make_slip_model(const SlipParams& p) {
  if (!(p.mass > 0.0 && p.stiffness > 0.0 && p.rest_length > 0.0 && p.gravity > 0.0))
    throw ConfigurationError("SLIP parameters must be positive");
  const double m = p.mass, k = p.stiffness, r0 = p.rest_length, g = p.gravity;

  ModeSpec flight;
  flight.id = slip::kFlight;
  flight.state_dim = 5;
  flight.control_dim = 3;
  flight.name = "flight";
  flight.drift = [g](double, const Vec& x) -> Vec { return (Vec(5) << x(1), 0.0, x(3), -g, 0.0).finished(); };
  flight.diffusion = [](double, const Vec&) -> Mat {
    Mat s = Mat::Zero(5, 3);
    s(1, 0) = 1.0;
    s(3, 1) = 1.0;
    s(4, 2) = 1.0;
    return s;
  };
  flight.jacobian = [](double, const Vec&, const Vec&, Mat& dfdx, Mat& dfdu) {
    dfdx = Mat::Zero(5, 5);
    dfdx(0, 1) = 1.0;
    dfdx(2, 3) = 1.0;
    dfdu = Mat::Zero(5, 3);
    dfdu(1, 0) = 1.0;
    dfdu(3, 1) = 1.0;
    dfdu(4, 2) = 1.0;
  };

  ModeSpec stance;
  stance.id = slip::kStance;
  stance.state_dim = 4;
  stance.control_dim = 2;
  stance.name = "stance";
  stance.drift = [m, k, r0, g](double, const Vec& x) -> Vec {
    const double th = x(0), thd = x(1), r = x(2), rd = x(3);
    return (Vec(4) << thd, (-2.0 * thd * rd - g * std::cos(th)) / r, rd,
            k * (r0 - r) / m - g * std::sin(th) + thd * thd * r)
        .finished();
  };
  stance.diffusion = [m, k](double, const Vec& x) -> Mat {
    Mat s = Mat::Zero(4, 2);
    s(2, 0) = m / (x(2) * x(2));
    s(3, 1) = k / m;
    return s;
  };
  stance.jacobian = [m, k, g](double, const Vec& x, const Vec& u, Mat& dfdx, Mat& dfdu) {
    const double th = x(0), thd = x(1), r = x(2), rd = x(3);
    const double c = std::cos(th), sn = std::sin(th);
    dfdx = Mat::Zero(4, 4);
    dfdx(0, 1) = 1.0;
    dfdx(1, 0) = g * sn / r;
    dfdx(1, 1) = -2.0 * rd / r;
    dfdx(1, 2) = (2.0 * thd * rd + g * c) / (r * r);
    dfdx(1, 3) = -2.0 * thd / r;
    dfdx(2, 3) = 1.0;
    dfdx(2, 2) = -2.0 * m * u(0) / (r * r * r);
    dfdx(3, 0) = -g * c;
    dfdx(3, 1) = 2.0 * thd * r;
    dfdx(3, 2) = -k / m + thd * thd;
    dfdu = Mat::Zero(4, 2);
    dfdu(2, 0) = m / (r * r);
    dfdu(3, 1) = k / m;
  };
  stance.in_domain = [](const Vec& x) { return x(2) > 0.0; };

  TransitionSpec touchdown;
  touchdown.from = slip::kFlight;
  touchdown.to = slip::kStance;
  touchdown.guard = [r0](double, const Vec& x) { return x(2) - r0 * std::sin(x(4)); };
  touchdown.anchor_update = [r0](double, const Vec& x, double) { return x(0) - r0 * std::cos(x(4)); };
  touchdown.reset = [r0](double, const Vec& x, double toe) -> Vec {
    const double th = x(4), c = std::cos(th), sn = std::sin(th);
    const double rel_x = x(0) - toe;
    return (Vec(4) << th, (rel_x * x(3) - x(2) * x(1)) / (r0 * r0), r0, c * x(1) + sn * x(3)).finished();
  };
  touchdown.guard_gradient = [r0](double, const Vec& x) {
    return GuardGradient{0.0, (RowVec(5) << 0.0, 0.0, 1.0, 0.0, -r0 * std::cos(x(4))).finished()};
  };

  TransitionSpec liftoff;
  liftoff.from = slip::kStance;
  liftoff.to = slip::kFlight;
  liftoff.guard = [r0](double, const Vec& x) { return r0 - x(2); };
  liftoff.reset = [r0](double, const Vec& x, double toe) -> Vec {
    const double th = x(0), thd = x(1), r = x(2), rd = x(3);
    const double c = std::cos(th), sn = std::sin(th);
    return (Vec(5) << toe + r0 * c, rd * c - r * thd * sn, r0 * sn, r0 * thd * c + rd * sn, th).finished();
  };
  liftoff.guard_gradient = [](double, const Vec&) {
    return GuardGradient{0.0, (RowVec(4) << 0.0, 0.0, -1.0, 0.0).finished()};
  };

  return HybridModel("slip-jump", {flight, stance}, {touchdown, liftoff}, p.eps);
}

/// Terminal cost 1/2 |X - goal|^2_Q in flight coordinates; a stance terminal
/// state is first mapped to flight coordinates about the current toe.
inline CostSpec make_slip_costs(const SlipParams& p) {
  CostSpec c;
  c.goal = p.goal;
  c.terminal_weight = p.terminal_weight * Mat::Identity(5, 5);
  const Vec goal = p.goal;
  const double w = p.terminal_weight;
  c.terminal = [goal, w](int mode, const Vec& x, double toe) {
    const Vec f = mode == slip::kFlight ? x : slip::stance_to_flight(x, toe);
    return 0.5 * w * (f - goal).squaredNorm();
  };
  c.terminal_gradient = [goal, w](int mode, const Vec& x, double toe) -> Vec {
    if (mode == slip::kFlight) return w * (x - goal);
    return numdiff::gradient([&](const Vec& y) { return 0.5 * w * (slip::stance_to_flight(y, toe) - goal).squaredNorm(); },
                             x);
  };
  c.terminal_hessian = [goal, w](int mode, const Vec& x, double toe) -> Mat {
    if (mode == slip::kFlight) return w * Mat::Identity(5, 5);
    return numdiff::hessian(
        [&](const Vec& y) { return 0.5 * w * (slip::stance_to_flight(y, toe) - goal).squaredNorm(); }, x);
  };
  return c;
}

inline Problem make_slip(const SlipParams& p = {}) {
  Vec x0 = p.start;
  x0(2) *= p.rest_length;
  return Problem{make_slip_model(p), make_slip_costs(p), HybridState{slip::kStance, x0, p.toe},
                 TimeGrid::from_step(p.dt, p.horizon)};
}

}  // namespace hpi::systems
