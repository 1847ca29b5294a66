#include "hpi/measure.hpp"
#include "hpi/systems/bouncing_ball.hpp"
#include "hpi/systems/slip.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace hpi;

namespace {

Vec u1(double a) { return (Vec(1) << a).finished(); }

// Double integrator [p, v], force input.
HybridModel double_integrator(double eps) {
  ModeSpec m;
  m.id = 1;
  m.state_dim = 2;
  m.control_dim = 1;
  m.drift = [](double, const Vec& x) { return Vec((Vec(2) << x(1), 0.0).finished()); };
  m.diffusion = [](double, const Vec&) { return Mat((Mat(2, 1) << 0.0, 1.0).finished()); };
  return HybridModel("double-integrator", {m}, {}, eps);
}

auto ball_policy() {
  return [](std::size_t i, double t, const HybridState& s, PolicyStats&) {
    return u1(2.0 * std::sin(3.0 * t) - 0.4 * s.x(0) + (s.mode == 1 ? 0.7 : -0.2) + 0.001 * static_cast<double>(i));
  };
}

}  // namespace

TEST(LogRatio, ZeroControlGivesZero) {
  const auto pb = systems::make_bouncing_ball({});
  const auto r = rollout(pb.model, pb.grid, pb.initial, ZeroPolicy(pb.model), KeyedNoise(make_key(1)), pb.costs);
  const auto lr = log_ratio_controlled(r, 10.0);
  EXPECT_EQ(lr.log_ratio_u_over_0, 0.0);
  EXPECT_EQ(lr.control_energy, 0.0);
  EXPECT_EQ(lr.stochastic_term, 0.0);
  StepControl zero = [](std::size_t, int, double, const Vec&) { return u1(0.0); };
  EXPECT_EQ(log_ratio_along_uncontrolled(r, zero, 10.0), 0.0);
}

TEST(LogRatio, ConstantControlWithoutNoise) {
  const double eps = 2.0, T = 1.0, u = 0.75;
  const auto model = double_integrator(eps);
  const TimeGrid grid{T, 100};
  HybridState s0{1, Vec::Zero(2), 0.0, 0};
  auto pol = [u](std::size_t, double, const HybridState&, PolicyStats&) { return u1(u); };
  const auto r = rollout(model, grid, s0, pol, ZeroNoise{}, CostSpec{});
  EXPECT_NEAR(log_ratio_controlled(r, eps).log_ratio_u_over_0, u * u * T / (2.0 * eps), 1e-14);
  StepControl c = [u](std::size_t, int, double, const Vec&) { return u1(u); };
  EXPECT_NEAR(log_ratio_along_uncontrolled(r, c, eps), -u * u * T / (2.0 * eps), 1e-14);
}

TEST(DiscreteDensity, EqualDriftsGiveZero) {
  const auto pb = systems::make_bouncing_ball({});
  const auto r = rollout(pb.model, pb.grid, pb.initial, ball_policy(), KeyedNoise(make_key(2)), pb.costs);
  EXPECT_EQ(discrete_density_ratio(pb.model, r, passive_drift(pb.model), passive_drift(pb.model), 10.0), 0.0);
}

TEST(DiscreteDensity, TwoStepLinearDriftsHandValue) {
  // sigma = I in 2-D: log q - log p = sum (|e_a|^2 - |e_b|^2) / (2 eps dt).
  ModeSpec m;
  m.id = 1;
  m.state_dim = 2;
  m.control_dim = 2;
  m.drift = [](double, const Vec& x) { return Vec(-x); };
  m.diffusion = [](double, const Vec&) { return Mat(Mat::Identity(2, 2)); };
  const double eps = 0.5, dt = 0.1;
  const HybridModel model("linear", {m}, {}, eps);
  RolloutResult r;
  const Vec x0 = (Vec(2) << 1.0, 2.0).finished();
  const Vec x1 = (Vec(2) << 0.8, 1.7).finished();
  const Vec x2 = (Vec(2) << 0.75, 1.5).finished();
  r.steps.push_back(StepRecord{0.0, dt, 1, 0.0, x0, Vec::Zero(2), Vec::Zero(2), x1, 0.0, false});
  r.steps.push_back(StepRecord{dt, dt, 1, 0.0, x1, Vec::Zero(2), Vec::Zero(2), x2, 0.0, false});
  StepDrift fa = [](std::size_t, int, double, const Vec& x) { return Vec(-x); };
  StepDrift fb = [](std::size_t, int, double, const Vec& x) { return Vec(-2.0 * x); };
  double hand = 0.0;
  const Vec xs[3] = {x0, x1, x2};
  for (int k = 0; k < 2; ++k) {
    const Vec ea = xs[k + 1] - xs[k] + xs[k] * dt;
    const Vec eb = xs[k + 1] - xs[k] + 2.0 * xs[k] * dt;
    hand += (ea.squaredNorm() - eb.squaredNorm()) / (2.0 * eps * dt);
  }
  const auto led = discrete_density_ledger(model, r, fa, fb, eps);
  EXPECT_NEAR(led.log_ratio(), hand, 1e-12);
  EXPECT_FALSE(led.degenerate);
  EXPECT_EQ(led.log_p.size(), 2u);
}

TEST(DiscreteDensity, BallPathWithJumpsMatchesContinuousRatio) {
  const auto pb = systems::make_bouncing_ball({});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = rollout(pb.model, pb.grid, pb.initial, ball_policy(), KeyedNoise(make_key(seed, 7)), pb.costs);
    ASSERT_FALSE(r.jumps.empty());
    const double cont = log_ratio_controlled(r, 10.0).log_ratio_u_over_0;
    const double disc =
        discrete_density_ratio(pb.model, r, passive_drift(pb.model), recorded_controlled_drift(pb.model, r), 10.0);
    EXPECT_LE(std::abs(cont - disc), 1e-10) << "seed " << seed;
  }
}

TEST(DiscreteDensity, SlipPathWithJumpMatchesContinuousRatio) {
  const auto pb = systems::make_slip({});
  auto pol = [&](std::size_t, double t, const HybridState& s, PolicyStats&) {
    Vec u = Vec::Constant(pb.model.mode(s.mode).control_dim, 0.3 * std::cos(10.0 * t));
    return u;
  };
  const double eps = pb.model.noise_intensity();
  const auto r = rollout(pb.model, pb.grid, pb.initial, pol, KeyedNoise(make_key(3, 7)), pb.costs);
  ASSERT_FALSE(r.jumps.empty());
  const double cont = log_ratio_controlled(r, eps).log_ratio_u_over_0;
  const double disc =
      discrete_density_ratio(pb.model, r, passive_drift(pb.model), recorded_controlled_drift(pb.model, r), eps);
  EXPECT_LE(std::abs(cont - disc), 1e-9 * std::max(1.0, std::abs(cont)));
}

TEST(DiscreteDensity, IdentityResetWithMatchingFlowsChangesNothing) {
  auto mode = [](int id) {
    ModeSpec m;
    m.id = id;
    m.state_dim = 2;
    m.control_dim = 1;
    m.drift = [](double, const Vec& x) { return Vec((Vec(2) << x(1), -1.0).finished()); };
    m.diffusion = [](double, const Vec&) { return Mat((Mat(2, 1) << 0.0, 1.0).finished()); };
    return m;
  };
  TransitionSpec tr;
  tr.from = 1;
  tr.to = 2;
  tr.guard = [](double, const Vec& x) { return 1.5 - x(0); };
  tr.reset = [](double, const Vec& x, double) { return x; };
  const double eps = 0.3;
  const HybridModel split("split", {mode(1), mode(2)}, {tr}, eps);
  const HybridModel smooth("smooth", {mode(1)}, {}, eps);
  auto pol = [](std::size_t, double t, const HybridState&, PolicyStats&) { return u1(3.0 + t); };
  const auto r = rollout(split, TimeGrid{2.0, 400}, HybridState{1, (Vec(2) << 0.5, 0.0).finished(), 0.0, 0}, pol,
                         KeyedNoise(make_key(8)), CostSpec{});
  ASSERT_EQ(r.jumps.size(), 1u);
  RolloutResult flat = r;
  flat.jumps.clear();
  for (auto& s : flat.steps) s.mode = 1;
  auto both = [&](const HybridModel& m, const RolloutResult& rr) {
    return std::pair{log_ratio_controlled(rr, eps).log_ratio_u_over_0,
                     discrete_density_ratio(m, rr, passive_drift(m), recorded_controlled_drift(m, rr), eps)};
  };
  const auto [c1, d1] = both(split, r);
  const auto [c2, d2] = both(smooth, flat);
  EXPECT_LE(std::abs(c1 - c2), 1e-12);
  EXPECT_LE(std::abs(d1 - d2), 1e-12);
}

TEST(DiscreteDensity, RefinementConvergesAtFirstOrder) {
  // u(t) = cos 2t on the double integrator; one Brownian path per trial on a
  // fine grid, coarsened by summing increments.
  const double eps = 1.0, T = 1.0;
  const std::size_t fine = 4096;
  const auto model = double_integrator(eps);
  auto pol = [](std::size_t, double t, const HybridState&, PolicyStats&) { return u1(std::cos(2.0 * t)); };
  auto ratio_at = [&](const std::vector<double>& dw_fine, std::size_t n) {
    const std::size_t agg = fine / n;
    std::vector<Vec> inc(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < agg; ++j) s += dw_fine[i * agg + j];
      inc[i] = u1(s);
    }
    const auto r = rollout(model, TimeGrid{T, n}, HybridState{1, Vec::Zero(2), 0.0, 0}, pol,
                           TabulatedNoise(std::move(inc)), CostSpec{});
    return discrete_density_ratio(model, r, passive_drift(model), recorded_controlled_drift(model, r), eps);
  };
  const std::size_t levels[4] = {16, 32, 64, 128};
  double mse[4] = {0, 0, 0, 0};
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    std::vector<double> dw(fine);
    const KeyedNoise noise(make_key(31, k));
    for (std::size_t i = 0; i < fine; ++i) dw[i] = noise.increment(i, 1, T / fine)(0);
    const double ref = ratio_at(dw, fine);
    for (int l = 0; l < 4; ++l) {
      const double e = ratio_at(dw, levels[l]) - ref;
      mse[l] += e * e / trials;
    }
  }
  for (int l = 0; l < 3; ++l) {
    const double rate = std::sqrt(mse[l] / mse[l + 1]);
    EXPECT_GT(rate, 1.6) << "level " << levels[l];
    EXPECT_LT(rate, 2.5) << "level " << levels[l];
  }
}

TEST(Martingale, DensityRatioHasUnitMeanOverUncontrolledPaths) {
  systems::BouncingBallParams p;
  p.horizon = 0.5;
  const auto pb = systems::make_bouncing_ball(p);
  auto pol = ball_policy();
  const int n = 10000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto r = rollout(pb.model, pb.grid, pb.initial, ZeroPolicy(pb.model), KeyedNoise(make_key(12, k)), pb.costs);
    StepControl c = [&](std::size_t i, int mode, double t, const Vec& x) {
      PolicyStats ps;
      return pol(i, t, HybridState{mode, x, 0.0, 0}, ps);
    };
    const double w = std::exp(log_ratio_along_uncontrolled(r, c, pb.model.noise_intensity()));
    s += w;
    s2 += w * w;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / (n - 1));
  EXPECT_NEAR(mean, 1.0, 5.0 * se);
}

TEST(Costs, StateAndPathCost) {
  const auto pb = systems::make_bouncing_ball({});
  HybridState at_goal{1, pb.costs.goal, 0.0, 0};
  EXPECT_EQ(pb.costs.terminal_cost(at_goal), 0.0);
  EXPECT_NEAR(pb.costs.terminal_cost(HybridState{1, (Vec(2) << 2.6, 0.1).finished(), 0.0, 0}), 1.1, 1e-12);

  const auto r = rollout(pb.model, pb.grid, pb.initial, ZeroPolicy(pb.model), KeyedNoise(make_key(4)), pb.costs);
  EXPECT_EQ(path_cost_S(r, 10.0), state_cost_L(r));
  EXPECT_EQ(state_cost_L(r), r.L_H);

  const auto rc = rollout(pb.model, pb.grid, pb.initial, ball_policy(), KeyedNoise(make_key(4)), pb.costs);
  EXPECT_NEAR(path_cost_S(rc, 10.0), rc.S_u, 1e-9);
}

TEST(KlEstimate, NeedsOneHundredPaths) {
  std::vector<PathLogRatio> few(99);
  EXPECT_THROW(kl_estimate(few), StatisticsError);
  std::vector<PathLogRatio> zeros(100);
  const auto k = kl_estimate(zeros);
  EXPECT_EQ(k.kl, 0.0);
  EXPECT_EQ(k.std_error, 0.0);
}

TEST(KlEstimate, ConstantControlMatchesClosedFormEnergy) {
  const double eps = 0.5, T = 1.0, u = 1.2;
  const auto model = double_integrator(eps);
  auto pol = [u](std::size_t, double, const HybridState&, PolicyStats&) { return u1(u); };
  std::vector<PathLogRatio> paths;
  for (int k = 0; k < 2000; ++k) {
    const auto r = rollout_summary(model, TimeGrid{T, 50}, HybridState{1, Vec::Zero(2), 0.0, 0}, pol,
                                   KeyedNoise(make_key(5, k)), CostSpec{});
    paths.push_back(log_ratio_controlled(r, eps));
  }
  const auto k = kl_estimate(paths);
  EXPECT_NEAR(k.kl, u * u * T / (2.0 * eps), 3.0 * k.std_error);
  EXPECT_GT(k.std_error, 0.0);
}
