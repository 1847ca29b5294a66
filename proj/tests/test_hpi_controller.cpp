#include "hpi/hilqr.hpp"
#include "hpi/hpi_controller.hpp"
#include "hpi/systems/bouncing_ball.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

using namespace hpi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec u1(double a) { return (Vec(1) << a).finished(); }

// Scalar integrator x' = u + sqrt(eps) dW with terminal cost q/2 (x - 1)^2.
struct Scalar {
  HybridModel model;
  CostSpec costs;
};

Scalar scalar_problem(double eps, double q = 4.0) {
  ModeSpec m;
  m.id = 1;
  m.state_dim = 1;
  m.control_dim = 1;
  m.drift = [](double, const Vec&) { return Vec(Vec::Zero(1)); };
  m.diffusion = [](double, const Vec&) { return Mat(Mat::Identity(1, 1)); };
  return {HybridModel("scalar", {m}, {}, eps), quadratic_terminal_cost(Vec::Ones(1), Mat::Constant(1, 1, q))};
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(PathWeights, EqualCostsAreUniform) {
  const std::vector<double> S(7, 3.25);
  const auto w = path_weights(S, 0.1);
  for (double a : w.alpha) EXPECT_DOUBLE_EQ(a, 1.0);
  EXPECT_DOUBLE_EQ(w.lambda, 1.0);
  EXPECT_NEAR(w.var_alpha, 0.0, 1e-15);
}

TEST(PathWeights, SingleFiniteSampleTakesEverything) {
  const std::vector<double> S = {kInf, 2.0, kInf, kInf};
  const auto w = path_weights(S, 1.0);
  EXPECT_EQ(w.alpha[1], 4.0);
  EXPECT_EQ(w.alpha[0], 0.0);
  EXPECT_DOUBLE_EQ(w.lambda, 0.25);
  EXPECT_EQ(w.non_finite, 3u);
}

TEST(PathWeights, HandExample) {
  const std::vector<double> S = {0.0, std::log(2.0)};
  const auto w = path_weights(S, 1.0);
  EXPECT_NEAR(w.alpha[0], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.alpha[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.lambda, 0.9, 1e-15);
}

TEST(PathWeights, AllNonFiniteIsDegenerate) {
  const std::vector<double> S = {kInf, std::nan("")};
  EXPECT_THROW(path_weights(S, 1.0), DegenerateEnsembleError);
  EXPECT_THROW(path_weights(std::vector<double>{}, 1.0), DegenerateEnsembleError);
}

TEST(PathWeights, NormalizationAndBoundsOnRandomEnsembles) {
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 50;
    std::vector<double> S(n);
    const Vec z = standard_normal(make_key(trial), std::min(n, kMaxDim));
    for (int k = 0; k < n; ++k) S[k] = 500.0 * std::abs(standard_normal(make_key(trial, k), 1)(0)) + z(k % z.size());
    const double eps = 0.005 * (1 + trial % 7);
    const auto w = path_weights(S, eps);
    EXPECT_NEAR(mean(w.alpha), 1.0, 1e-12);
    EXPECT_GE(w.lambda, 1.0 / n - 1e-12);
    EXPECT_LE(w.lambda, 1.0 + 1e-12);
    for (double a : w.alpha) EXPECT_TRUE(std::isfinite(a));
  }
}

TEST(ControlUpdate, UniformWeightsGiveScaledSampleMean) {
  const std::vector<double> S(3, 0.0);
  const auto w = path_weights(S, 4.0);
  const std::vector<Vec> dw = {u1(0.1), u1(-0.4), u1(0.6)};
  const auto cu = control_update(w, dw, 4.0, 0.01, u1(1.0));
  EXPECT_NEAR(cu.du(0), 2.0 * 0.1 / 0.01, 1e-12);
  EXPECT_NEAR(cu.u_star(0), 1.0 + cu.du(0), 1e-15);
}

TEST(ControlUpdate, SingleSurvivor) {
  const std::vector<double> S = {kInf, 1.0};
  const auto w = path_weights(S, 9.0);
  const std::vector<Vec> dw = {u1(5.0), u1(0.02)};
  const auto cu = control_update(w, dw, 9.0, 0.1, u1(0.0));
  EXPECT_NEAR(cu.du(0), 3.0 * 0.02 / 0.1, 1e-14);
}

TEST(ControlUpdate, HandExample) {
  const double eps = 2.0, dt = 0.05, a = 0.3;
  const std::vector<double> S = {0.0, eps * std::log(2.0)};
  const auto w = path_weights(S, eps);
  const std::vector<Vec> dw = {u1(a), u1(-a)};
  const auto cu = control_update(w, dw, eps, dt, u1(0.0));
  EXPECT_NEAR(cu.du(0), std::sqrt(eps) * a / (3.0 * dt), 1e-13);
}

TEST(ControlUpdate, LengthMismatchIsConfigurationError) {
  const auto w = path_weights(std::vector<double>{0.0, 1.0}, 1.0);
  EXPECT_THROW(control_update(w, std::vector<Vec>{u1(0.0)}, 1.0, 0.1, u1(0.0)), ConfigurationError);
}

TEST(SampleFutures, SingleNoiselessSampleIsTheProposalCost) {
  const auto pb = scalar_problem(1e-30);
  const TimeGrid grid{0.5, 50};
  auto pol = [](std::size_t, double, const HybridState& s, PolicyStats&) { return u1(0.8 - s.x(0)); };
  HpiOptions opts;
  opts.samples = 1;
  const HybridState s0{1, Vec::Zero(1), 0.0, 0};
  const auto b = sample_futures(pb.model, grid, 0, s0, pol, pb.costs, 7, opts);
  const auto det = rollout(pb.model, grid, s0, pol, ZeroNoise{}, pb.costs);
  EXPECT_NEAR(b.S[0], det.S_u, 1e-12);
}

TEST(SampleFutures, UncontrolledCostsAreStateCosts) {
  const auto pb = scalar_problem(0.3);
  const TimeGrid grid{0.5, 50};
  HpiOptions opts;
  opts.samples = 20;
  const HybridState s0{1, Vec::Zero(1), 0.0, 0};
  const auto b = sample_futures(pb.model, grid, 3, s0, ZeroPolicy(pb.model), pb.costs, 11, opts);
  for (std::size_t k = 0; k < 20; ++k) {
    const auto r = rollout(pb.model, grid, s0, ZeroPolicy(pb.model), KeyedNoise(sample_stream_key(11, 3, k)),
                           pb.costs, {}, 3);
    EXPECT_EQ(b.S[k], r.L_H);
    EXPECT_EQ(b.first_noise[k], r.steps.front().dw);
  }
}

TEST(SampleFutures, IdenticalAcrossThreadCounts) {
  const auto pb = systems::make_bouncing_ball({});
  auto pol = [](std::size_t, double, const HybridState& s, PolicyStats&) { return u1(-0.3 * s.x(1)); };
  HpiOptions a, b;
  a.samples = b.samples = 64;
  a.threads = 1;
  b.threads = 4;
  const auto x = sample_futures(pb.model, pb.grid, 10, pb.initial, pol, pb.costs, 5, a);
  const auto y = sample_futures(pb.model, pb.grid, 10, pb.initial, pol, pb.costs, 5, b);
  EXPECT_EQ(x.S, y.S);
  for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(x.first_noise[k], y.first_noise[k]);
}

TEST(SampleFutures, FailedRolloutsBecomeInfinite) {
  auto pb = scalar_problem(1.0);
  pb.costs.terminal = [](int, const Vec& x, double) { return x(0) > 0.0 ? kInf : 0.0; };
  HpiOptions opts;
  opts.samples = 200;
  const auto b = sample_futures(pb.model, TimeGrid{0.1, 10}, 0, {1, Vec::Zero(1), 0.0, 0}, ZeroPolicy(pb.model),
                                pb.costs, 3, opts);
  EXPECT_GT(b.failures, 50u);
  EXPECT_LT(b.failures, 150u);
  std::size_t inf = 0;
  for (double s : b.S) inf += std::isinf(s);
  EXPECT_EQ(inf, b.failures);
}

TEST(RunHpi, DegenerateEnsembleFallsBackToProposal) {
  auto pb = scalar_problem(1.0);
  pb.costs.terminal = [](int, const Vec&, double) { return kInf; };
  auto pol = [](std::size_t i, double, const HybridState&, PolicyStats&) { return u1(0.1 * static_cast<double>(i)); };
  HpiOptions opts;
  opts.samples = 8;
  const TimeGrid grid{0.1, 10};
  const auto r = run_hpi(pb.model, grid, {1, Vec::Zero(1), 0.0, 0}, pol, pb.costs, 1, 2, opts);
  EXPECT_EQ(r.fallbacks, grid.steps);
  for (std::size_t i = 0; i < grid.steps; ++i) {
    EXPECT_EQ(r.trajectory.steps[i].u(0), 0.1 * static_cast<double>(i));
    EXPECT_TRUE(r.diagnostics[i].fallback);
    EXPECT_TRUE(std::isnan(r.diagnostics[i].lambda));
  }
}

TEST(RunHpi, ConstantCostGivesUniformWeights) {
  const auto pb = scalar_problem(1.0);
  HpiOptions opts;
  opts.samples = 16;
  const auto r = run_hpi(pb.model, TimeGrid{0.1, 10}, {1, Vec::Zero(1), 0.0, 0}, ZeroPolicy(pb.model), CostSpec{}, 1,
                         2, opts);
  for (const auto& d : r.diagnostics) {
    EXPECT_EQ(d.lambda, 1.0);
    EXPECT_NEAR(d.var_alpha, 0.0, 1e-15);
  }
}

TEST(RunHpi, NoiselessRunFollowsOptimalLqrProposal) {
  const auto pb = scalar_problem(1e-30);
  const TimeGrid grid{0.5, 50};
  const HybridState s0{1, Vec::Zero(1), 0.0, 0};
  const auto ilqr = solve(pb.model, grid, s0, pb.costs);
  HpiOptions opts;
  opts.samples = 4;
  const auto h = run_hpi(pb.model, grid, s0, ilqr.policy, pb.costs, 3, 4, opts);
  for (std::size_t i = 0; i < grid.steps; ++i)
    EXPECT_NEAR(h.trajectory.steps[i].x(0), ilqr.policy.nominal().x[i](0), 1e-12);
  EXPECT_NEAR(h.realized_cost, ilqr.policy.nominal().cost, 1e-12);
}

TEST(RunHpi, ZeroProposalUpdateShrinksLikeInverseSquareRootOfSamples) {
  const auto pb = scalar_problem(1.0);
  const TimeGrid grid{0.1, 10};
  auto avg_du = [&](std::size_t n) {
    HpiOptions opts;
    opts.samples = n;
    double acc = 0.0;
    int cnt = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = run_hpi_zero_proposal(pb.model, grid, {1, Vec::Zero(1), 0.0, 0}, CostSpec{}, seed, 99, opts);
      for (const auto& d : r.diagnostics) {
        acc += d.du_norm;
        ++cnt;
      }
    }
    return acc / cnt;
  };
  const double ratio = avg_du(100) / avg_du(1600);
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.3);
}

TEST(ImportanceSampling, ZeroAndFeedbackProposalsEstimateTheSameControl) {
  const double eps = 1.0, dt = 0.01;
  const auto pb = scalar_problem(eps, 3.0);
  const TimeGrid grid{0.2, 20};
  const HybridState s0{1, Vec::Constant(1, 0.2), 0.0, 0};
  HpiOptions opts;
  opts.samples = 10000;
  auto estimate = [&](const auto& policy, std::uint64_t key) {
    PolicyStats ps;
    const Vec u0 = policy(0, 0.0, s0, ps);
    const auto b = sample_futures(pb.model, grid, 0, s0, policy, pb.costs, key, opts);
    const auto w = path_weights(b.S, eps);
    const auto cu = control_update(w, b.first_noise, eps, dt, u0);
    const double n = static_cast<double>(b.S.size());
    const double m = cu.du(0) * dt / std::sqrt(eps);
    double v = 0.0;
    for (std::size_t k = 0; k < b.S.size(); ++k) {
      const double d = b.first_noise[k](0) - m;
      v += w.alpha[k] * w.alpha[k] * d * d;
    }
    return std::pair{cu.u_star(0), std::sqrt(eps) / dt * std::sqrt(v) / n};
  };
  auto feedback = [](std::size_t, double, const HybridState& s, PolicyStats&) { return u1(2.0 * (1.0 - s.x(0))); };
  const auto [a, sa] = estimate(ZeroPolicy(pb.model), 21);
  const auto [b, sb] = estimate(feedback, 22);
  EXPECT_NEAR(a, b, 3.0 * std::sqrt(sa * sa + sb * sb));
  EXPECT_LT(sb, sa);
}
