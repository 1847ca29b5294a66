#include "hpi/policy_io.hpp"
#include "hpi/systems/registry.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace hpi;

namespace {

void expect_same_policy(const ProposalPolicy& a, const ProposalPolicy& b) {
  const auto& na = a.nominal();
  const auto& nb = b.nominal();
  ASSERT_EQ(na.x.size(), nb.x.size());
  for (std::size_t i = 0; i < na.x.size(); ++i) {
    EXPECT_EQ(na.x[i], nb.x[i]);
    EXPECT_EQ(na.modes[i], nb.modes[i]);
    EXPECT_EQ(na.epochs[i], nb.epochs[i]);
  }
  for (std::size_t i = 0; i < na.u.size(); ++i) {
    EXPECT_EQ(na.u[i], nb.u[i]);
    EXPECT_EQ(a.gains().K[i], b.gains().K[i]);
  }
  ASSERT_EQ(a.extensions().size(), b.extensions().size());
  for (std::size_t e = 0; e < a.extensions().size(); ++e) {
    EXPECT_EQ(a.extensions()[e].fwd_x, b.extensions()[e].fwd_x);
    EXPECT_EQ(a.extensions()[e].bwd_x, b.extensions()[e].bwd_x);
    EXPECT_EQ(a.extensions()[e].bwd_K, b.extensions()[e].bwd_K);
  }
  EXPECT_EQ(na.cost, nb.cost);
}

}  // namespace

class PolicyRoundTrip : public ::testing::TestWithParam<std::string> {};

TEST_P(PolicyRoundTrip, FileRoundTripIsExact) {
  const auto pb = systems::make_problem(systems::resolve_system(GetParam()));
  const auto r = solve(pb.model, pb.grid, pb.initial, pb.costs);
  const auto path = std::filesystem::temp_directory_path() / ("hpi_policy_" + GetParam() + ".json");
  save_policy(r.policy, path.string());
  const auto back = load_policy(pb.model, path.string());
  expect_same_policy(r.policy, back);
  // Identical closed-loop behaviour.
  const auto a = rollout(pb.model, pb.grid, pb.initial, r.policy, KeyedNoise(make_key(3)), pb.costs);
  const auto b = rollout(pb.model, pb.grid, pb.initial, back, KeyedNoise(make_key(3)), pb.costs);
  EXPECT_EQ(a.S_u, b.S_u);
  std::filesystem::remove(path);
}

INSTANTIATE_TEST_SUITE_P(Systems, PolicyRoundTrip, ::testing::Values("bouncing-ball", "slip-jump"),
                         [](const auto& info) { return info.param == "bouncing-ball" ? "Ball" : "Slip"; });

TEST(PolicyIo, RejectsPolicyForAnotherSystem) {
  const auto ball = systems::make_problem(systems::resolve_system("bouncing-ball"));
  const auto slip = systems::make_problem(systems::resolve_system("slip-jump"));
  const auto r = solve(ball.model, ball.grid, ball.initial, ball.costs);
  const auto j = policy_to_json(r.policy);
  EXPECT_THROW(policy_from_json(slip.model, j), IoError);
  auto bad = j;
  bad["schema_version"] = 99;
  EXPECT_THROW(policy_from_json(ball.model, bad), IoError);
  bad = j;
  bad["nominal"].erase("x");
  EXPECT_THROW(policy_from_json(ball.model, bad), IoError);
  bad = j;
  bad["gains"]["k"].erase(0);
  EXPECT_THROW(policy_from_json(ball.model, bad), IoError);
}

TEST(PolicyIo, MissingOrGarbledFileIsIoError) {
  const auto ball = systems::make_problem(systems::resolve_system("bouncing-ball"));
  EXPECT_THROW(load_policy(ball.model, "/nonexistent/policy.json"), IoError);
  const auto path = std::filesystem::temp_directory_path() / "hpi_garbled_policy.json";
  {
    std::ofstream f(path);
    f << "{ not json";
  }
  EXPECT_THROW(load_policy(ball.model, path.string()), IoError);
  std::filesystem::remove(path);
}
