#include "gridbroker/model.hpp"

#include "scenarios.hpp"

#include <gtest/gtest.h>

#include "json.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace gridbroker;
using gridbroker::testutil::bundled;

namespace {

std::string bundled_text() {
  std::ifstream in(testutil::data_file("std399_like.json"));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
std::string validation_message(Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Scenario, BundledLoads) {
  const ScenarioSpec s = bundled();
  EXPECT_EQ(s.horizon, 24);
  EXPECT_EQ(s.all_generators().size(), 6u);
  ASSERT_EQ(s.n_communities(), 4);
  const std::vector<int> buses{9, 29, 30, 50};
  for (int c = 0; c < 4; ++c) EXPECT_EQ(s.communities[std::size_t(c)].bus_id, buses[std::size_t(c)]);
  // Cost rows of the utility generator at bus 4 and the community at bus 50.
  const GeneratorSpec& g4 = s.utility_generators[1];
  EXPECT_EQ(g4.bus_id, 4);
  EXPECT_DOUBLE_EQ(g4.cost_alpha, 0.3);
  EXPECT_DOUBLE_EQ(g4.cost_beta, 50);
  EXPECT_DOUBLE_EQ(s.communities[3].generator.r_max, 8.8);
}

TEST(Scenario, PminAbovePmaxNamesGenerator) {
  auto doc = nlohmann::json::parse(bundled_text());
  doc["generators"][1]["p_min"] = 20;
  const std::string msg = validation_message([&] { parse_scenario(doc.dump()); });
  EXPECT_NE(msg.find("G4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("p_min"), std::string::npos) << msg;
}

TEST(Scenario, ProfileLengthChecked) {
  auto doc = nlohmann::json::parse(bundled_text());
  EXPECT_NO_THROW(parse_scenario(doc.dump()));
  doc["profiles"]["demand_scaling"].erase(23);
  EXPECT_THROW(parse_scenario(doc.dump()), ValidationError);

  auto doc2 = nlohmann::json::parse(bundled_text());
  doc2["profiles"]["community_load"]["uG2"].erase(0);
  const std::string msg = validation_message([&] { parse_scenario(doc2.dump()); });
  EXPECT_NE(msg.find("length"), std::string::npos) << msg;
}

TEST(Scenario, MalformedJsonIsParseError) {
  EXPECT_THROW(parse_scenario("{\"horizon\": "), ParseError);
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), ParseError);
}

TEST(Scenario, RoundTrip) {
  const ScenarioSpec s = bundled();
  const ScenarioSpec back = parse_scenario(dump_scenario(s));
  EXPECT_TRUE(back == s);
  EXPECT_EQ(dump_scenario(back), dump_scenario(s));
}

TEST(ScaledLoad, IdentityAndLinearScaling) {
  ScenarioSpec s = bundled();
  const int b4 = s.network.index_of(4);
  s.demand_scaling(3) = 1.0;
  EXPECT_DOUBLE_EQ(scaled_load(s, 3)(b4), s.bus_load_profile(3, b4));
  s.bus_load_profile(3, b4) = 10;
  s.demand_scaling(3) = 0.5;
  EXPECT_DOUBLE_EQ(scaled_load(s, 3)(b4), 5.0);
}

TEST(ScaledLoad, LinearInScalingProperty) {
  ScenarioSpec s = bundled();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = int(rng() % 24);
    const double k = u(rng);
    const Eigen::VectorXd base = scaled_load(s, t) / s.demand_scaling(t);
    s.demand_scaling(t) = k;
    EXPECT_TRUE(scaled_load(s, t).isApprox(k * base, 1e-12));
  }
}

TEST(ReserveRequirement, TenPercentOfTotalLoad) {
  const ScenarioSpec s = bundled();
  for (int t = 0; t < s.horizon; ++t) {
    double sum = 0;
    for (int b = 0; b < s.network.n_buses(); ++b) sum += s.bus_load_profile(t, b) * s.demand_scaling(t);
    for (const auto& c : s.communities) sum += c.load_profile(t);
    EXPECT_NEAR(total_load(s, t), sum, 1e-12);
    EXPECT_NEAR(reserve_requirement(s, t), 0.1 * sum, 1e-12);
  }
}

TEST(TotalCost, ZeroDispatchIsFixedCosts) {
  ScenarioSpec s = bundled();
  s.utility_generators[0].cost_gamma = 3;
  s.communities[2].generator.cost_gamma = 1.5;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(24, 6);
  EXPECT_DOUBLE_EQ(total_cost(s, zero), 4.5 * 24);
}

TEST(TotalCost, SingleGeneratorOneHour) {
  ScenarioSpec s = bundled();
  s.horizon = 1;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(1, 6);
  d(0, 1) = 10;  // G4
  const double zero_cost = total_cost(s, Eigen::MatrixXd::Zero(1, 6));
  EXPECT_DOUBLE_EQ(total_cost(s, d) - zero_cost, 515.0);
}

TEST(TotalCost, MatchesTermByTermSum) {
  const ScenarioSpec s = bundled();
  const auto gens = s.all_generators();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd d(24, 6);
    for (int t = 0; t < 24; ++t)
      for (int i = 0; i < 6; ++i) d(t, i) = gens[std::size_t(i)].p_max * u(rng);
    double oracle = 0;
    for (int i = 0; i < 6; ++i) {
      const auto& g = gens[std::size_t(i)];
      for (int t = 0; t < 24; ++t) oracle += 0.5 * g.cost_alpha * d(t, i) * d(t, i) + g.cost_beta * d(t, i) + g.cost_gamma;
    }
    EXPECT_NEAR(total_cost(s, d), oracle, 1e-9 * std::abs(oracle));
  }
}

TEST(TotalCost, ConvexAlongSegments) {
  const ScenarioSpec s = bundled();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd a(24, 6), b(24, 6);
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      a(k) = u(rng);
      b(k) = u(rng);
    }
    const double w = u(rng) / 10;
    const double mid = total_cost(s, w * a + (1 - w) * b);
    EXPECT_LE(mid, w * total_cost(s, a) + (1 - w) * total_cost(s, b) + 1e-9);
  }
}

TEST(RotateProfiles, WrapsAroundTheDay) {
  const ScenarioSpec s = bundled();
  const ScenarioSpec r = rotate_profiles(s, 20);
  EXPECT_DOUBLE_EQ(r.demand_scaling(0), s.demand_scaling(20));
  EXPECT_DOUBLE_EQ(r.demand_scaling(4), s.demand_scaling(0));
  EXPECT_DOUBLE_EQ(r.communities[0].load_profile(5), s.communities[0].load_profile(1));
  EXPECT_TRUE(rotate_profiles(s, 24) == s);
}
