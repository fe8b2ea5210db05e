#include "gridbroker/coordinator.hpp"
#include "gridbroker/duopoly.hpp"

#include "scenarios.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gridbroker;
using namespace gridbroker::duopoly;

namespace {

const DuopolyModel<> table_slopes{0.3, 0.2, 10, 0};

DuopolyModel<> random_model(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> slope(0.01, 5), power(-50, 50);
  return {slope(rng), slope(rng), power(rng), power(rng)};
}

Classification subgradient_at(const DuopolyModel<>& m, double alpha) {
  return classify(iterate_subgradient(m, alpha, 0.0, 200));
}

Classification lubs_at(const DuopolyModel<>& m, double sigma) { return classify(iterate_lubs(m, sigma, 0.0, 200)); }

}  // namespace

TEST(Critical, TableSlopes) {
  EXPECT_NEAR(alpha_critical(table_slopes), 0.24, 1e-12);
  EXPECT_NEAR(sigma_critical(table_slopes), 1.2, 1e-12);
}

TEST(Critical, SymmetricSlopes) {
  for (double a : {0.05, 0.3, 2.0}) {
    const DuopolyModel<> m{a, a, 1, 0};
    EXPECT_NEAR(alpha_critical(m), a, 1e-15);
    EXPECT_NEAR(sigma_critical(m), 1.0, 1e-15);
  }
}

TEST(Critical, InvalidSlopesRejected) {
  EXPECT_THROW(alpha_critical(DuopolyModel<>{0, 0.2, 0, 0}), std::invalid_argument);
  EXPECT_THROW(sigma_critical(DuopolyModel<>{0.3, -1, 0, 0}), std::invalid_argument);
}

TEST(Critical, FloatInstantiation) {
  const DuopolyModel<float> m{0.3f, 0.2f, 10, 0};
  EXPECT_NEAR(alpha_critical(m), 0.24f, 1e-6f);
}

TEST(Classify, SubgradientAroundCriticalStep) {
  const double cr = alpha_critical(table_slopes);
  EXPECT_EQ(subgradient_at(table_slopes, 0.99 * cr), Classification::converging);
  EXPECT_EQ(subgradient_at(table_slopes, cr), Classification::cycling);
  EXPECT_EQ(subgradient_at(table_slopes, 1.01 * cr), Classification::diverging);
  EXPECT_EQ(subgradient_at(table_slopes, 0.5 * cr), Classification::converging);
  EXPECT_EQ(subgradient_at(table_slopes, 2 * cr), Classification::diverging);
}

TEST(Classify, LubsAroundCriticalDamping) {
  // Community flatter than the utility: undamped runs converge at ratio a2/a1.
  EXPECT_EQ(lubs_at(table_slopes, 1.0), Classification::converging);
  const DuopolyModel<> steep{0.2, 0.3, 10, 0};
  EXPECT_EQ(lubs_at(steep, 1.0), Classification::diverging);
  const double cr = sigma_critical(steep);
  EXPECT_EQ(lubs_at(steep, 0.99 * cr), Classification::converging);
  EXPECT_EQ(lubs_at(steep, cr), Classification::cycling);
  EXPECT_EQ(lubs_at(steep, 1.01 * cr), Classification::diverging);
  const DuopolyModel<> equal{0.25, 0.25, 10, 0};
  EXPECT_EQ(lubs_at(equal, 1.0), Classification::cycling);
  EXPECT_EQ(lubs_at(equal, 0.9), Classification::converging);
}

TEST(Classify, BoundaryExactWithinRelativeBand) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const DuopolyModel<> m = random_model(rng);
    const double a = alpha_critical(m);
    EXPECT_EQ(subgradient_at(m, a * (1 - 1e-6)), Classification::converging) << trial;
    EXPECT_EQ(subgradient_at(m, a), Classification::cycling) << trial;
    EXPECT_EQ(subgradient_at(m, a * (1 + 1e-6)), Classification::diverging) << trial;
    const double s = sigma_critical(m);
    EXPECT_EQ(lubs_at(m, s * (1 - 1e-6)), Classification::converging) << trial;
    EXPECT_EQ(lubs_at(m, s), Classification::cycling) << trial;
    EXPECT_EQ(lubs_at(m, s * (1 + 1e-6)), Classification::diverging) << trial;
  }
}

TEST(Classify, EdgeCases) {
  Trajectory<double> flat = Trajectory<double>::Constant(10, 3.0);
  EXPECT_EQ(classify(flat), Classification::converging);
  Trajectory<double> blowup = Trajectory<double>::Zero(10);
  blowup(9) = std::numeric_limits<double>::infinity();
  EXPECT_EQ(classify(blowup), Classification::diverging);
  EXPECT_THROW(classify(Trajectory<double>::Zero(5)), std::invalid_argument);
  Trajectory<double> jagged(8);
  jagged << 0, 1, 1.5, 3, 3.2, 6, 6.1, 9;
  EXPECT_THROW(classify(jagged), AmbiguousTrajectory);
}

TEST(FixedPoint, SymmetricCase) {
  const auto fp = fixed_point(DuopolyModel<>{1, 1, 10, 0});
  EXPECT_DOUBLE_EQ(fp.lambda, 5);
  EXPECT_DOUBLE_EQ(fp.power, 5);
  EXPECT_DOUBLE_EQ(fixed_point(DuopolyModel<>{0.4, 2, 7, 7}).lambda, 0);
}

TEST(FixedPoint, SubstitutionBalancesPowers) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const DuopolyModel<> m = random_model(rng);
    const auto fp = fixed_point(m);
    EXPECT_LT(std::abs(m.p_imp(fp.lambda) - m.p_exp(fp.lambda)), 1e-10);
    EXPECT_NEAR(m.p_imp(fp.lambda), fp.power, 1e-10);
  }
}

TEST(FixedPoint, ExchangeSymmetry) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const DuopolyModel<> m = random_model(rng);
    const DuopolyModel<> swapped{m.a2, m.a1, -m.p_exp0, -m.p_imp0};
    const auto a = fixed_point(m), b = fixed_point(swapped);
    EXPECT_NEAR(a.lambda, b.lambda, 1e-10 * (1 + std::abs(a.lambda)));
    EXPECT_NEAR(a.power, -b.power, 1e-10 * (1 + std::abs(a.power)));
  }
}

TEST(FixedPoint, TrajectoryStaysPut) {
  const auto fp = fixed_point(table_slopes);
  const auto t = iterate_subgradient(table_slopes, 0.1, fp.lambda, 20);
  EXPECT_LE((t.array() - fp.lambda).abs().maxCoeff(), 1e-12);
  const auto l = iterate_lubs(table_slopes, 0.7, fp.lambda, 20);
  EXPECT_LE((l.array() - fp.lambda).abs().maxCoeff(), 1e-12);
}

TEST(Iterate, LengthAndStart) {
  const auto t = iterate_subgradient(table_slopes, 0.1, 3.0, 5);
  ASSERT_EQ(t.size(), 6);
  EXPECT_EQ(t(0), 3.0);
  EXPECT_THROW(iterate_subgradient(table_slopes, 0.1, 0.0, 0), std::invalid_argument);
}

TEST(Iterate, SubgradientRatioIdentity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(0.05, 1.9);
  for (int trial = 0; trial < 200; ++trial) {
    const DuopolyModel<> m = random_model(rng);
    const double alpha = frac(rng) * alpha_critical(m);
    const double lstar = fixed_point(m).lambda;
    const auto t = iterate_subgradient(m, alpha, lstar + 1.0, 6);
    const double expected = subgradient_ratio(m, alpha);
    EXPECT_NEAR(expected, 1 - alpha * (1 / m.a1 + 1 / m.a2), 1e-15);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR((t(k + 1) - lstar) / (t(k) - lstar), expected, 1e-10) << trial;
  }
}

TEST(Iterate, GeometricDecayBelowCritical) {
  const double alpha = 0.5 * alpha_critical(table_slopes);
  const double r = std::abs(subgradient_ratio(table_slopes, alpha));
  const double lstar = fixed_point(table_slopes).lambda;
  const auto t = iterate_subgradient(table_slopes, alpha, 0.0, 30);
  for (int k = 0; k < 30; ++k) EXPECT_NEAR(std::abs(t(k + 1) - lstar), r * std::abs(t(k) - lstar), 1e-12);
}

TEST(Iterate, CriticalStepAlternatesExactly) {
  const auto t = iterate_subgradient(table_slopes, alpha_critical(table_slopes), 0.0, 40);
  for (int k = 0; k + 2 <= 40; ++k) EXPECT_NEAR(t(k + 2), t(k), 1e-9);
  EXPECT_GT(std::abs(t(1) - t(0)), 1.0);
}

TEST(Iterate, UndampedLubsRatio) {
  const DuopolyModel<> m{0.5, 0.2, 4, 1};
  EXPECT_NEAR(lubs_ratio(m, 1.0), -m.a2 / m.a1, 1e-15);
  const double lstar = fixed_point(m).lambda;
  const auto t = iterate_lubs(m, 1.0, 0.0, 10);
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(t(k + 1) - lstar, -0.4 * (t(k) - lstar), 1e-12);
}

TEST(AggregateSlope, ParallelFreeGenerators) {
  std::vector<GeneratorSpec> g(2);
  g[0].p_max = 12;
  g[0].cost_alpha = 0.3;
  g[1].p_max = 11;
  g[1].cost_alpha = 0.2;
  EXPECT_NEAR(aggregate_slope(g, Eigen::Vector2d(5, 5)), 0.12, 1e-15);
  EXPECT_NEAR(aggregate_slope(g, Eigen::Vector2d(5, 11)), 0.3, 1e-15);
  EXPECT_TRUE(std::isinf(aggregate_slope(g, Eigen::Vector2d(0, 11))));
}

TEST(Sweep, FlipsAtCriticalStep) {
  std::vector<double> steps;
  for (int k = 0; k <= 20; ++k) steps.push_back(0.14 + 0.01 * k);
  const auto rows = sweep({0.3}, {0.2}, steps, SweepKind::alpha);
  ASSERT_EQ(rows.size(), steps.size());
  for (const auto& r : rows) {
    EXPECT_NEAR(r.critical, 0.24, 1e-12);
    const std::string expected = std::abs(r.step - 0.24) < 1e-12 ? "cycling" : r.step < 0.24 ? "converging" : "diverging";
    EXPECT_EQ(r.classification, expected) << r.step;
  }
}

TEST(Sweep, SigmaFlipsAtCriticalDamping) {
  // Damping past 1 is outside the protocol's range but shows where the flip sits.
  std::vector<double> steps;
  for (int k = 0; k <= 10; ++k) steps.push_back(1.0 + 0.04 * k);
  const auto rows = sweep({0.3}, {0.2}, steps, SweepKind::sigma);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.critical, 1.2, 1e-12);
    const std::string expected = std::abs(r.step - 1.2) < 1e-12 ? "cycling" : r.step < 1.2 ? "converging" : "diverging";
    EXPECT_EQ(r.classification, expected) << r.step;
  }
}

TEST(Sweep, SymmetricUnderSlopeSwap) {
  const std::vector<double> grid{0.1, 0.2, 0.3, 0.5};
  const std::vector<double> steps{0.05, 0.1, 0.2};
  const auto rows = sweep(grid, grid, steps, SweepKind::alpha);
  const auto n = grid.size(), ns = steps.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < ns; ++k) {
        const auto& a = rows[(i * n + j) * ns + k];
        const auto& b = rows[(j * n + i) * ns + k];
        EXPECT_DOUBLE_EQ(a.critical, b.critical);
        EXPECT_EQ(a.classification, b.classification);
      }
}

TEST(Sweep, EmptyRangeRejected) {
  EXPECT_THROW(sweep({}, {0.2}, {0.1}, SweepKind::alpha), std::invalid_argument);
  EXPECT_THROW(sweep({0.3}, {0.2}, {}, SweepKind::sigma), std::invalid_argument);
}

// The full negotiation on a single uncongested community with quadratic costs
// behaves as the two-agent recurrence predicts.
TEST(FullStackAgreement, SubgradientAndLubs) {
  struct Case {
    double a1, a2;
  };
  for (const Case c : {Case{0.2, 0.4}, Case{0.3, 0.2}, Case{0.25, 0.25}}) {
    const ScenarioSpec s = testutil::linear_duopoly(c.a1, c.a2);
    const DuopolyModel<> m{c.a1, c.a2, 10, 0};
    const PriceSignal p0 = flat_prices(s, 40);
    for (double f : {0.6, 1.4}) {
      CoordinatorConfig cfg;
      cfg.max_iters = 150;
      cfg.alpha = f * alpha_critical(m);
      const bool predicted = subgradient_at(m, cfg.alpha) == Classification::converging;
      const auto t = run_subgradient(s, cfg, p0.lambda, p0.mu);
      EXPECT_EQ(t.status == RunStatus::converged, predicted) << c.a1 << " " << c.a2 << " alpha x" << f;
    }
    for (double sigma : {0.5 * sigma_critical(m), 1.0}) {
      if (sigma > 1) continue;
      CoordinatorConfig cfg;
      cfg.max_iters = 150;
      cfg.sigma = sigma;
      const bool predicted = lubs_at(m, sigma) == Classification::converging;
      const auto t = run_lubs(s, cfg, p0.lambda);
      EXPECT_EQ(t.status == RunStatus::converged, predicted) << c.a1 << " " << c.a2 << " sigma " << sigma;
    }
  }
}
