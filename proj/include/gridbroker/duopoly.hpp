// Two-agent linear model of the price negotiations: one utility and one
// community with linear marginal costs and no binding limits. Gives closed
// forms for the critical step sizes and the equilibrium, plus the exact
// price recurrences of both protocols for cross-checking the full stack.
//
//   p_imp(lambda) = p_imp0 - lambda / a1   (utility purchase)
//   p_exp(lambda) = p_exp0 + lambda / a2   (community sale)
#pragma once

#include "gridbroker/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridbroker::duopoly {

template <typename Scalar>
using Trajectory = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct DuopolyModel {
  Scalar a1 = 1;  // utility marginal-cost slope, $/MW^2 h
  Scalar a2 = 1;  // community marginal-cost slope
  Scalar p_imp0 = 0;
  Scalar p_exp0 = 0;

  void validate() const {
    if (!(a1 > 0) || !(a2 > 0)) throw std::invalid_argument("DuopolyModel: slopes must be positive");
  }
  Scalar p_imp(Scalar lambda) const { return p_imp0 - lambda / a1; }
  Scalar p_exp(Scalar lambda) const { return p_exp0 + lambda / a2; }
};

template <typename Scalar>
Scalar alpha_critical(const DuopolyModel<Scalar>& m) {
  m.validate();
  return 2 * m.a1 * m.a2 / (m.a1 + m.a2);
}

template <typename Scalar>
Scalar sigma_critical(const DuopolyModel<Scalar>& m) {
  m.validate();
  return 2 * m.a1 / (m.a1 + m.a2);
}

template <typename Scalar>
struct FixedPoint {
  Scalar lambda;
  Scalar power;
};

template <typename Scalar>
FixedPoint<Scalar> fixed_point(const DuopolyModel<Scalar>& m) {
  m.validate();
  const Scalar lambda = (m.p_imp0 - m.p_exp0) * m.a1 * m.a2 / (m.a1 + m.a2);
  return {lambda, m.p_imp0 - lambda / m.a1};
}

// Per-step contraction factors of the two recurrences.
template <typename Scalar>
Scalar subgradient_ratio(const DuopolyModel<Scalar>& m, Scalar alpha) {
  return 1 - alpha * (1 / m.a1 + 1 / m.a2);
}

template <typename Scalar>
Scalar lubs_ratio(const DuopolyModel<Scalar>& m, Scalar sigma) {
  return 1 - sigma * (m.a1 + m.a2) / m.a1;
}

namespace detail {
template <typename Scalar>
Trajectory<Scalar> affine(Scalar ratio, Scalar shift, Scalar lambda0, int n) {
  if (n < 1) throw std::invalid_argument("trajectory needs n >= 1");
  Trajectory<Scalar> out(n + 1);
  out(0) = lambda0;
  for (int k = 0; k < n; ++k) out(k + 1) = ratio * out(k) + shift;
  return out;
}
}  // namespace detail

// lambda_{k+1} = lambda_k + alpha (p_imp - p_exp); n steps, n + 1 points.
template <typename Scalar>
Trajectory<Scalar> iterate_subgradient(const DuopolyModel<Scalar>& m, Scalar alpha, Scalar lambda0, int n) {
  m.validate();
  return detail::affine(subgradient_ratio(m, alpha), alpha * (m.p_imp0 - m.p_exp0), lambda0, n);
}

// Community answers the utility's demand with its marginal price, damped by sigma.
template <typename Scalar>
Trajectory<Scalar> iterate_lubs(const DuopolyModel<Scalar>& m, Scalar sigma, Scalar lambda0, int n) {
  m.validate();
  return detail::affine(lubs_ratio(m, sigma), sigma * m.a2 * (m.p_imp0 - m.p_exp0), lambda0, n);
}

enum class Classification { converging, diverging, cycling };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::converging: return "converging";
    case Classification::diverging: return "diverging";
    case Classification::cycling: return "cycling";
  }
  return "unknown";
}

class AmbiguousTrajectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int classify_window = 8;

// Looks at the last eight points through their successive differences:
// a period-2 pattern is cycling, steadily shrinking (or already settled)
// steps are converging, steadily growing steps are diverging. Anything else
// throws AmbiguousTrajectory.
template <typename Derived>
Classification classify(const Eigen::MatrixBase<Derived>& trajectory, typename Derived::Scalar tol = 1e-9) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = trajectory.size();
  if (n < classify_window) throw std::invalid_argument("classify: trajectory needs at least 8 points");
  const auto tail = trajectory.tail(classify_window);
  if (!tail.allFinite()) return Classification::diverging;

  Eigen::Matrix<Scalar, classify_window - 1, 1> step;
  for (int k = 0; k + 1 < classify_window; ++k) step(k) = std::abs(tail(k + 1) - tail(k));
  if (step.maxCoeff() <= tol) return Classification::converging;

  bool period2 = true;
  for (int k = 0; k + 2 < classify_window; ++k) period2 = period2 && std::abs(tail(k + 2) - tail(k)) <= tol;
  if (period2) return Classification::cycling;

  bool shrinking = true, growing = true;
  for (int k = 0; k + 1 < step.size(); ++k) {
    shrinking = shrinking && (step(k + 1) < step(k) || step(k + 1) <= tol);
    growing = growing && step(k + 1) > step(k);
  }
  if (shrinking) return Classification::converging;
  if (growing) return Classification::diverging;
  throw AmbiguousTrajectory("classify: no converging, cycling or diverging pattern in the last 8 points");
}

// Slope of the aggregate marginal-cost curve of several generators at a
// dispatch: generators strictly inside their limits act in parallel, so the
// slope is 1 / sum(1 / alpha_i). Returns +inf when none is free.
inline double aggregate_slope(const std::vector<GeneratorSpec>& generators, const Eigen::VectorXd& dispatch,
                              double tol = 1e-6) {
  double inverse = 0;
  for (std::size_t i = 0; i < generators.size(); ++i) {
    const auto& g = generators[i];
    const double p = dispatch(static_cast<Eigen::Index>(i));
    if (p > g.p_min + tol && p < g.p_max - tol && g.cost_alpha > 0) inverse += 1 / g.cost_alpha;
  }
  return inverse > 0 ? 1 / inverse : std::numeric_limits<double>::infinity();
}

// Phase diagram over a grid of slopes and step sizes.
enum class SweepKind { alpha, sigma };

struct SweepRow {
  double a1;
  double a2;
  double step;
  double critical;
  std::string classification;  // converging, diverging, cycling or ambiguous
};

struct SweepOptions {
  double p_imp0 = 10;
  double p_exp0 = 0;
  double lambda0 = 0;
  int iterations = 200;
  double tol = 1e-9;
};

inline std::vector<SweepRow> sweep(const std::vector<double>& a1_grid, const std::vector<double>& a2_grid,
                                   const std::vector<double>& step_grid, SweepKind kind,
                                   const SweepOptions& opt = {}) {
  if (a1_grid.empty() || a2_grid.empty() || step_grid.empty()) throw std::invalid_argument("sweep: empty range");
  std::vector<SweepRow> rows;
  rows.reserve(a1_grid.size() * a2_grid.size() * step_grid.size());
  for (double a1 : a1_grid) {
    for (double a2 : a2_grid) {
      const DuopolyModel<double> m{a1, a2, opt.p_imp0, opt.p_exp0};
      const double critical = kind == SweepKind::alpha ? alpha_critical(m) : sigma_critical(m);
      for (double s : step_grid) {
        const auto traj = kind == SweepKind::alpha ? iterate_subgradient(m, s, opt.lambda0, opt.iterations)
                                                   : iterate_lubs(m, s, opt.lambda0, opt.iterations);
        std::string label;
        try {
          label = to_string(classify(traj, opt.tol));
        } catch (const AmbiguousTrajectory&) {
          label = "ambiguous";
        }
        rows.push_back({a1, a2, s, critical, std::move(label)});
      }
    }
  }
  return rows;
}

}  // namespace gridbroker::duopoly
