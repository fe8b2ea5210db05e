// Lattice search oracle for tiny QPs. Used by tests to check the solver
// independently of its algebra.
//
// The lattice is {lb + k * step} inside the box. A lattice point counts as
// feasible when every row satisfies its constraint up to step * ||row||_1,
// which guarantees that the lattice point nearest to any feasible point is
// itself accepted. The last coordinate is not enumerated: for a fixed prefix
// its feasible lattice indices form an interval and the objective is a convex
// parabola in it, so the best index is found in closed form.

#pragma once

#include "gridbroker/qp/problem.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace gridbroker::qp {

template <typename Scalar>
struct LatticeOptimum {
  Vector<Scalar> x;
  Scalar objective;
};

template <typename Scalar>
std::optional<LatticeOptimum<Scalar>> brute_force(const QpProblem<Scalar>& p, Scalar grid_step) {
  p.validate();
  const auto n = p.size();
  if (n < 1 || n > 4) throw std::invalid_argument("brute_force: supports 1 to 4 variables");
  if (!(grid_step > 0)) throw std::invalid_argument("brute_force: grid_step must be positive");
  if (!p.lb.allFinite() || !p.ub.allFinite()) throw std::invalid_argument("brute_force: box must be bounded");

  // Every constraint as a row r'x <= rhs (equalities contribute two rows).
  const auto me = p.num_eq();
  const auto mi = p.num_ineq();
  Matrix<Scalar> R(2 * me + mi, n);
  Vector<Scalar> rhs(2 * me + mi);
  for (Eigen::Index i = 0; i < me; ++i) {
    const Scalar slack = grid_step * p.A.row(i).cwiseAbs().sum();
    R.row(2 * i) = p.A.row(i);
    rhs(2 * i) = p.b(i) + slack;
    R.row(2 * i + 1) = -p.A.row(i);
    rhs(2 * i + 1) = -p.b(i) + slack;
  }
  for (Eigen::Index i = 0; i < mi; ++i) {
    R.row(2 * me + i) = p.G.row(i);
    rhs(2 * me + i) = p.h(i) + grid_step * p.G.row(i).cwiseAbs().sum();
  }

  Eigen::Matrix<long long, Eigen::Dynamic, 1> count(n);
  for (Eigen::Index j = 0; j < n; ++j)
    count(j) = static_cast<long long>(std::floor((p.ub(j) - p.lb(j)) / grid_step + Scalar(1e-9))) + 1;

  const auto last = n - 1;
  std::optional<LatticeOptimum<Scalar>> best;
  Eigen::Matrix<long long, Eigen::Dynamic, 1> k = Eigen::Matrix<long long, Eigen::Dynamic, 1>::Zero(n);
  Vector<Scalar> x(n);
  const Scalar eps = Scalar(1e-12);

  while (true) {
    for (Eigen::Index j = 0; j < last; ++j) x(j) = p.lb(j) + Scalar(k(j)) * grid_step;

    // Interval of feasible indices for the last coordinate.
    long long kmin = 0, kmax = count(last) - 1;
    bool feasible = true;
    for (Eigen::Index r = 0; r < R.rows() && feasible; ++r) {
      Scalar partial = 0;
      for (Eigen::Index j = 0; j < last; ++j) partial += R(r, j) * x(j);
      const Scalar a = R(r, last);
      const Scalar room = rhs(r) - partial;
      if (a == Scalar(0)) {
        if (room < -eps) feasible = false;
        continue;
      }
      const Scalar bound = (room / a - p.lb(last)) / grid_step;
      if (a > 0) {
        kmax = std::min(kmax, static_cast<long long>(std::floor(bound + eps)));
      } else {
        kmin = std::max(kmin, static_cast<long long>(std::ceil(bound - eps)));
      }
    }
    if (feasible && kmin <= kmax) {
      const Scalar q = p.q_diag(last), c = p.c(last);
      long long kbest;
      if (q > 0) {
        const Scalar kc = (-c / q - p.lb(last)) / grid_step;
        kbest = std::clamp(static_cast<long long>(std::floor(kc)), kmin, kmax);
      } else {
        kbest = c > 0 ? kmin : kmax;
      }
      for (long long cand = kbest; cand <= std::min(kbest + 1, kmax); ++cand) {
        x(last) = p.lb(last) + Scalar(cand) * grid_step;
        const Scalar f = p.objective(x);
        if (!best || f < best->objective) best = LatticeOptimum<Scalar>{x, f};
      }
    }

    Eigen::Index j = 0;
    while (j < last) {
      if (++k(j) < count(j)) break;
      k(j) = 0;
      ++j;
    }
    if (j == last) break;
  }
  return best;
}

// Tolerance for |brute_force objective - optimal objective|: the objective can
// move by at most max|grad f|_1 * step between neighbouring lattice points, and
// relaxing each row by step * ||row||_1 can lower the optimum by at most the
// corresponding multiplier times that amount.
template <typename Scalar>
Scalar lattice_tolerance(const QpProblem<Scalar>& p, const QpSolution<Scalar>& s, Scalar grid_step) {
  Scalar grad = 0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const Scalar reach = std::max(std::abs(p.lb(j)), std::abs(p.ub(j)));
    grad += p.q_diag(j) * reach + std::abs(p.c(j));
  }
  Scalar dual = 0;
  for (Eigen::Index i = 0; i < p.num_eq(); ++i) dual += std::abs(s.eq_duals(i)) * p.A.row(i).cwiseAbs().sum();
  for (Eigen::Index i = 0; i < p.num_ineq(); ++i) dual += std::abs(s.ineq_duals(i)) * p.G.row(i).cwiseAbs().sum();
  return grid_step * (grad + dual) + Scalar(1e-9);
}

}  // namespace gridbroker::qp
