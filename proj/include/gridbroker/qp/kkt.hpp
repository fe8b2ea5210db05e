#pragma once

#include "gridbroker/qp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridbroker::qp {

template <typename Scalar>
struct KktBreakdown {
  Scalar stationarity = 0;
  Scalar primal = 0;
  Scalar complementarity = 0;
  Scalar dual_sign = 0;

  Scalar max() const { return std::max({stationarity, primal, complementarity, dual_sign}); }
};

// Residuals of the optimality conditions at (x, y, z, w), all in natural units
// (max-norm). Pure; recomputed from the problem data only.
template <typename Scalar>
KktBreakdown<Scalar> kkt_breakdown(const QpProblem<Scalar>& p, const Vector<Scalar>& x,
                                   const Vector<Scalar>& y, const Vector<Scalar>& z,
                                   const Vector<Scalar>& w) {
  const auto n = p.size();
  if (x.size() != n || w.size() != n || y.size() != p.num_eq() || z.size() != p.num_ineq())
    throw std::invalid_argument("kkt_residual: dimension mismatch");

  KktBreakdown<Scalar> r;
  Vector<Scalar> grad = p.q_diag.cwiseProduct(x) + p.c + w;
  if (p.num_eq() > 0) grad.noalias() -= p.A.transpose() * y;
  if (p.num_ineq() > 0) grad.noalias() += p.G.transpose() * z;
  r.stationarity = n > 0 ? grad.cwiseAbs().maxCoeff() : Scalar(0);

  if (p.num_eq() > 0) r.primal = (p.A * x - p.b).cwiseAbs().maxCoeff();
  if (p.num_ineq() > 0) {
    const Vector<Scalar> slack = p.h - p.G * x;
    r.primal = std::max(r.primal, (-slack).cwiseMax(Scalar(0)).maxCoeff());
    r.complementarity = z.cwiseProduct(slack).cwiseAbs().maxCoeff();
    r.dual_sign = (-z).cwiseMax(Scalar(0)).maxCoeff();
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    r.primal = std::max({r.primal, p.lb(j) - x(j), x(j) - p.ub(j)});
    if (w(j) > 0) {
      const Scalar gap = p.ub(j) - x(j);
      r.complementarity =
          std::max(r.complementarity, std::isfinite(gap) ? std::abs(w(j) * gap) : std::abs(w(j)));
    } else if (w(j) < 0) {
      const Scalar gap = x(j) - p.lb(j);
      r.complementarity =
          std::max(r.complementarity, std::isfinite(gap) ? std::abs(w(j) * gap) : std::abs(w(j)));
    }
  }
  return r;
}

template <typename Scalar>
Scalar kkt_residual(const QpProblem<Scalar>& p, const QpSolution<Scalar>& s) {
  return kkt_breakdown(p, s.x, s.eq_duals, s.ineq_duals, s.bound_duals).max();
}

// Partial Lagrangian dual value with the box kept as the domain:
//   g(y, z) = b'y - h'z + sum_j min_{lb_j <= x_j <= ub_j} 1/2 q_j x_j^2 + (c - A'y + G'z)_j x_j
// Returns -inf when a coordinate is unbounded below. g(y, z) <= primal optimum
// for every y and every z >= 0.
template <typename Scalar>
Scalar dual_value(const QpProblem<Scalar>& p, const Vector<Scalar>& y, const Vector<Scalar>& z) {
  Vector<Scalar> g = p.c;
  if (p.num_eq() > 0) g.noalias() -= p.A.transpose() * y;
  if (p.num_ineq() > 0) g.noalias() += p.G.transpose() * z;
  Scalar value = p.offset;
  if (p.num_eq() > 0) value += p.b.dot(y);
  if (p.num_ineq() > 0) value -= p.h.dot(z);
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const Scalar q = p.q_diag(j);
    Scalar xj;
    if (q > 0) {
      xj = std::clamp(-g(j) / q, p.lb(j), p.ub(j));
    } else if (g(j) > 0) {
      xj = p.lb(j);
    } else if (g(j) < 0) {
      xj = p.ub(j);
    } else {
      continue;
    }
    if (!std::isfinite(xj)) return -infinity<Scalar>();
    value += Scalar(0.5) * q * xj * xj + g(j) * xj;
  }
  return value;
}

}  // namespace gridbroker::qp
