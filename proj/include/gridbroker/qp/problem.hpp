// Convex quadratic program with a diagonal Hessian.
//
//   minimize    1/2 x' diag(q) x + c' x
//   subject to  A x  = b        (eq_duals)
//               G x <= h        (ineq_duals >= 0)
//               lb <= x <= ub   (bound_duals)
//
// Sign convention for the returned multipliers: the stationarity condition is
//
//   diag(q) x + c - A' y + G' z + w = 0
//
// so y is the shadow price of b (d objective / d b), z >= 0, and w_j > 0
// flags an active upper bound, w_j < 0 an active lower bound.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gridbroker::qp {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
constexpr Scalar infinity() {
  return std::numeric_limits<Scalar>::infinity();
}

template <typename Scalar>
struct QpProblem {
  Vector<Scalar> q_diag;
  Vector<Scalar> c;
  Matrix<Scalar> A;
  Vector<Scalar> b;
  Matrix<Scalar> G;
  Vector<Scalar> h;
  Vector<Scalar> lb;
  Vector<Scalar> ub;
  // Constant added to the objective; does not affect the solution.
  Scalar offset = Scalar(0);

  QpProblem() = default;

  // Unconstrained problem with free variables and zero costs.
  explicit QpProblem(Eigen::Index n)
      : q_diag(Vector<Scalar>::Zero(n)),
        c(Vector<Scalar>::Zero(n)),
        A(0, n),
        b(0),
        G(0, n),
        h(0),
        lb(Vector<Scalar>::Constant(n, -infinity<Scalar>())),
        ub(Vector<Scalar>::Constant(n, infinity<Scalar>())) {}

  Eigen::Index size() const { return c.size(); }
  Eigen::Index num_eq() const { return A.rows(); }
  Eigen::Index num_ineq() const { return G.rows(); }

  Scalar objective(const Vector<Scalar>& x) const {
    return Scalar(0.5) * x.dot(q_diag.cwiseProduct(x)) + c.dot(x) + offset;
  }

  // Throws std::invalid_argument naming the first broken invariant.
  void validate() const {
    const auto n = size();
    auto fail = [](const std::string& what) { throw std::invalid_argument("QpProblem: " + what); };
    if (q_diag.size() != n || lb.size() != n || ub.size() != n) fail("vector sizes differ from n");
    if (A.cols() != n && A.rows() > 0) fail("A column count differs from n");
    if (G.cols() != n && G.rows() > 0) fail("G column count differs from n");
    if (A.rows() != b.size()) fail("A rows differ from b size");
    if (G.rows() != h.size()) fail("G rows differ from h size");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(q_diag(j) >= 0)) fail("q_diag must be nonnegative (index " + std::to_string(j) + ")");
      if (!(lb(j) <= ub(j))) fail("lb > ub at index " + std::to_string(j));
      if (!std::isfinite(c(j))) fail("c not finite at index " + std::to_string(j));
    }
    if (!A.allFinite() || !b.allFinite() || !G.allFinite() || !h.allFinite())
      fail("constraint data not finite");
  }
};

enum class QpStatus { optimal, infeasible, iteration_limit };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

template <typename Scalar>
struct QpSolution {
  Vector<Scalar> x;
  Vector<Scalar> eq_duals;
  Vector<Scalar> ineq_duals;
  Vector<Scalar> bound_duals;
  QpStatus status = QpStatus::iteration_limit;
  Scalar kkt_residual = infinity<Scalar>();
  Scalar objective = infinity<Scalar>();
  int iterations = 0;
  bool polished = false;

  bool optimal() const { return status == QpStatus::optimal; }
};

using QpProblemd = QpProblem<double>;
using QpSolutiond = QpSolution<double>;

}  // namespace gridbroker::qp
