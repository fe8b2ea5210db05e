// Primal-dual interior point method (Mehrotra predictor-corrector) for the
// diagonal-Hessian QP of problem.hpp, followed by an active-set polish.
//
// The polish step fixes every constraint the interior iterate identifies as
// active (dual strictly larger than slack; ties count as inactive) and solves
// the resulting equality-constrained KKT system directly, so bounds that bind
// are met exactly and inactive multipliers are exactly zero. The polished
// point is kept only if it passes the sign and feasibility checks (after
// releasing constraints whose multipliers come out with the wrong sign);
// otherwise the interior iterate is returned.
//
// Infeasibility is decided by a phase-1 problem (minimize the total elastic
// violation of the constraints) whenever the main iteration fails to
// converge. Everything is sequential and deterministic: identical input
// produces bit-identical output.

#pragma once

#include "gridbroker/qp/kkt.hpp"
#include "gridbroker/qp/problem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

namespace gridbroker::qp {

struct SolverOptions {
  double kkt_tol = 1e-7;
  int max_iterations = 200;
  bool polish = true;
  bool detect_infeasibility = true;
};

namespace detail {

template <typename Scalar>
using SpMat = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;

template <typename Scalar>
struct StandardForm {
  Eigen::Index n = 0;
  SpMat<Scalar> A;  // original equality rows followed by one row per fixed variable
  Vector<Scalar> b;
  SpMat<Scalar> G;
  Vector<Scalar> h;
  std::vector<Eigen::Index> lower;  // variables with a finite lower bound (not fixed)
  std::vector<Eigen::Index> upper;
  std::vector<Eigen::Index> fixed;
  Eigen::Index original_eq = 0;
};

template <typename Scalar>
StandardForm<Scalar> standardize(const QpProblem<Scalar>& p) {
  StandardForm<Scalar> f;
  f.n = p.size();
  f.original_eq = p.num_eq();
  for (Eigen::Index j = 0; j < f.n; ++j) {
    if (p.lb(j) == p.ub(j)) {
      f.fixed.push_back(j);
      continue;
    }
    if (std::isfinite(p.lb(j))) f.lower.push_back(j);
    if (std::isfinite(p.ub(j))) f.upper.push_back(j);
  }
  const auto me = p.num_eq() + static_cast<Eigen::Index>(f.fixed.size());
  std::vector<Eigen::Triplet<Scalar>> trip;
  for (Eigen::Index i = 0; i < p.num_eq(); ++i)
    for (Eigen::Index j = 0; j < f.n; ++j)
      if (p.A(i, j) != Scalar(0)) trip.emplace_back(int(i), int(j), p.A(i, j));
  f.b.resize(me);
  f.b.head(p.num_eq()) = p.b;
  for (std::size_t k = 0; k < f.fixed.size(); ++k) {
    const auto row = p.num_eq() + Eigen::Index(k);
    trip.emplace_back(int(row), int(f.fixed[k]), Scalar(1));
    f.b(row) = p.lb(f.fixed[k]);
  }
  f.A.resize(me, f.n);
  f.A.setFromTriplets(trip.begin(), trip.end());
  if (p.num_ineq() > 0) {
    f.G = p.G.sparseView();
  } else {
    f.G.resize(0, f.n);
  }
  f.h = p.h;
  return f;
}

// Solves the regularized quasi-definite system K d = r with iterative
// refinement against the unregularized operator.
template <typename Scalar>
class KktSystem {
 public:
  KktSystem(const StandardForm<Scalar>& f, Scalar reg) : f_(f), reg_(reg) {
    n_ = f.n;
    me_ = f.A.rows();
    mi_ = f.G.rows();
  }

  bool factor(const Vector<Scalar>& h_diag, const Vector<Scalar>& g_diag) {
    h_diag_ = h_diag;
    g_diag_ = g_diag;
    const auto N = n_ + me_ + mi_;
    std::vector<Eigen::Triplet<Scalar>> trip;
    trip.reserve(std::size_t(N + f_.A.nonZeros() + f_.G.nonZeros()));
    for (Eigen::Index j = 0; j < n_; ++j) trip.emplace_back(int(j), int(j), h_diag(j) + reg_);
    for (Eigen::Index k = 0; k < f_.A.outerSize(); ++k)
      for (typename SpMat<Scalar>::InnerIterator it(f_.A, k); it; ++it)
        trip.emplace_back(int(n_ + it.row()), int(it.col()), it.value());
    for (Eigen::Index i = 0; i < me_; ++i) trip.emplace_back(int(n_ + i), int(n_ + i), -reg_);
    for (Eigen::Index k = 0; k < f_.G.outerSize(); ++k)
      for (typename SpMat<Scalar>::InnerIterator it(f_.G, k); it; ++it)
        trip.emplace_back(int(n_ + me_ + it.row()), int(it.col()), it.value());
    for (Eigen::Index i = 0; i < mi_; ++i)
      trip.emplace_back(int(n_ + me_ + i), int(n_ + me_ + i), -g_diag(i) - reg_);
    K_.resize(N, N);
    K_.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed_) {
      ldlt_.analyzePattern(K_);
      analyzed_ = true;
    }
    ldlt_.factorize(K_);
    use_lu_ = ldlt_.info() != Eigen::Success;
    if (use_lu_) {
      SpMat<Scalar> full = K_.template selfadjointView<Eigen::Lower>();
      lu_.compute(full);
      if (lu_.info() != Eigen::Success) return false;
    }
    return true;
  }

  Vector<Scalar> solve(const Vector<Scalar>& rhs, int refinements = 3) const {
    Vector<Scalar> d = raw_solve(rhs);
    for (int k = 0; k < refinements; ++k) {
      const Vector<Scalar> r = rhs - apply(d);
      if (r.cwiseAbs().maxCoeff() <= Scalar(1e-15) * (Scalar(1) + rhs.cwiseAbs().maxCoeff())) break;
      d += raw_solve(r);
    }
    return d;
  }

 private:
  Vector<Scalar> raw_solve(const Vector<Scalar>& r) const {
    if (use_lu_) return lu_.solve(r);
    return ldlt_.solve(r);
  }

  // Unregularized KKT operator.
  Vector<Scalar> apply(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    const auto vx = v.head(n_);
    const auto vy = v.segment(n_, me_);
    const auto vz = v.tail(mi_);
    out.head(n_) = h_diag_.cwiseProduct(vx);
    if (me_ > 0) {
      out.head(n_) += f_.A.transpose() * vy;
      out.segment(n_, me_) = f_.A * vx;
    }
    if (mi_ > 0) {
      out.head(n_) += f_.G.transpose() * vz;
      out.tail(mi_) = f_.G * vx - g_diag_.cwiseProduct(vz);
    }
    return out;
  }

  const StandardForm<Scalar>& f_;
  Scalar reg_;
  Eigen::Index n_ = 0, me_ = 0, mi_ = 0;
  Vector<Scalar> h_diag_, g_diag_;
  SpMat<Scalar> K_;
  Eigen::SimplicialLDLT<SpMat<Scalar>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::SparseLU<SpMat<Scalar>> lu_;
  bool analyzed_ = false;
  bool use_lu_ = false;
};

template <typename Scalar>
Scalar max_step(const Vector<Scalar>& v, const Vector<Scalar>& dv) {
  Scalar step = Scalar(1);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0) step = std::min(step, -v(i) / dv(i));
  return step;
}

template <typename Scalar>
Scalar inf_norm(const Vector<Scalar>& v) {
  return v.size() > 0 ? v.cwiseAbs().maxCoeff() : Scalar(0);
}

template <typename Scalar>
Vector<Scalar> gather(const Vector<Scalar>& x, const std::vector<Eigen::Index>& idx) {
  Vector<Scalar> out(Eigen::Index(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(Eigen::Index(k)) = x(idx[k]);
  return out;
}

template <typename Scalar>
struct Iterate {
  Vector<Scalar> x, y, s, z, sl, zl, su, zu;
};

template <typename Scalar>
struct IpmResult {
  Iterate<Scalar> it;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
};

template <typename Scalar>
QpSolution<Scalar> to_public(const QpProblem<Scalar>& p, const StandardForm<Scalar>& f,
                             const Iterate<Scalar>& it) {
  QpSolution<Scalar> s;
  s.x = it.x;
  s.eq_duals = -it.y.head(f.original_eq);
  s.ineq_duals = it.z;
  s.bound_duals = Vector<Scalar>::Zero(f.n);
  for (std::size_t k = 0; k < f.lower.size(); ++k) s.bound_duals(f.lower[k]) -= it.zl(Eigen::Index(k));
  for (std::size_t k = 0; k < f.upper.size(); ++k) s.bound_duals(f.upper[k]) += it.zu(Eigen::Index(k));
  for (std::size_t k = 0; k < f.fixed.size(); ++k) {
    s.x(f.fixed[k]) = p.lb(f.fixed[k]);
    s.bound_duals(f.fixed[k]) = it.y(f.original_eq + Eigen::Index(k));
  }
  s.kkt_residual = kkt_residual(p, s);
  s.objective = p.objective(s.x);
  return s;
}

template <typename Scalar>
IpmResult<Scalar> interior_point(const QpProblem<Scalar>& p, const StandardForm<Scalar>& f,
                                 const SolverOptions& opt, const Vector<Scalar>* warm) {
  const auto n = f.n;
  const auto me = f.A.rows();
  const auto mi = f.G.rows();
  const auto nl = Eigen::Index(f.lower.size());
  const auto nu = Eigen::Index(f.upper.size());
  const auto ncomp = mi + nl + nu;

  Iterate<Scalar> it;
  it.x.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar l = p.lb(j), u = p.ub(j);
    Scalar v = warm ? (*warm)(j) : Scalar(0);
    if (std::isfinite(l) && std::isfinite(u)) {
      const Scalar margin = std::min(Scalar(1), Scalar(0.25) * (u - l));
      v = warm ? std::clamp(v, l + margin, u - margin) : Scalar(0.5) * (l + u);
      if (l == u) v = l;
    } else if (std::isfinite(l)) {
      v = warm ? std::max(v, l + Scalar(1)) : l + Scalar(1);
    } else if (std::isfinite(u)) {
      v = warm ? std::min(v, u - Scalar(1)) : u - Scalar(1);
    }
    it.x(j) = v;
  }
  it.y = Vector<Scalar>::Zero(me);
  it.s = mi > 0 ? Vector<Scalar>((f.h - f.G * it.x).cwiseMax(Scalar(1))) : Vector<Scalar>(0);
  it.z = Vector<Scalar>::Ones(mi);
  it.sl = (gather(it.x, f.lower) - gather<Scalar>(p.lb, f.lower)).cwiseMax(Scalar(1));
  it.zl = Vector<Scalar>::Ones(nl);
  it.su = (gather<Scalar>(p.ub, f.upper) - gather(it.x, f.upper)).cwiseMax(Scalar(1));
  it.zu = Vector<Scalar>::Ones(nu);

  const Vector<Scalar> lval = gather<Scalar>(p.lb, f.lower);
  const Vector<Scalar> uval = gather<Scalar>(p.ub, f.upper);
  const Scalar scale = Scalar(1) + std::max({inf_norm<Scalar>(p.c), inf_norm<Scalar>(f.b), inf_norm<Scalar>(f.h)});
  const Scalar feas_tol = std::min(Scalar(1e-10) * scale, Scalar(opt.kkt_tol) * Scalar(1e-2));
  const Scalar mu_tol = std::min(Scalar(1e-12) * scale, Scalar(opt.kkt_tol) * Scalar(1e-3));

  KktSystem<Scalar> kkt(f, Scalar(1e-9));
  IpmResult<Scalar> result;

  auto scatter_add = [](Vector<Scalar>& dst, const std::vector<Eigen::Index>& idx, const Vector<Scalar>& v,
                        Scalar sign) {
    for (std::size_t k = 0; k < idx.size(); ++k) dst(idx[k]) += sign * v(Eigen::Index(k));
  };

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    result.iterations = iter;
    Vector<Scalar> rd = p.q_diag.cwiseProduct(it.x) + p.c;
    if (me > 0) rd += f.A.transpose() * it.y;
    if (mi > 0) rd += f.G.transpose() * it.z;
    scatter_add(rd, f.lower, it.zl, Scalar(-1));
    scatter_add(rd, f.upper, it.zu, Scalar(1));
    const Vector<Scalar> rp = me > 0 ? Vector<Scalar>(f.A * it.x - f.b) : Vector<Scalar>(0);
    const Vector<Scalar> rg = mi > 0 ? Vector<Scalar>(f.G * it.x + it.s - f.h) : Vector<Scalar>(0);
    const Vector<Scalar> rl = gather(it.x, f.lower) - it.sl - lval;
    const Vector<Scalar> ru = gather(it.x, f.upper) + it.su - uval;

    const Scalar mu = ncomp > 0 ? (it.s.dot(it.z) + it.sl.dot(it.zl) + it.su.dot(it.zu)) / Scalar(ncomp) : Scalar(0);
    const Scalar pres = std::max({inf_norm(rp), inf_norm(rg), inf_norm(rl), inf_norm(ru)});
    const Scalar dres = inf_norm(rd);
    if (pres <= feas_tol && dres <= feas_tol && mu <= mu_tol) {
      result.converged = true;
      break;
    }
    const Scalar dual_size = std::max({inf_norm(it.y), inf_norm(it.z), inf_norm(it.zl), inf_norm(it.zu)});
    if (!std::isfinite(mu) || dual_size > Scalar(1e11) * scale || inf_norm(it.x) > Scalar(1e11) * scale) {
      result.diverged = true;
      break;
    }

    Vector<Scalar> hdiag = p.q_diag;
    scatter_add(hdiag, f.lower, Vector<Scalar>(it.zl.cwiseQuotient(it.sl)), Scalar(1));
    scatter_add(hdiag, f.upper, Vector<Scalar>(it.zu.cwiseQuotient(it.su)), Scalar(1));
    const Vector<Scalar> gdiag = it.s.cwiseQuotient(it.z);
    if (!kkt.factor(hdiag, gdiag)) {
      result.diverged = true;
      break;
    }

    struct Direction {
      Vector<Scalar> dx, dy, ds, dz, dsl, dzl, dsu, dzu;
    };
    auto direction = [&](const Vector<Scalar>& r_sz, const Vector<Scalar>& r_lz, const Vector<Scalar>& r_uz) {
      Vector<Scalar> rhs(n + me + mi);
      Vector<Scalar> rx = -rd;
      scatter_add(rx, f.lower, Vector<Scalar>((r_lz + it.zl.cwiseProduct(rl)).cwiseQuotient(it.sl)), Scalar(-1));
      scatter_add(rx, f.upper, Vector<Scalar>((-r_uz + it.zu.cwiseProduct(ru)).cwiseQuotient(it.su)), Scalar(-1));
      rhs.head(n) = rx;
      rhs.segment(n, me) = -rp;
      rhs.tail(mi) = -rg + r_sz.cwiseQuotient(it.z);
      const Vector<Scalar> sol = kkt.solve(rhs);
      Direction d;
      d.dx = sol.head(n);
      d.dy = sol.segment(n, me);
      d.dz = sol.tail(mi);
      d.ds = mi > 0 ? Vector<Scalar>(-rg - f.G * d.dx) : Vector<Scalar>(0);
      d.dsl = gather(d.dx, f.lower) + rl;
      d.dzl = (-r_lz - it.zl.cwiseProduct(d.dsl)).cwiseQuotient(it.sl);
      d.dsu = -ru - gather(d.dx, f.upper);
      d.dzu = (-r_uz - it.zu.cwiseProduct(d.dsu)).cwiseQuotient(it.su);
      return d;
    };
    auto step_length = [&](const Direction& d) {
      return std::min({max_step(it.s, d.ds), max_step(it.z, d.dz), max_step(it.sl, d.dsl),
                       max_step(it.zl, d.dzl), max_step(it.su, d.dsu), max_step(it.zu, d.dzu)});
    };

    const Vector<Scalar> r_sz0 = it.s.cwiseProduct(it.z);
    const Vector<Scalar> r_lz0 = it.sl.cwiseProduct(it.zl);
    const Vector<Scalar> r_uz0 = it.su.cwiseProduct(it.zu);
    const Direction aff = direction(r_sz0, r_lz0, r_uz0);
    Direction d = aff;
    if (ncomp > 0) {
      const Scalar a_aff = step_length(aff);
      const Scalar mu_aff = ((it.s + a_aff * aff.ds).dot(it.z + a_aff * aff.dz) +
                             (it.sl + a_aff * aff.dsl).dot(it.zl + a_aff * aff.dzl) +
                             (it.su + a_aff * aff.dsu).dot(it.zu + a_aff * aff.dzu)) /
                            Scalar(ncomp);
      const Scalar sigma = std::pow(std::clamp(mu_aff / mu, Scalar(0), Scalar(1)), Scalar(3));
      const Vector<Scalar> r_sz = (r_sz0 + aff.ds.cwiseProduct(aff.dz)).array() - sigma * mu;
      const Vector<Scalar> r_lz = (r_lz0 + aff.dsl.cwiseProduct(aff.dzl)).array() - sigma * mu;
      const Vector<Scalar> r_uz = (r_uz0 + aff.dsu.cwiseProduct(aff.dzu)).array() - sigma * mu;
      d = direction(r_sz, r_lz, r_uz);
    }
    const Scalar a = ncomp > 0 ? std::min(Scalar(1), Scalar(0.99) * step_length(d)) : Scalar(1);
    // A pair with slack and multiplier both near zero blocks the step; the
    // polish takes over from here.
    if (a < Scalar(1e-10)) break;
    it.x += a * d.dx;
    it.y += a * d.dy;
    it.s += a * d.ds;
    it.z += a * d.dz;
    it.sl += a * d.dsl;
    it.zl += a * d.dzl;
    it.su += a * d.dsu;
    it.zu += a * d.dzu;
    result.iterations = iter + 1;
  }
  result.it = std::move(it);
  return result;
}

enum class Fix { free, lower, upper, fixed };

// Solves the equality-constrained KKT system with the variables in `state`
// pinned to their bounds and the rows in `active_rows` held as equalities.
template <typename Scalar>
std::optional<std::tuple<Vector<Scalar>, Vector<Scalar>, Vector<Scalar>>> solve_active_set(
    const QpProblem<Scalar>& p, const std::vector<Fix>& state, const std::vector<Eigen::Index>& active_rows) {
  const auto n = p.size();
  Vector<Scalar> x = Vector<Scalar>::Zero(n);
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index j = 0; j < n; ++j) {
    switch (state[std::size_t(j)]) {
      case Fix::free: free_idx.push_back(j); break;
      case Fix::lower:
      case Fix::fixed: x(j) = p.lb(j); break;
      case Fix::upper: x(j) = p.ub(j); break;
    }
  }
  const auto nf = Eigen::Index(free_idx.size());
  const auto me = p.num_eq();
  const auto ma = Eigen::Index(active_rows.size());
  const auto N = nf + me + ma;

  Vector<Scalar> rhs(N);
  Vector<Scalar> hdiag(nf);
  for (Eigen::Index k = 0; k < nf; ++k) {
    rhs(k) = -p.c(free_idx[std::size_t(k)]);
    hdiag(k) = p.q_diag(free_idx[std::size_t(k)]);
  }
  if (me > 0) rhs.segment(nf, me) = p.b - p.A * x;
  for (Eigen::Index r = 0; r < ma; ++r) rhs(nf + me + r) = p.h(active_rows[std::size_t(r)]) - p.G.row(active_rows[std::size_t(r)]).dot(x);

  // Constraint rows restricted to free columns.
  std::vector<Eigen::Triplet<Scalar>> crow;
  for (Eigen::Index i = 0; i < me; ++i)
    for (Eigen::Index k = 0; k < nf; ++k) {
      const Scalar v = p.A(i, free_idx[std::size_t(k)]);
      if (v != Scalar(0)) crow.emplace_back(int(i), int(k), v);
    }
  for (Eigen::Index r = 0; r < ma; ++r)
    for (Eigen::Index k = 0; k < nf; ++k) {
      const Scalar v = p.G(active_rows[std::size_t(r)], free_idx[std::size_t(k)]);
      if (v != Scalar(0)) crow.emplace_back(int(me + r), int(k), v);
    }
  SpMat<Scalar> C(me + ma, nf);
  C.setFromTriplets(crow.begin(), crow.end());

  const Scalar reg = Scalar(1e-10);
  std::vector<Eigen::Triplet<Scalar>> trip;
  for (Eigen::Index k = 0; k < nf; ++k) trip.emplace_back(int(k), int(k), hdiag(k) + reg);
  for (Eigen::Index k = 0; k < C.outerSize(); ++k)
    for (typename SpMat<Scalar>::InnerIterator c_it(C, k); c_it; ++c_it)
      trip.emplace_back(int(nf + c_it.row()), int(c_it.col()), c_it.value());
  for (Eigen::Index i = 0; i < me + ma; ++i) trip.emplace_back(int(nf + i), int(nf + i), -reg);
  SpMat<Scalar> K(N, N);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SpMat<Scalar>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(K);
  if (ldlt.info() != Eigen::Success) return std::nullopt;

  auto apply = [&](const Vector<Scalar>& v) {
    Vector<Scalar> out(N);
    out.head(nf) = hdiag.cwiseProduct(v.head(nf)) + C.transpose() * v.tail(me + ma);
    out.tail(me + ma) = C * v.head(nf);
    return out;
  };
  Vector<Scalar> sol = ldlt.solve(rhs);
  const Scalar rscale = Scalar(1) + inf_norm(rhs);
  for (int k = 0; k < 30; ++k) {
    const Vector<Scalar> r = rhs - apply(sol);
    if (inf_norm(r) <= Scalar(1e-14) * rscale) break;
    sol += ldlt.solve(r);
  }
  if (!sol.allFinite()) return std::nullopt;

  for (Eigen::Index k = 0; k < nf; ++k) x(free_idx[std::size_t(k)]) = sol(k);
  Vector<Scalar> ineq = Vector<Scalar>::Zero(p.num_ineq());
  for (Eigen::Index r = 0; r < ma; ++r) ineq(active_rows[std::size_t(r)]) = sol(nf + me + r);
  return std::make_tuple(std::move(x), Vector<Scalar>(-sol.segment(nf, me)), std::move(ineq));
}

// Fixes the constraints the interior iterate marks as active and solves the
// equality-constrained KKT system. At a degenerate vertex the multipliers of
// the active set are not unique and the solve may hand one the wrong sign;
// that constraint is released and the system solved again. Returns nothing
// if no sign-consistent, feasible point is found.
template <typename Scalar>
std::optional<QpSolution<Scalar>> polish(const QpProblem<Scalar>& p, const StandardForm<Scalar>& f,
                                         const Iterate<Scalar>& it, Scalar kkt_tol) {
  const auto n = f.n;
  std::vector<Fix> state(std::size_t(n), Fix::free);
  for (auto j : f.fixed) state[std::size_t(j)] = Fix::fixed;
  for (std::size_t k = 0; k < f.lower.size(); ++k)
    if (it.zl(Eigen::Index(k)) > it.sl(Eigen::Index(k))) state[std::size_t(f.lower[k])] = Fix::lower;
  for (std::size_t k = 0; k < f.upper.size(); ++k) {
    const auto j = std::size_t(f.upper[k]);
    if (it.zu(Eigen::Index(k)) > it.su(Eigen::Index(k))) {
      // Both bounds flagged: keep the one with the larger multiplier.
      if (state[j] == Fix::lower) {
        const auto kl = std::size_t(std::find(f.lower.begin(), f.lower.end(), f.upper[k]) - f.lower.begin());
        if (it.zu(Eigen::Index(k)) > it.zl(Eigen::Index(kl))) state[j] = Fix::upper;
      } else {
        state[j] = Fix::upper;
      }
    }
  }
  std::vector<Eigen::Index> active_rows;
  for (Eigen::Index i = 0; i < p.num_ineq(); ++i)
    if (it.z(i) > it.s(i)) active_rows.push_back(i);

  const auto me = p.num_eq();
  const Scalar tiny = std::min(Scalar(1e-9), kkt_tol * Scalar(1e-2));
  const std::size_t max_releases =
      active_rows.size() + std::size_t(std::count_if(state.begin(), state.end(), [](Fix s) {
        return s == Fix::lower || s == Fix::upper;
      }));
  for (std::size_t round = 0; round <= max_releases; ++round) {
    auto point = solve_active_set(p, state, active_rows);
    if (!point) return std::nullopt;
    QpSolution<Scalar> s;
    s.x = std::move(std::get<0>(*point));
    s.eq_duals = std::move(std::get<1>(*point));
    s.ineq_duals = std::move(std::get<2>(*point));

    for (Eigen::Index j = 0; j < n; ++j) {
      if (state[std::size_t(j)] != Fix::free) continue;
      if (s.x(j) < p.lb(j) - tiny || s.x(j) > p.ub(j) + tiny) return std::nullopt;
      s.x(j) = std::clamp(s.x(j), p.lb(j), p.ub(j));
    }
    if (p.num_ineq() > 0 && ((p.G * s.x - p.h).array() > tiny).any()) return std::nullopt;

    Vector<Scalar> grad = p.q_diag.cwiseProduct(s.x) + p.c;
    if (me > 0) grad -= p.A.transpose() * s.eq_duals;
    if (p.num_ineq() > 0) grad += p.G.transpose() * s.ineq_duals;

    // Largest sign violation; rows first, then bounds, lowest index on ties.
    Scalar worst = tiny;
    Eigen::Index worst_row = -1, worst_var = -1;
    for (auto r : active_rows)
      if (-s.ineq_duals(r) > worst) {
        worst = -s.ineq_duals(r);
        worst_row = r;
      }
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar w = -grad(j);
      const Scalar wrong = state[std::size_t(j)] == Fix::lower ? w : state[std::size_t(j)] == Fix::upper ? -w : 0;
      if (wrong > worst) {
        worst = wrong;
        worst_row = -1;
        worst_var = j;
      }
    }
    if (worst_var >= 0) {
      state[std::size_t(worst_var)] = Fix::free;
      continue;
    }
    if (worst_row >= 0) {
      active_rows.erase(std::find(active_rows.begin(), active_rows.end(), worst_row));
      continue;
    }

    s.ineq_duals = s.ineq_duals.cwiseMax(Scalar(0));
    s.bound_duals = Vector<Scalar>::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar w = -grad(j);
      switch (state[std::size_t(j)]) {
        case Fix::free: break;
        case Fix::fixed: s.bound_duals(j) = w; break;
        case Fix::lower: s.bound_duals(j) = std::min(w, Scalar(0)); break;
        case Fix::upper: s.bound_duals(j) = std::max(w, Scalar(0)); break;
      }
    }
    s.kkt_residual = kkt_residual(p, s);
    s.objective = p.objective(s.x);
    s.polished = true;
    return s;
  }
  return std::nullopt;
}

// Minimizes the total elastic violation of the constraints; the optimal value
// is zero exactly when the problem is feasible.
template <typename Scalar>
Scalar phase_one_violation(const QpProblem<Scalar>& p, const SolverOptions& opt) {
  const auto n = p.size();
  const auto me = p.num_eq();
  const auto mi = p.num_ineq();
  const auto nv = n + 2 * me + mi;
  QpProblem<Scalar> lp(nv);
  lp.lb.head(n) = p.lb;
  lp.ub.head(n) = p.ub;
  lp.lb.tail(nv - n).setZero();
  lp.c.tail(nv - n).setOnes();
  lp.A = Matrix<Scalar>::Zero(me, nv);
  lp.b = p.b;
  if (me > 0) {
    lp.A.leftCols(n) = p.A;
    lp.A.middleCols(n, me) = Matrix<Scalar>::Identity(me, me);
    lp.A.middleCols(n + me, me) = -Matrix<Scalar>::Identity(me, me);
  }
  lp.G = Matrix<Scalar>::Zero(mi, nv);
  lp.h = p.h;
  if (mi > 0) {
    lp.G.leftCols(n) = p.G;
    lp.G.rightCols(mi) = -Matrix<Scalar>::Identity(mi, mi);
  }
  SolverOptions inner = opt;
  inner.polish = false;
  inner.detect_infeasibility = false;
  inner.max_iterations = std::max(opt.max_iterations, 200);
  const auto f = standardize(lp);
  const auto r = interior_point(lp, f, inner, static_cast<const Vector<Scalar>*>(nullptr));
  return lp.objective(r.it.x);
}

}  // namespace detail

template <typename Scalar>
QpSolution<Scalar> solve(const QpProblem<Scalar>& p, const SolverOptions& opt,
                         const Vector<Scalar>* warm_start) {
  p.validate();
  const auto f = detail::standardize(p);
  const auto r = detail::interior_point(p, f, opt, warm_start);
  QpSolution<Scalar> best = detail::to_public(p, f, r.it);
  best.iterations = r.iterations;

  if (opt.polish && !r.diverged) {
    if (auto polished = detail::polish(p, f, r.it, Scalar(opt.kkt_tol))) {
      if (polished->kkt_residual <= Scalar(opt.kkt_tol) || polished->kkt_residual <= best.kkt_residual) {
        polished->iterations = r.iterations;
        best = std::move(*polished);
      }
    }
  }
  if (best.kkt_residual <= Scalar(opt.kkt_tol) && !r.diverged) {
    best.status = QpStatus::optimal;
    return best;
  }
  best.status = QpStatus::iteration_limit;
  if (opt.detect_infeasibility) {
    const Scalar violation = detail::phase_one_violation(p, opt);
    const Scalar scale = Scalar(1) + std::max(detail::inf_norm<Scalar>(p.b), detail::inf_norm<Scalar>(p.h));
    if (violation > Scalar(1e-6) * scale) best.status = QpStatus::infeasible;
  }
  return best;
}

template <typename Scalar>
QpSolution<Scalar> solve(const QpProblem<Scalar>& p, const SolverOptions& opt = {}) {
  return solve(p, opt, static_cast<const Vector<Scalar>*>(nullptr));
}

template <typename Scalar>
QpSolution<Scalar> solve(const QpProblem<Scalar>& p, const SolverOptions& opt, const Vector<Scalar>& warm_start) {
  return solve(p, opt, &warm_start);
}

}  // namespace gridbroker::qp
