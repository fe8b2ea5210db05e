#include "gridbroker/community_agent.hpp"

#include "gridbroker/errors.hpp"

#include <spdlog/spdlog.h>

namespace gridbroker {

namespace {

struct Layout {
  Eigen::Index T;
  bool reserves;
  Eigen::Index p_g(Eigen::Index t) const { return t; }
  Eigen::Index p_b(Eigen::Index t) const { return T + t; }
  Eigen::Index p_exp(Eigen::Index t) const { return 2 * T + t; }
  Eigen::Index e(Eigen::Index t) const { return 3 * T + t; }
  Eigen::Index r_g(Eigen::Index t) const { return 4 * T + 1 + t; }
  Eigen::Index r_b(Eigen::Index t) const { return 5 * T + 1 + t; }
  Eigen::Index size() const { return reserves ? 6 * T + 1 : 4 * T + 1; }
};

// Balance rows come first (their duals are the local energy prices), then
// the battery energy dynamics.
qp::QpProblemd build(const CommunitySpec& spec, const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu) {
  const auto T = spec.load_profile.size();
  const Layout L{T, (mu.array() > 0).any()};
  const auto& g = spec.generator;
  const auto& b = spec.battery;
  qp::QpProblemd p(L.size());
  p.A = Eigen::MatrixXd::Zero(2 * T, L.size());
  p.b = Eigen::VectorXd::Zero(2 * T);
  for (Eigen::Index t = 0; t < T; ++t) {
    p.q_diag(L.p_g(t)) = g.cost_alpha;
    p.c(L.p_g(t)) = g.cost_beta;
    p.lb(L.p_g(t)) = g.p_min;
    p.ub(L.p_g(t)) = g.p_max;
    p.lb(L.p_b(t)) = b.p_min;
    p.ub(L.p_b(t)) = b.p_max;
    p.c(L.p_exp(t)) = -lambda(t);

    p.A(t, L.p_g(t)) = 1;
    p.A(t, L.p_b(t)) = -1;
    p.A(t, L.p_exp(t)) = -1;
    p.b(t) = spec.load_profile(t) - spec.pv_profile(t);

    p.A(T + t, L.e(t + 1)) = 1;
    p.A(T + t, L.e(t)) = -1;
    p.A(T + t, L.p_b(t)) = -1;
  }
  for (Eigen::Index t = 0; t <= T; ++t) {
    p.lb(L.e(t)) = b.e_min;
    p.ub(L.e(t)) = b.e_max;
  }
  p.lb(L.e(0)) = p.ub(L.e(0)) = b.e_init;
  p.lb(L.e(T)) = p.ub(L.e(T)) = b.e_init;
  p.offset = double(T) * g.cost_gamma;

  if (L.reserves) {
    p.G = Eigen::MatrixXd::Zero(2 * T, L.size());
    p.h.resize(2 * T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const double m = std::max(mu(t), 0.0);
      p.c(L.r_g(t)) = -m;
      p.c(L.r_b(t)) = -m;
      p.lb(L.r_g(t)) = 0;
      p.ub(L.r_g(t)) = g.r_max;
      p.lb(L.r_b(t)) = 0;
      p.G(t, L.r_g(t)) = 1;
      p.G(t, L.p_g(t)) = 1;
      p.h(t) = g.p_max;
      p.G(T + t, L.r_b(t)) = 1;
      p.G(T + t, L.p_b(t)) = -1;
      p.h(T + t) = -b.p_min;
    }
  }
  return p;
}

qp::QpSolutiond solve_checked(const qp::QpProblemd& p, const qp::SolverOptions& opt, const CommunitySpec& spec,
                              const char* what) {
  auto s = qp::solve(p, opt);
  if (s.status == qp::QpStatus::infeasible) throw InfeasibleError("community " + spec.name, -1, what);
  if (!s.optimal()) {
    spdlog::warn("community {}: {} solve stopped with KKT residual {:.3e}", spec.name, what, s.kkt_residual);
    throw SolverError("community " + spec.name + ": " + what + " solve did not converge");
  }
  return s;
}

CommunitySchedule unpack(const CommunitySpec& spec, const qp::QpSolutiond& s, const Eigen::VectorXd& lambda,
                         const Eigen::VectorXd& mu) {
  const auto T = spec.load_profile.size();
  const Layout L{T, false};
  CommunitySchedule out;
  out.p_g = s.x.segment(L.p_g(0), T);
  out.p_b = s.x.segment(L.p_b(0), T);
  out.e = s.x.segment(L.e(0), T + 1);
  // Recompute the dependent quantities so the balance and energy identities
  // hold to rounding rather than to solver tolerance.
  out.e(0) = spec.battery.e_init;
  for (Eigen::Index t = 0; t < T; ++t) out.e(t + 1) = out.e(t) + out.p_b(t);
  out.p_exp = out.p_g - out.p_b - spec.load_profile + spec.pv_profile;
  out.r_g = (spec.generator.p_max - out.p_g.array()).cwiseMin(spec.generator.r_max).cwiseMax(0.0);
  out.r_b = (out.p_b.array() - spec.battery.p_min).cwiseMax(0.0);
  out.r_total = out.r_g + out.r_b;
  out.local_cost = 0;
  for (Eigen::Index t = 0; t < T; ++t) out.local_cost += spec.generator.cost(out.p_g(t));
  out.objective = out.local_cost - lambda.dot(out.p_exp) - mu.cwiseMax(0.0).dot(out.r_total);
  return out;
}

void check_horizon(const CommunitySpec& spec, Eigen::Index n, const char* what) {
  if (n != spec.load_profile.size())
    throw std::invalid_argument("community " + spec.name + ": " + what + " length differs from horizon");
}

}  // namespace

CommunitySchedule dispatch(const CommunitySpec& spec, const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                           const qp::SolverOptions& opt) {
  check_horizon(spec, lambda.size(), "lambda");
  check_horizon(spec, mu.size(), "mu");
  const auto p = build(spec, lambda, mu);
  const auto s = solve_checked(p, opt, spec, "battery");
  return unpack(spec, s, lambda, mu);
}

PriceResponse price_response(const CommunitySpec& spec, const Eigen::VectorXd& p_demand,
                             const CommunityLimits& limits, const qp::SolverOptions& opt) {
  const auto T = spec.load_profile.size();
  check_horizon(spec, p_demand.size(), "demand");
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(T);
  auto p = build(spec, zero, zero);
  const Layout L{T, false};
  const Eigen::VectorXd target = p_demand.cwiseMax(limits.p_exp_min).cwiseMin(limits.p_exp_max);
  for (Eigen::Index t = 0; t < T; ++t) p.lb(L.p_exp(t)) = p.ub(L.p_exp(t)) = target(t);
  const auto s = solve_checked(p, opt, spec, "export limits");
  PriceResponse r;
  r.lambda = s.eq_duals.head(T);
  r.schedule = unpack(spec, s, r.lambda, zero);
  r.schedule.p_exp = target;  // exact, the balance identity holds to rounding
  return r;
}

CommunityLimits update_limits(const CommunitySpec& spec, const CommunitySchedule& previous) {
  const auto& g = spec.generator;
  const Eigen::ArrayXd net = spec.pv_profile.array() - spec.load_profile.array() - previous.p_b.array();
  CommunityLimits l;
  l.p_exp_min = (g.p_min + net).matrix();
  l.p_exp_max = (g.p_max + net).matrix();
  l.r_max = (g.r_max - spec.battery.p_min + previous.p_b.array()).cwiseMax(0.0).matrix();
  l.p_up_max = (g.p_max - spec.battery.p_min + spec.pv_profile.array() - spec.load_profile.array()).matrix();
  return l;
}

CommunityLimits physical_limits(const CommunitySpec& spec) {
  const auto& g = spec.generator;
  const auto& b = spec.battery;
  const Eigen::ArrayXd net = spec.pv_profile.array() - spec.load_profile.array();
  CommunityLimits l;
  l.p_exp_min = (g.p_min - b.p_max + net).matrix();
  l.p_exp_max = (g.p_max - b.p_min + net).matrix();
  l.r_max = Eigen::VectorXd::Constant(net.size(), g.r_max + b.p_max - b.p_min);
  l.p_up_max = l.p_exp_max;
  return l;
}

Eigen::VectorXd reserve_capability(const CommunitySpec& spec, const CommunitySchedule& s) {
  return ((spec.generator.p_max - s.p_g.array()).cwiseMin(spec.generator.r_max).cwiseMax(0.0) +
          (s.p_b.array() - spec.battery.p_min).cwiseMax(0.0))
      .matrix();
}

}  // namespace gridbroker
