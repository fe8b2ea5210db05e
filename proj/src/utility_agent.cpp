#include "gridbroker/utility_agent.hpp"

#include "gridbroker/errors.hpp"
#include "gridbroker/network.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <vector>

namespace gridbroker {

namespace {

struct HourLayout {
  Eigen::Index ng, nc, nb, nbr;
  bool utility_reserve;
  bool import_reserve;
  Eigen::Index p_g(Eigen::Index i) const { return i; }
  Eigen::Index p_imp(Eigen::Index j) const { return ng + j; }
  Eigen::Index theta(Eigen::Index k) const { return ng + nc + k; }
  Eigen::Index flow(Eigen::Index k) const { return ng + nc + nb + k; }
  Eigen::Index r_g(Eigen::Index i) const { return ng + nc + nb + nbr + i; }
  Eigen::Index r_imp(Eigen::Index j) const { return ng + nc + nb + nbr + (utility_reserve ? ng : 0) + j; }
  Eigen::Index size() const {
    return ng + nc + nb + nbr + (utility_reserve ? ng : 0) + (import_reserve ? nc : 0);
  }
};

struct Relax {
  bool flows = false;
  bool reserve = false;
};

// Rows: bus balances (duals are the nodal prices), then branch flow
// definitions. Inequalities: generator headroom, community export-plus-reserve
// caps (hard mode), then the reserve requirement.
qp::QpProblemd build_hour(const ScenarioSpec& sc, int t, const Eigen::MatrixXd& lambda, const ReserveTerms& reserve,
                          const std::vector<CommunityLimits>& limits, const HourLayout& L, Relax relax) {
  const auto& net = sc.network;
  const Eigen::VectorXd load = scaled_load(sc, t);
  qp::QpProblemd p(L.size());
  p.A = Eigen::MatrixXd::Zero(L.nb + L.nbr, L.size());
  p.b = Eigen::VectorXd::Zero(L.nb + L.nbr);
  p.b.head(L.nb) = load;

  for (Eigen::Index i = 0; i < L.ng; ++i) {
    const auto& g = sc.utility_generators[std::size_t(i)];
    p.q_diag(L.p_g(i)) = g.cost_alpha;
    p.c(L.p_g(i)) = g.cost_beta;
    p.lb(L.p_g(i)) = g.p_min;
    p.ub(L.p_g(i)) = g.p_max;
    p.A(net.index_of(g.bus_id), L.p_g(i)) = 1;
    p.offset += g.cost_gamma;
  }
  for (Eigen::Index j = 0; j < L.nc; ++j) {
    const auto& lim = limits[std::size_t(j)];
    p.c(L.p_imp(j)) = lambda(t, j);
    p.lb(L.p_imp(j)) = lim.p_exp_min(t);
    p.ub(L.p_imp(j)) = lim.p_exp_max(t);
    p.A(net.index_of(sc.communities[std::size_t(j)].bus_id), L.p_imp(j)) = 1;
  }
  for (Eigen::Index k = 0; k < L.nb; ++k)
    if (net.bus_ids[std::size_t(k)] == net.slack_bus) p.lb(L.theta(k)) = p.ub(L.theta(k)) = 0;
  for (Eigen::Index k = 0; k < L.nbr; ++k) {
    const auto& br = net.branches[std::size_t(k)];
    const auto from = net.index_of(br.from_bus), to = net.index_of(br.to_bus);
    const double y = net.base_mva * br.susceptance;
    p.A(from, L.flow(k)) = -1;
    p.A(to, L.flow(k)) = 1;
    p.A(L.nb + k, L.flow(k)) = 1;
    p.A(L.nb + k, L.theta(from)) = -y;
    p.A(L.nb + k, L.theta(to)) = y;
    if (!relax.flows) {
      p.lb(L.flow(k)) = -br.flow_limit;
      p.ub(L.flow(k)) = br.flow_limit;
    }
  }

  const bool hard = reserve.mode == ReserveMode::hard && !relax.reserve;
  std::vector<Eigen::Index> capped;
  if (L.import_reserve)
    for (Eigen::Index j = 0; j < L.nc; ++j)
      if (limits[std::size_t(j)].p_up_max.size() > 0) capped.push_back(j);
  const Eigen::Index n_head = L.utility_reserve ? L.ng : 0;
  const Eigen::Index n_cap = static_cast<Eigen::Index>(capped.size());
  const Eigen::Index n_ineq = n_head + n_cap + (hard ? 1 : 0);
  p.G = Eigen::MatrixXd::Zero(n_ineq, L.size());
  p.h = Eigen::VectorXd::Zero(n_ineq);
  if (L.utility_reserve) {
    for (Eigen::Index i = 0; i < L.ng; ++i) {
      const auto& g = sc.utility_generators[std::size_t(i)];
      p.lb(L.r_g(i)) = 0;
      p.ub(L.r_g(i)) = g.r_max;
      if (reserve.mode == ReserveMode::priced) p.c(L.r_g(i)) = -std::max(reserve.mu(t), 0.0);
      p.G(i, L.r_g(i)) = 1;
      p.G(i, L.p_g(i)) = 1;
      p.h(i) = g.p_max;
    }
  }
  if (L.import_reserve) {
    for (Eigen::Index j = 0; j < L.nc; ++j) {
      p.lb(L.r_imp(j)) = 0;
      p.ub(L.r_imp(j)) = limits[std::size_t(j)].r_max(t);
    }
    for (Eigen::Index k = 0; k < n_cap; ++k) {
      const auto j = capped[std::size_t(k)];
      p.G(n_head + k, L.p_imp(j)) = 1;
      p.G(n_head + k, L.r_imp(j)) = 1;
      p.h(n_head + k) = limits[std::size_t(j)].p_up_max(t);
    }
  }
  if (hard) {
    const auto row = n_ineq - 1;
    for (Eigen::Index i = 0; i < L.ng; ++i) p.G(row, L.r_g(i)) = -1;
    for (Eigen::Index j = 0; j < L.nc; ++j) p.G(row, L.r_imp(j)) = -1;
    p.h(row) = -reserve.requirement(t);
  }
  return p;
}

HourLayout layout(const ScenarioSpec& sc, const ReserveTerms& reserve, int t) {
  HourLayout L{sc.n_utility_generators(), sc.n_communities(), sc.network.n_buses(), sc.network.n_branches(),
               false, false};
  L.utility_reserve = reserve.mode == ReserveMode::hard || reserve.mu(t) > 0;
  L.import_reserve = reserve.mode == ReserveMode::hard;
  return L;
}

std::string diagnose(const ScenarioSpec& sc, int t, const Eigen::MatrixXd& lambda, const ReserveTerms& reserve,
                     const std::vector<CommunityLimits>& limits, const HourLayout& L, const qp::SolverOptions& opt) {
  auto feasible = [&](Relax r) {
    return qp::solve(build_hour(sc, t, lambda, reserve, limits, L, r), opt).status != qp::QpStatus::infeasible;
  };
  if (feasible({.flows = true, .reserve = false})) return "flow";
  if (reserve.mode == ReserveMode::hard && feasible({.flows = false, .reserve = true})) return "reserve";
  return "balance";
}

}  // namespace

void dispatch_utility_hour(const ScenarioSpec& sc, int t, const Eigen::MatrixXd& lambda, const ReserveTerms& reserve,
                           const std::vector<CommunityLimits>& limits, const qp::SolverOptions& opt,
                           UtilitySchedule& out) {
  const auto L = layout(sc, reserve, t);
  const auto p = build_hour(sc, t, lambda, reserve, limits, L, {});
  const auto s = qp::solve(p, opt);
  if (s.status == qp::QpStatus::infeasible)
    throw InfeasibleError("utility", t, diagnose(sc, t, lambda, reserve, limits, L, opt));
  if (!s.optimal()) {
    spdlog::warn("utility: hour {} solve stopped with KKT residual {:.3e}", t, s.kkt_residual);
    throw SolverError("utility: hour " + std::to_string(t) + " solve did not converge");
  }

  double cost = 0;
  double reserve_total = 0;
  for (Eigen::Index i = 0; i < L.ng; ++i) {
    const auto& g = sc.utility_generators[std::size_t(i)];
    const double pg = s.x(L.p_g(i));
    out.p_g(t, i) = pg;
    // Largest reserve consistent with the dispatch; optimal for any mu >= 0.
    out.r_g(t, i) = std::clamp(g.p_max - pg, 0.0, g.r_max);
    reserve_total += out.r_g(t, i);
    cost += g.cost(pg);
  }
  double remaining = reserve.mode == ReserveMode::hard ? std::max(reserve.requirement(t) - reserve_total, 0.0) : 0.0;
  for (Eigen::Index j = 0; j < L.nc; ++j) {
    out.p_imp(t, j) = s.x(L.p_imp(j));
    const auto& lim = limits[std::size_t(j)];
    double cap = lim.r_max(t);
    if (lim.p_up_max.size() > 0) cap = std::min(cap, std::max(lim.p_up_max(t) - out.p_imp(t, j), 0.0));
    const double take = std::min(remaining, cap);
    out.r_imp(t, j) = take;
    remaining -= take;
  }
  for (Eigen::Index k = 0; k < L.nb; ++k) out.theta(t, k) = s.x(L.theta(k));
  out.flows.row(t) = branch_flows(sc.network, out.theta.row(t).transpose()).transpose();
  out.lmp.row(t) = s.eq_duals.head(L.nb).transpose();
  out.utility_cost += cost;
  out.objective += cost + lambda.row(t).dot(out.p_imp.row(t));
  if (reserve.mode == ReserveMode::priced) out.objective -= std::max(reserve.mu(t), 0.0) * reserve_total;
}

UtilitySchedule dispatch_utility(const ScenarioSpec& sc, const Eigen::MatrixXd& lambda, const ReserveTerms& reserve,
                                 const std::vector<CommunityLimits>& limits, const qp::SolverOptions& opt) {
  const int T = sc.horizon;
  const auto nc = sc.n_communities();
  if (lambda.rows() != T || lambda.cols() != nc)
    throw std::invalid_argument("dispatch_utility: lambda must be horizon x n_communities");
  if (static_cast<int>(limits.size()) != nc) throw std::invalid_argument("dispatch_utility: one limit set per community");
  if (reserve.mode == ReserveMode::priced && reserve.mu.size() != T)
    throw std::invalid_argument("dispatch_utility: mu must have one entry per hour");
  if (reserve.mode == ReserveMode::hard && reserve.requirement.size() != T)
    throw std::invalid_argument("dispatch_utility: reserve requirement must have one entry per hour");
  UtilitySchedule out;
  out.p_g = Eigen::MatrixXd::Zero(T, sc.n_utility_generators());
  out.r_g = Eigen::MatrixXd::Zero(T, sc.n_utility_generators());
  out.p_imp = Eigen::MatrixXd::Zero(T, nc);
  out.r_imp = Eigen::MatrixXd::Zero(T, nc);
  out.theta = Eigen::MatrixXd::Zero(T, sc.network.n_buses());
  out.flows = Eigen::MatrixXd::Zero(T, sc.network.n_branches());
  out.lmp = Eigen::MatrixXd::Zero(T, sc.network.n_buses());
  for (int t = 0; t < T; ++t) dispatch_utility_hour(sc, t, lambda, reserve, limits, opt, out);
  return out;
}

Eigen::VectorXd reserve_gap(const UtilitySchedule& schedule, const Eigen::VectorXd& requirement,
                            const Eigen::VectorXd& community_reserves) {
  return requirement - schedule.r_g.rowwise().sum() - community_reserves;
}

Eigen::VectorXd reserve_requirements(const ScenarioSpec& sc) {
  Eigen::VectorXd r(sc.horizon);
  for (int t = 0; t < sc.horizon; ++t) r(t) = reserve_requirement(sc, t);
  return r;
}

ScenarioSpec utility_view(const ScenarioSpec& sc) {
  ScenarioSpec v = sc;
  for (auto& c : v.communities) {
    c.generator = GeneratorSpec{};
    c.generator.bus_id = c.bus_id;
    c.battery = BatterySpec{};
    c.pv_profile = Eigen::VectorXd::Zero(sc.horizon);
    c.load_profile = Eigen::VectorXd::Zero(sc.horizon);
  }
  return v;
}

}  // namespace gridbroker
