#include "gridbroker/centralized.hpp"

#include "gridbroker/errors.hpp"
#include "gridbroker/network.hpp"

#include <spdlog/spdlog.h>

namespace gridbroker {

namespace {

// Variable layout: per hour a block of utility and community quantities,
// then one energy trajectory per community.
struct Layout {
  Eigen::Index T, ng, nc, nb, nbr;
  Eigen::Index per_hour() const { return 2 * ng + nb + nbr + 5 * nc; }
  Eigen::Index base(Eigen::Index t) const { return t * per_hour(); }
  Eigen::Index p_g(Eigen::Index t, Eigen::Index i) const { return base(t) + i; }
  Eigen::Index r_g(Eigen::Index t, Eigen::Index i) const { return base(t) + ng + i; }
  Eigen::Index theta(Eigen::Index t, Eigen::Index k) const { return base(t) + 2 * ng + k; }
  Eigen::Index flow(Eigen::Index t, Eigen::Index k) const { return base(t) + 2 * ng + nb + k; }
  Eigen::Index c_var(Eigen::Index t, Eigen::Index j, int what) const {
    return base(t) + 2 * ng + nb + nbr + 5 * j + what;
  }
  // what: 0 generation, 1 battery power, 2 export, 3 generator reserve, 4 battery reserve
  Eigen::Index energy(Eigen::Index j, Eigen::Index t) const { return T * per_hour() + j * (T + 1) + t; }
  Eigen::Index size() const { return T * per_hour() + nc * (T + 1); }
};

}  // namespace

CentralizedSolution solve_centralized(const ScenarioSpec& sc, const qp::SolverOptions& opt) {
  validate(sc);
  const auto& net = sc.network;
  const Layout L{sc.horizon, sc.n_utility_generators(), sc.n_communities(), net.n_buses(), net.n_branches()};
  const auto T = L.T;

  // Equality rows per hour: bus balances, flow definitions, community
  // balances; then battery dynamics per community. Inequalities per hour:
  // utility headroom, community generator headroom, battery reserve, reserve requirement.
  const auto eq_per_hour = L.nb + L.nbr + L.nc;
  const auto n_eq = T * eq_per_hour + L.nc * T;
  const auto ineq_per_hour = L.ng + 2 * L.nc + 1;
  const auto n_ineq = T * ineq_per_hour;
  qp::QpProblemd p(L.size());
  p.A = Eigen::MatrixXd::Zero(n_eq, L.size());
  p.b = Eigen::VectorXd::Zero(n_eq);
  p.G = Eigen::MatrixXd::Zero(n_ineq, L.size());
  p.h = Eigen::VectorXd::Zero(n_ineq);

  for (Eigen::Index t = 0; t < T; ++t) {
    const auto row0 = t * eq_per_hour;
    const auto irow0 = t * ineq_per_hour;
    const auto reserve_row = irow0 + L.ng + 2 * L.nc;
    p.b.segment(row0, L.nb) = scaled_load(sc, int(t));
    p.h(reserve_row) = -reserve_requirement(sc, int(t));

    for (Eigen::Index i = 0; i < L.ng; ++i) {
      const auto& g = sc.utility_generators[std::size_t(i)];
      p.q_diag(L.p_g(t, i)) = g.cost_alpha;
      p.c(L.p_g(t, i)) = g.cost_beta;
      p.lb(L.p_g(t, i)) = g.p_min;
      p.ub(L.p_g(t, i)) = g.p_max;
      p.lb(L.r_g(t, i)) = 0;
      p.ub(L.r_g(t, i)) = g.r_max;
      p.A(row0 + net.index_of(g.bus_id), L.p_g(t, i)) = 1;
      p.G(irow0 + i, L.p_g(t, i)) = 1;
      p.G(irow0 + i, L.r_g(t, i)) = 1;
      p.h(irow0 + i) = g.p_max;
      p.G(reserve_row, L.r_g(t, i)) = -1;
      p.offset += g.cost_gamma;
    }
    for (Eigen::Index k = 0; k < L.nb; ++k)
      if (net.bus_ids[std::size_t(k)] == net.slack_bus) p.lb(L.theta(t, k)) = p.ub(L.theta(t, k)) = 0;
    for (Eigen::Index k = 0; k < L.nbr; ++k) {
      const auto& br = net.branches[std::size_t(k)];
      const auto from = net.index_of(br.from_bus), to = net.index_of(br.to_bus);
      const double y = net.base_mva * br.susceptance;
      p.A(row0 + from, L.flow(t, k)) = -1;
      p.A(row0 + to, L.flow(t, k)) = 1;
      p.A(row0 + L.nb + k, L.flow(t, k)) = 1;
      p.A(row0 + L.nb + k, L.theta(t, from)) = -y;
      p.A(row0 + L.nb + k, L.theta(t, to)) = y;
      p.lb(L.flow(t, k)) = -br.flow_limit;
      p.ub(L.flow(t, k)) = br.flow_limit;
    }
    for (Eigen::Index j = 0; j < L.nc; ++j) {
      const auto& c = sc.communities[std::size_t(j)];
      const auto& g = c.generator;
      const auto pg = L.c_var(t, j, 0), pb = L.c_var(t, j, 1), px = L.c_var(t, j, 2);
      const auto rg = L.c_var(t, j, 3), rb = L.c_var(t, j, 4);
      p.q_diag(pg) = g.cost_alpha;
      p.c(pg) = g.cost_beta;
      p.lb(pg) = g.p_min;
      p.ub(pg) = g.p_max;
      p.lb(pb) = c.battery.p_min;
      p.ub(pb) = c.battery.p_max;
      p.lb(rg) = 0;
      p.ub(rg) = g.r_max;
      p.lb(rb) = 0;
      p.offset += g.cost_gamma;
      p.A(row0 + net.index_of(c.bus_id), px) = 1;
      const auto crow = row0 + L.nb + L.nbr + j;
      p.A(crow, pg) = 1;
      p.A(crow, pb) = -1;
      p.A(crow, px) = -1;
      p.b(crow) = c.load_profile(t) - c.pv_profile(t);
      p.G(irow0 + L.ng + j, pg) = 1;
      p.G(irow0 + L.ng + j, rg) = 1;
      p.h(irow0 + L.ng + j) = g.p_max;
      p.G(irow0 + L.ng + L.nc + j, rb) = 1;
      p.G(irow0 + L.ng + L.nc + j, pb) = -1;
      p.h(irow0 + L.ng + L.nc + j) = -c.battery.p_min;
      p.G(reserve_row, rg) = -1;
      p.G(reserve_row, rb) = -1;
      const auto drow = T * eq_per_hour + j * T + t;
      p.A(drow, L.energy(j, t + 1)) = 1;
      p.A(drow, L.energy(j, t)) = -1;
      p.A(drow, pb) = -1;
    }
  }
  for (Eigen::Index j = 0; j < L.nc; ++j) {
    const auto& b = sc.communities[std::size_t(j)].battery;
    for (Eigen::Index t = 0; t <= T; ++t) {
      p.lb(L.energy(j, t)) = b.e_min;
      p.ub(L.energy(j, t)) = b.e_max;
    }
    p.lb(L.energy(j, 0)) = p.ub(L.energy(j, 0)) = b.e_init;
    p.lb(L.energy(j, T)) = p.ub(L.energy(j, T)) = b.e_init;
  }

  const auto s = qp::solve(p, opt);
  if (s.status == qp::QpStatus::infeasible) throw InfeasibleError("centralized", -1, "");
  CentralizedSolution out;
  out.status = s.status;
  out.kkt_residual = s.kkt_residual;
  out.iterations = s.iterations;
  if (!s.optimal()) spdlog::warn("centralized: solve stopped with KKT residual {:.3e}", s.kkt_residual);

  const auto gens = sc.all_generators();
  out.dispatch = Eigen::MatrixXd::Zero(T, Eigen::Index(gens.size()));
  out.lmp = Eigen::MatrixXd::Zero(T, L.nb);
  out.community_price = Eigen::MatrixXd::Zero(T, L.nc);
  out.reserve_price = Eigen::VectorXd::Zero(T);
  auto& u = out.utility;
  u.p_g = Eigen::MatrixXd::Zero(T, L.ng);
  u.r_g = Eigen::MatrixXd::Zero(T, L.ng);
  u.p_imp = Eigen::MatrixXd::Zero(T, L.nc);
  u.r_imp = Eigen::MatrixXd::Zero(T, L.nc);
  u.theta = Eigen::MatrixXd::Zero(T, L.nb);
  u.lmp = Eigen::MatrixXd::Zero(T, L.nb);
  out.communities.resize(std::size_t(L.nc));
  for (Eigen::Index j = 0; j < L.nc; ++j) {
    auto& cs = out.communities[std::size_t(j)];
    cs.p_g = cs.p_b = cs.p_exp = cs.r_g = cs.r_b = cs.r_total = Eigen::VectorXd::Zero(T);
    cs.e = Eigen::VectorXd::Zero(T + 1);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto row0 = t * eq_per_hour;
    for (Eigen::Index i = 0; i < L.ng; ++i) {
      const auto& g = sc.utility_generators[std::size_t(i)];
      u.p_g(t, i) = s.x(L.p_g(t, i));
      u.r_g(t, i) = std::clamp(g.p_max - u.p_g(t, i), 0.0, g.r_max);
    }
    for (Eigen::Index k = 0; k < L.nb; ++k) u.theta(t, k) = s.x(L.theta(t, k));
    out.lmp.row(t) = s.eq_duals.segment(row0, L.nb).transpose();
    out.community_price.row(t) = s.eq_duals.segment(row0 + L.nb + L.nbr, L.nc).transpose();
    out.reserve_price(t) = s.ineq_duals(t * ineq_per_hour + L.ng + 2 * L.nc);
    for (Eigen::Index j = 0; j < L.nc; ++j) {
      auto& cs = out.communities[std::size_t(j)];
      cs.p_g(t) = s.x(L.c_var(t, j, 0));
      cs.p_b(t) = s.x(L.c_var(t, j, 1));
    }
  }
  u.lmp = out.lmp;
  u.flows = branch_flows(net, u.theta.transpose()).transpose();
  for (Eigen::Index j = 0; j < L.nc; ++j) {
    const auto& c = sc.communities[std::size_t(j)];
    auto& cs = out.communities[std::size_t(j)];
    cs.e(0) = c.battery.e_init;
    for (Eigen::Index t = 0; t < T; ++t) cs.e(t + 1) = cs.e(t) + cs.p_b(t);
    cs.p_exp = cs.p_g - cs.p_b - c.load_profile + c.pv_profile;
    cs.r_total = reserve_capability(c, cs);
    cs.r_g = (c.generator.p_max - cs.p_g.array()).cwiseMin(c.generator.r_max).cwiseMax(0.0);
    cs.r_b = cs.r_total - cs.r_g;
    cs.local_cost = 0;
    for (Eigen::Index t = 0; t < T; ++t) cs.local_cost += c.generator.cost(cs.p_g(t));
    cs.objective = cs.local_cost;
    u.p_imp.col(j) = cs.p_exp;
    u.r_imp.col(j) = cs.r_total;
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < L.ng; ++i) out.dispatch(t, i) = u.p_g(t, i);
    for (Eigen::Index j = 0; j < L.nc; ++j) out.dispatch(t, L.ng + j) = out.communities[std::size_t(j)].p_g(t);
  }
  u.utility_cost = 0;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < L.ng; ++i) u.utility_cost += sc.utility_generators[std::size_t(i)].cost(u.p_g(t, i));
  u.objective = u.utility_cost;
  out.total_cost = total_cost(sc, out.dispatch);
  return out;
}

}  // namespace gridbroker
