#include "gridbroker/coordinator.hpp"

#include "gridbroker/csv.hpp"
#include "gridbroker/errors.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <ostream>

namespace gridbroker {

const char* to_string(Protocol p) { return p == Protocol::subgradient ? "subgradient" : "lubs"; }

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::iteration_limit: return "iteration-limit";
    case RunStatus::failed: return "failed";
  }
  return "unknown";
}

std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "subgradient") return Protocol::subgradient;
  if (s == "lubs") return Protocol::lubs;
  return std::nullopt;
}

void CoordinatorConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (!(alpha > 0)) fail("alpha must be positive");
  if (!(beta > 0)) fail("beta must be positive");
  if (!(sigma > 0 && sigma <= 1)) fail("sigma must lie in (0, 1]");
  if (!(eps_p > 0) || !(eps_r > 0) || !(eps_lambda > 0) || !(eps_cost > 0)) fail("tolerances must be positive");
  if (max_iters < 1) fail("max_iters must be at least 1");
  if (alpha_scale.size() > 0 && !(alpha_scale.array() > 0).all()) fail("alpha_scale entries must be positive");
}

namespace {

// A community as seen from outside: it keeps its spec private and only
// answers messages.
class CommunityAgent {
 public:
  CommunityAgent(CommunitySpec spec, const qp::SolverOptions& opt) : spec_(std::move(spec)), opt_(opt) {}

  // Price-taking role.
  CommunityReport on_prices(const PriceSignal& prices, Eigen::Index column) {
    const Eigen::VectorXd lambda = prices.lambda.col(column);
    schedule_ = dispatch(spec_, lambda, prices.mu, opt_);
    CommunityReport r;
    r.iteration = prices.iteration;
    r.community = spec_.name;
    r.p_exp = schedule_.p_exp;
    r.r_total = schedule_.r_total;
    r.limits = physical_limits(spec_);
    r.local_cost = schedule_.local_cost;
    r.dual_value = schedule_.objective;
    return r;
  }

  // Opening announcement of the demand-driven protocol.
  CommunityLimits open(const Eigen::VectorXd& lambda0) {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(lambda0.size());
    limits_ = update_limits(spec_, dispatch(spec_, lambda0, zero, opt_));
    return limits_;
  }

  // Price-setting role: serve the demanded export, announce marginal prices
  // and refreshed limits.
  CommunityReport on_demand(int iteration, const Eigen::VectorXd& demand, const Eigen::VectorXd& lambda_now) {
    const auto resp = price_response(spec_, demand, limits_, opt_);
    schedule_ = resp.schedule;
    limits_ = update_limits(spec_, schedule_);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(lambda_now.size());
    CommunityReport r;
    r.iteration = iteration;
    r.community = spec_.name;
    r.p_exp = schedule_.p_exp;
    r.r_total = schedule_.r_total;
    r.limits = limits_;
    r.lambda = resp.lambda;
    r.local_cost = schedule_.local_cost;
    r.dual_value = dispatch(spec_, lambda_now, zero, opt_).objective;
    return r;
  }

  const CommunitySchedule& schedule() const { return schedule_; }

 private:
  CommunitySpec spec_;
  qp::SolverOptions opt_;
  CommunitySchedule schedule_;
  CommunityLimits limits_;
};

class UtilityAgent {
 public:
  UtilityAgent(ScenarioSpec view, Eigen::VectorXd requirement, const qp::SolverOptions& opt)
      : view_(std::move(view)), requirement_(std::move(requirement)), opt_(opt) {}

  UtilityReport on_prices(const PriceSignal& prices, const std::vector<CommunityLimits>& limits) {
    schedule_ = dispatch_utility(view_, prices.lambda, {ReserveMode::priced, prices.mu, {}}, limits, opt_);
    return report(prices.iteration, schedule_.objective);
  }

  UtilityReport on_limits(const PriceSignal& prices, const std::vector<CommunityLimits>& limits,
                          const std::vector<CommunityLimits>& widest) {
    const ReserveTerms hard{ReserveMode::hard, {}, requirement_};
    schedule_ = dispatch_utility(view_, prices.lambda, hard, limits, opt_);
    const double dual = dispatch_utility(view_, prices.lambda, hard, widest, opt_).objective;
    return report(prices.iteration, dual);
  }

  const UtilitySchedule& schedule() const { return schedule_; }

 private:
  UtilityReport report(int iteration, double dual) const {
    UtilityReport r;
    r.iteration = iteration;
    r.p_imp = schedule_.p_imp;
    r.r_imp = schedule_.r_imp;
    r.r_g_total = schedule_.r_g.rowwise().sum();
    r.reserve_requirement = requirement_;
    r.utility_cost = schedule_.utility_cost;
    r.dual_value = dual;
    return r;
  }

  ScenarioSpec view_;
  Eigen::VectorXd requirement_;
  qp::SolverOptions opt_;
  UtilitySchedule schedule_;
};

void emit(const MessageSink& sink, std::string_view kind, const std::string& text) {
  if (sink) sink(kind, text);
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() > 0 ? m.cwiseAbs().maxCoeff() : 0.0; }

// Fills the per-iteration gaps and cost from the report.
void measure(IterationRecord& rec) {
  const auto& u = rec.report.utility;
  const auto nc = Eigen::Index(rec.report.communities.size());
  const auto T = u.reserve_requirement.size();
  rec.mismatch = u.p_imp;
  Eigen::VectorXd community_reserve = Eigen::VectorXd::Zero(T);
  rec.cost = u.utility_cost;
  for (Eigen::Index j = 0; j < nc; ++j) {
    const auto& c = rec.report.communities[std::size_t(j)];
    rec.mismatch.col(j) -= c.p_exp;
    community_reserve += c.r_total;
    rec.cost += c.local_cost;
  }
  rec.reserve_deficit = u.reserve_requirement - u.r_g_total - community_reserve;
  rec.gap_p = max_abs(rec.mismatch);
  rec.gap_r = T > 0 ? std::max(0.0, rec.reserve_deficit.maxCoeff()) : 0.0;
}

void check_prices(const ScenarioSpec& sc, const Eigen::MatrixXd& lambda0) {
  if (lambda0.rows() != sc.horizon || lambda0.cols() != sc.n_communities())
    throw std::invalid_argument("initial prices must be horizon x n_communities");
}

}  // namespace

PriceSignal subgradient_step(const PriceSignal& prev, const ScheduleReport& report, const CoordinatorConfig& cfg) {
  if (report.iteration != prev.iteration) throw std::invalid_argument("subgradient_step: report is from another iteration");
  const auto& u = report.utility;
  const auto nc = Eigen::Index(report.communities.size());
  if (u.p_imp.cols() != nc || u.p_imp.rows() != prev.lambda.rows() || prev.lambda.cols() != nc)
    throw std::invalid_argument("subgradient_step: report does not match price dimensions");
  double alpha = cfg.alpha;
  double beta = cfg.beta;
  if (cfg.step_schedule == StepSchedule::diminishing) {
    const double shrink = 1.0 / std::sqrt(double(prev.iteration) + 1.0);
    alpha *= shrink;
    beta *= shrink;
  }
  Eigen::MatrixXd mismatch = u.p_imp;
  Eigen::VectorXd reserve = u.r_g_total;
  for (Eigen::Index j = 0; j < nc; ++j) {
    mismatch.col(j) -= report.communities[std::size_t(j)].p_exp;
    reserve += report.communities[std::size_t(j)].r_total;
  }
  PriceSignal next;
  next.iteration = prev.iteration + 1;
  if (cfg.alpha_scale.size() > 0) {
    next.lambda = prev.lambda + alpha * cfg.alpha_scale.cwiseProduct(mismatch);
  } else {
    next.lambda = prev.lambda + alpha * mismatch;
  }
  next.mu = (prev.mu + beta * (u.reserve_requirement - reserve)).cwiseMax(0.0);
  return next;
}

Verdict check_convergence(const IterationRecord& last, const CoordinatorConfig& cfg, Protocol protocol) {
  if (!std::isfinite(last.gap_p) || !std::isfinite(last.gap_r) || !std::isfinite(last.cost) ||
      !std::isfinite(last.price_change))
    return Verdict::failed;
  if (last.gap_p > cfg.eps_p || last.gap_r > cfg.eps_r) return Verdict::proceed;
  if (protocol == Protocol::subgradient) return last.price_change <= cfg.eps_lambda ? Verdict::converged : Verdict::proceed;
  if (!std::isfinite(last.lower_bound) || !std::isfinite(last.upper_bound)) return Verdict::failed;
  return last.upper_bound - last.lower_bound <= cfg.eps_cost * std::abs(last.upper_bound) ? Verdict::converged
                                                                                           : Verdict::proceed;
}

PriceSignal flat_prices(const ScenarioSpec& sc, double level) {
  PriceSignal p;
  p.lambda = Eigen::MatrixXd::Constant(sc.horizon, sc.n_communities(), level);
  p.mu = Eigen::VectorXd::Zero(sc.horizon);
  return p;
}

NegotiationTrace run_subgradient(const ScenarioSpec& sc, const CoordinatorConfig& cfg, const Eigen::MatrixXd& lambda0,
                                 const Eigen::VectorXd& mu0, const MessageSink& sink) {
  cfg.validate();
  check_prices(sc, lambda0);
  if (mu0.size() != sc.horizon) throw std::invalid_argument("initial reserve prices must have one entry per hour");
  NegotiationTrace trace;
  trace.protocol = Protocol::subgradient;
  trace.reserve_requirement = reserve_requirements(sc);

  std::vector<CommunityAgent> communities;
  for (const auto& c : sc.communities) communities.emplace_back(c, cfg.qp);
  UtilityAgent utility(utility_view(sc), trace.reserve_requirement, cfg.qp);

  PriceSignal prices{0, lambda0, mu0.cwiseMax(0.0)};
  std::vector<CommunityLimits> limits(communities.size());
  try {
    for (int k = 0; k < cfg.max_iters; ++k) {
      prices.iteration = k;
      emit(sink, "price", to_json(prices));
      IterationRecord rec;
      rec.prices = prices;
      rec.report.iteration = k;
      for (std::size_t j = 0; j < communities.size(); ++j) {
        auto r = communities[j].on_prices(prices, Eigen::Index(j));
        emit(sink, "community", to_json(r));
        limits[j] = r.limits;
        rec.report.communities.push_back(std::move(r));
      }
      rec.report.utility = utility.on_prices(prices, limits);
      emit(sink, "utility", to_json(rec.report.utility));
      measure(rec);

      PriceSignal next = subgradient_step(prices, rec.report, cfg);
      rec.price_change = std::max(max_abs(next.lambda - prices.lambda), max_abs(next.mu - prices.mu));
      const auto verdict = check_convergence(rec, cfg, Protocol::subgradient);
      spdlog::debug("subgradient k={} gap_P={:.3e} gap_R={:.3e} dlambda={:.3e} cost={:.6f}", k, rec.gap_p, rec.gap_r,
                    rec.price_change, rec.cost);
      trace.records.push_back(std::move(rec));
      trace.next_prices = next;
      if (verdict == Verdict::failed) {
        trace.status = RunStatus::failed;
        trace.failure = "non-finite iterate";
        break;
      }
      if (verdict == Verdict::converged) {
        trace.status = RunStatus::converged;
        break;
      }
      prices = std::move(next);
    }
  } catch (const InfeasibleError& e) {
    trace.status = RunStatus::failed;
    trace.failure = e.what();
    trace.infeasible = true;
  } catch (const SolverError& e) {
    trace.status = RunStatus::failed;
    trace.failure = e.what();
  }
  trace.utility = utility.schedule();
  for (const auto& c : communities) trace.communities.push_back(c.schedule());
  spdlog::info("subgradient: {} after {} iterations", to_string(trace.status), trace.iterations());
  return trace;
}

NegotiationTrace run_lubs(const ScenarioSpec& sc, const CoordinatorConfig& cfg, const Eigen::MatrixXd& lambda0,
                          const MessageSink& sink) {
  cfg.validate();
  check_prices(sc, lambda0);
  NegotiationTrace trace;
  trace.protocol = Protocol::lubs;
  trace.reserve_requirement = reserve_requirements(sc);

  std::vector<CommunityAgent> communities;
  for (const auto& c : sc.communities) communities.emplace_back(c, cfg.qp);
  UtilityAgent utility(utility_view(sc), trace.reserve_requirement, cfg.qp);

  PriceSignal prices{0, lambda0, Eigen::VectorXd::Zero(sc.horizon)};
  std::vector<CommunityLimits> limits, widest;
  try {
    for (std::size_t j = 0; j < communities.size(); ++j) {
      limits.push_back(communities[j].open(lambda0.col(Eigen::Index(j))));
      widest.push_back(physical_limits(sc.communities[j]));
    }
    for (int k = 0; k < cfg.max_iters; ++k) {
      prices.iteration = k;
      emit(sink, "price", to_json(prices));
      IterationRecord rec;
      rec.prices = prices;
      rec.report.iteration = k;
      rec.report.utility = utility.on_limits(prices, limits, widest);
      emit(sink, "utility", to_json(rec.report.utility));
      Eigen::MatrixXd announced(sc.horizon, sc.n_communities());
      double lower = rec.report.utility.dual_value;
      for (std::size_t j = 0; j < communities.size(); ++j) {
        const auto col = Eigen::Index(j);
        auto r = communities[j].on_demand(k, rec.report.utility.p_imp.col(col), prices.lambda.col(col));
        emit(sink, "community", to_json(r));
        limits[j] = r.limits;
        announced.col(col) = r.lambda;
        lower += r.dual_value;
        rec.report.communities.push_back(std::move(r));
      }
      measure(rec);
      rec.lower_bound = lower;
      rec.upper_bound = rec.cost;

      PriceSignal next{k + 1, lubs_damped_update(prices.lambda, announced, cfg.sigma), prices.mu};
      rec.price_change = max_abs(next.lambda - prices.lambda);
      const auto verdict = check_convergence(rec, cfg, Protocol::lubs);
      spdlog::debug("lubs k={} gap_P={:.3e} lower={:.6f} upper={:.6f} dlambda={:.3e}", k, rec.gap_p, rec.lower_bound,
                    rec.upper_bound, rec.price_change);
      trace.records.push_back(std::move(rec));
      trace.next_prices = next;
      if (verdict == Verdict::failed) {
        trace.status = RunStatus::failed;
        trace.failure = "non-finite iterate";
        break;
      }
      if (verdict == Verdict::converged) {
        trace.status = RunStatus::converged;
        // The prices that produced the converged point are the ones to carry over.
        trace.next_prices = prices;
        trace.next_prices.iteration = k + 1;
        break;
      }
      prices = std::move(next);
    }
  } catch (const InfeasibleError& e) {
    trace.status = RunStatus::failed;
    trace.failure = e.what();
    trace.infeasible = true;
  } catch (const SolverError& e) {
    trace.status = RunStatus::failed;
    trace.failure = e.what();
  }
  trace.utility = utility.schedule();
  for (const auto& c : communities) trace.communities.push_back(c.schedule());
  spdlog::info("lubs: {} after {} iterations", to_string(trace.status), trace.iterations());
  return trace;
}

void write_trace_csv(std::ostream& out, const ScenarioSpec& sc, const NegotiationTrace& trace) {
  csv::Writer w(out);
  w.row("iteration", "t", "community", "lambda", "mu", "p_imp", "p_exp", "r_total", "gap_P", "gap_R", "lower_bound",
        "upper_bound", "cost");
  for (const auto& rec : trace.records) {
    const auto& u = rec.report.utility;
    for (int t = 0; t < sc.horizon; ++t) {
      for (int j = 0; j < sc.n_communities(); ++j) {
        const auto& c = rec.report.communities[std::size_t(j)];
        w.row(rec.prices.iteration, t, sc.communities[std::size_t(j)].name, rec.prices.lambda(t, j), rec.prices.mu(t),
              u.p_imp(t, j), c.p_exp(t), c.r_total(t), rec.gap_p, rec.gap_r, rec.lower_bound, rec.upper_bound,
              rec.cost);
      }
    }
  }
}

}  // namespace gridbroker
