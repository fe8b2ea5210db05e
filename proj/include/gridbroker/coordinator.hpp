// Negotiation between the utility and the communities: the price-update
// (subgradient) protocol, the demand-driven bound-switching protocol
// ("lubs"), convergence detection and per-iteration tracing.
#pragma once

#include "gridbroker/community_agent.hpp"
#include "gridbroker/messages.hpp"
#include "gridbroker/model.hpp"
#include "gridbroker/qp/solver.hpp"
#include "gridbroker/utility_agent.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gridbroker {

enum class Protocol { subgradient, lubs };
enum class StepSchedule { constant, diminishing };
enum class RunStatus { converged, iteration_limit, failed };
enum class Verdict { converged, proceed, failed };

const char* to_string(Protocol p);
const char* to_string(RunStatus s);
std::optional<Protocol> parse_protocol(std::string_view s);

struct CoordinatorConfig {
  double alpha = 0.1;   // energy price step, $/MWh per MW
  double beta = 0.2;    // reserve price step, $/MW h per MW
  double sigma = 0.5;   // damping of the demand-driven protocol, (0, 1]
  double eps_p = 1e-3;  // MW
  double eps_r = 1e-3;  // MW
  double eps_lambda = 1e-4;  // $/MWh
  double eps_cost = 1e-4;    // relative
  int max_iters = 500;
  StepSchedule step_schedule = StepSchedule::constant;
  // Optional per-(hour, community) multipliers on alpha; empty means all ones.
  Eigen::MatrixXd alpha_scale;
  qp::SolverOptions qp;

  // Throws std::invalid_argument naming the bad field.
  void validate() const;
};

struct IterationRecord {
  PriceSignal prices;     // prices the agents answered in this iteration
  ScheduleReport report;
  Eigen::MatrixXd mismatch;         // T x n_communities, p_imp - p_exp
  Eigen::VectorXd reserve_deficit;  // T, R_d - total reserve
  double gap_p = 0;       // max |p_imp - p_exp|
  double gap_r = 0;       // max(0, max_t reserve deficit)
  double price_change = 0;  // max |next price - this price|
  double lower_bound = std::numeric_limits<double>::quiet_NaN();
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
  double cost = 0;        // utility_cost + sum of community local_cost
};

struct NegotiationTrace {
  Protocol protocol = Protocol::subgradient;
  RunStatus status = RunStatus::iteration_limit;
  std::string failure;  // message when status == failed
  bool infeasible = false;  // failed because an agent's subproblem had no feasible point
  std::vector<IterationRecord> records;
  PriceSignal next_prices;  // prices after the last update (warm start for a later run)
  // Schedules of the last completed iteration.
  UtilitySchedule utility;
  std::vector<CommunitySchedule> communities;
  Eigen::VectorXd reserve_requirement;

  int iterations() const { return static_cast<int>(records.size()); }
  const IterationRecord& last() const { return records.back(); }
};

// lambda' = lambda + alpha (p_imp - p_exp), mu' = max(0, mu + beta * deficit).
PriceSignal subgradient_step(const PriceSignal& prev, const ScheduleReport& report, const CoordinatorConfig& cfg);

// (1 - sigma) prev + sigma tilde, elementwise for vectors and matrices.
template <typename A, typename B>
auto lubs_damped_update(const A& prev, const B& tilde, double sigma) {
  return (1.0 - sigma) * prev + sigma * tilde;
}

Verdict check_convergence(const IterationRecord& last, const CoordinatorConfig& cfg, Protocol protocol);

NegotiationTrace run_subgradient(const ScenarioSpec& scenario, const CoordinatorConfig& cfg,
                                 const Eigen::MatrixXd& lambda0, const Eigen::VectorXd& mu0,
                                 const MessageSink& sink = {});

NegotiationTrace run_lubs(const ScenarioSpec& scenario, const CoordinatorConfig& cfg, const Eigen::MatrixXd& lambda0,
                          const MessageSink& sink = {});

// Default cold-start prices: every community price equal to `level`, mu = 0.
PriceSignal flat_prices(const ScenarioSpec& scenario, double level);

// Trace CSV: iteration, t, community, lambda, mu, p_imp, p_exp, r_total,
// gap_P, gap_R, lower_bound, upper_bound, cost. Gap, bound and cost columns
// are iteration-level values repeated on each row; bounds are empty for the
// subgradient protocol.
void write_trace_csv(std::ostream& out, const ScenarioSpec& scenario, const NegotiationTrace& trace);

}  // namespace gridbroker
