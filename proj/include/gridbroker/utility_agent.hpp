// Utility subproblem: an hourly reserve-aware DC dispatch that buys energy
// from each community at its announced price.
//
// The utility reads only public data from the scenario: the network, its own
// generators, the bus loads and which bus each community sits on.
#pragma once

#include "gridbroker/community_agent.hpp"
#include "gridbroker/model.hpp"
#include "gridbroker/qp/solver.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gridbroker {

enum class ReserveMode {
  priced,  // utility reserve earns mu per MW; community reserve is not a utility variable
  hard,    // utility buys community reserve within announced caps and meets the requirement itself
};

struct ReserveTerms {
  ReserveMode mode = ReserveMode::priced;
  Eigen::VectorXd mu;           // priced mode, per hour
  Eigen::VectorXd requirement;  // hard mode, per hour
};

struct UtilitySchedule {
  Eigen::MatrixXd p_g;    // T x n_utility_generators
  Eigen::MatrixXd r_g;    // T x n_utility_generators
  Eigen::MatrixXd p_imp;  // T x n_communities
  Eigen::MatrixXd r_imp;  // T x n_communities (zero in priced mode)
  Eigen::MatrixXd theta;  // T x n_buses
  Eigen::MatrixXd flows;  // T x n_branches
  Eigen::MatrixXd lmp;    // T x n_buses, duals of the bus balance rows
  double utility_cost = 0;  // generation cost only
  double objective = 0;     // cost + lambda'p_imp - mu'r_g at the prices it answered
};

// lambda is T x n_communities; limits has one entry per community.
UtilitySchedule dispatch_utility(const ScenarioSpec& scenario, const Eigen::MatrixXd& lambda,
                                 const ReserveTerms& reserve, const std::vector<CommunityLimits>& limits,
                                 const qp::SolverOptions& opt = {});

// A single hour of the above. Fills row t of `out`, which must be sized already.
void dispatch_utility_hour(const ScenarioSpec& scenario, int t, const Eigen::MatrixXd& lambda,
                           const ReserveTerms& reserve, const std::vector<CommunityLimits>& limits,
                           const qp::SolverOptions& opt, UtilitySchedule& out);

// R_d - utility reserve - community reserve per hour (positive = deficit).
Eigen::VectorXd reserve_gap(const UtilitySchedule& schedule, const Eigen::VectorXd& requirement,
                            const Eigen::VectorXd& community_reserves);

// Public requirement R_d for every hour of the scenario.
Eigen::VectorXd reserve_requirements(const ScenarioSpec& scenario);

// Copy of the scenario holding only what the utility may see: community
// devices and profiles are cleared, names and buses kept.
ScenarioSpec utility_view(const ScenarioSpec& scenario);

}  // namespace gridbroker
