// The whole-horizon, whole-system dispatch solved as a single QP: the
// benchmark the negotiation protocols are measured against.
#pragma once

#include "gridbroker/community_agent.hpp"
#include "gridbroker/model.hpp"
#include "gridbroker/qp/solver.hpp"
#include "gridbroker/utility_agent.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gridbroker {

struct CentralizedSolution {
  qp::QpStatus status = qp::QpStatus::iteration_limit;
  double total_cost = 0;       // sum of generation costs over the horizon
  Eigen::MatrixXd dispatch;    // T x n_generators, columns as ScenarioSpec::all_generators()
  Eigen::MatrixXd lmp;         // T x n_buses
  Eigen::MatrixXd community_price;  // T x n_communities, duals of the community balance rows
  Eigen::VectorXd reserve_price;    // T
  UtilitySchedule utility;     // r_imp holds each community's reserve
  std::vector<CommunitySchedule> communities;
  double kkt_residual = 0;
  int iterations = 0;
};

// Throws InfeasibleError when the system cannot be served.
CentralizedSolution solve_centralized(const ScenarioSpec& scenario, const qp::SolverOptions& opt = {});

}  // namespace gridbroker
