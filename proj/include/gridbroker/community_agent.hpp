// One community's whole-horizon subproblem: generator, battery, PV and load
// behind a single connection to the grid.
#pragma once

#include "gridbroker/model.hpp"
#include "gridbroker/qp/solver.hpp"

#include <Eigen/Dense>

namespace gridbroker {

struct CommunitySchedule {
  Eigen::VectorXd p_g;
  Eigen::VectorXd p_b;  // positive = charging
  Eigen::VectorXd e;    // T + 1 entries, e(0) = e_init
  Eigen::VectorXd p_exp;
  Eigen::VectorXd r_g;
  Eigen::VectorXd r_b;
  Eigen::VectorXd r_total;
  double local_cost = 0;  // generation cost only
  double objective = 0;   // local_cost - lambda'p_exp - mu'r_total at the prices it answered
};

struct CommunityLimits {
  Eigen::VectorXd p_exp_min;
  Eigen::VectorXd p_exp_max;
  Eigen::VectorXd r_max;
  // Largest export plus reserve: generator headroom and battery reserve share
  // the same capacity. Empty means no combined cap.
  Eigen::VectorXd p_up_max;
};

// Optimal schedule at energy prices lambda and reserve prices mu (mu is
// clamped at zero). Reserves are reported at their largest feasible value,
// which is optimal for any mu >= 0. Throws InfeasibleError / SolverError.
CommunitySchedule dispatch(const CommunitySpec& spec, const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                           const qp::SolverOptions& opt = {});

struct PriceResponse {
  Eigen::VectorXd lambda;  // duals of the hourly balance rows
  CommunitySchedule schedule;
};

// Marginal prices at which the community serves the demanded export,
// after projecting the demand into `limits`.
PriceResponse price_response(const CommunitySpec& spec, const Eigen::VectorXd& p_demand,
                             const CommunityLimits& limits, const qp::SolverOptions& opt = {});

// Limits announced after `previous`: the battery is assumed to repeat its
// previous trajectory, so any export inside the limits is reachable.
CommunityLimits update_limits(const CommunitySpec& spec, const CommunitySchedule& previous);

// Widest export range the devices allow hour by hour (battery energy
// ignored) and the largest reserve the community could ever offer.
CommunityLimits physical_limits(const CommunitySpec& spec);

// Largest reserve available from a schedule's generator headroom and battery.
Eigen::VectorXd reserve_capability(const CommunitySpec& spec, const CommunitySchedule& s);

}  // namespace gridbroker
