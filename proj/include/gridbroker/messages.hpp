// Everything that crosses an agent boundary during a negotiation. The
// serialized form is what a network transport would carry; tests inspect it
// to make sure no private device data leaks.
#pragma once

#include "gridbroker/community_agent.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace gridbroker {

struct PriceSignal {
  int iteration = 0;
  Eigen::MatrixXd lambda;  // T x n_communities, $/MWh
  Eigen::VectorXd mu;      // T, $/MW h
};

struct CommunityReport {
  int iteration = 0;
  std::string community;
  Eigen::VectorXd p_exp;
  Eigen::VectorXd r_total;
  CommunityLimits limits;
  Eigen::VectorXd lambda;   // prices announced back to the utility (demand-driven protocol only)
  double local_cost = 0;    // cost of the schedule just reported
  double dual_value = 0;    // community's share of the price-based lower bound
};

struct UtilityReport {
  int iteration = 0;
  Eigen::MatrixXd p_imp;            // T x n_communities
  Eigen::MatrixXd r_imp;            // T x n_communities
  Eigen::VectorXd r_g_total;        // T
  Eigen::VectorXd reserve_requirement;  // T, public system requirement
  double utility_cost = 0;
  double dual_value = 0;
};

struct ScheduleReport {
  int iteration = 0;
  std::vector<CommunityReport> communities;
  UtilityReport utility;
};

// Receives every message as (kind, JSON text) in the order it is sent.
using MessageSink = std::function<void(std::string_view kind, const std::string& json)>;

std::string to_json(const PriceSignal& m);
std::string to_json(const CommunityReport& m);
std::string to_json(const UtilityReport& m);

// Keys that may appear anywhere in a serialized message.
const std::vector<std::string>& message_key_whitelist();

}  // namespace gridbroker
