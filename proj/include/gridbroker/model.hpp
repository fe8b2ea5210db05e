// Scenario data: network, generators, communities and their profiles.
//
// Units: MW for power, MWh for energy (hourly steps, so the two interconvert
// with factor 1), $ for cost with C(P) = 0.5 * alpha * P^2 + beta * P + gamma.

#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridbroker {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file (I/O or JSON syntax/shape).
class ParseError : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

// Well-formed file whose content breaks a model invariant.
class ValidationError : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

struct GeneratorSpec {
  std::string name;
  int bus_id = 0;
  double p_min = 0;
  double p_max = 0;
  double r_max = 0;  // largest reserve offer
  double cost_alpha = 0;
  double cost_beta = 0;
  double cost_gamma = 0;

  double cost(double p) const { return 0.5 * cost_alpha * p * p + cost_beta * p + cost_gamma; }
  double marginal_cost(double p) const { return cost_alpha * p + cost_beta; }

  bool operator==(const GeneratorSpec&) const = default;
};

// p_min <= 0 is the largest discharge, p_max >= 0 the largest charge.
struct BatterySpec {
  double p_min = 0;
  double p_max = 0;
  double e_min = 0;
  double e_max = 0;
  double e_init = 0;

  bool operator==(const BatterySpec&) const = default;
};

struct CommunitySpec {
  std::string name;
  int bus_id = 0;
  GeneratorSpec generator;
  BatterySpec battery;
  Eigen::VectorXd pv_profile;
  Eigen::VectorXd load_profile;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = 0;  // p.u. on base_mva
  double flow_limit = 0;   // MW

  bool operator==(const Branch&) const = default;
};

struct NetworkSpec {
  std::vector<int> bus_ids;  // external labels; position is the internal index
  std::vector<Branch> branches;
  int slack_bus = 0;
  double base_mva = 100.0;

  int n_buses() const { return static_cast<int>(bus_ids.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  // Internal index of an external bus label; throws std::out_of_range.
  int index_of(int bus_id) const;
};

struct ScenarioSpec {
  NetworkSpec network;
  std::vector<GeneratorSpec> utility_generators;
  std::vector<CommunitySpec> communities;
  Eigen::MatrixXd bus_load_profile;  // horizon x n_buses, MW before scaling
  Eigen::VectorXd demand_scaling;    // horizon
  double reserve_fraction = 0.1;
  int horizon = 24;

  int n_communities() const { return static_cast<int>(communities.size()); }
  int n_utility_generators() const { return static_cast<int>(utility_generators.size()); }
  // Utility generators followed by community generators.
  std::vector<GeneratorSpec> all_generators() const;
};

bool operator==(const CommunitySpec& a, const CommunitySpec& b);
bool operator==(const NetworkSpec& a, const NetworkSpec& b);
bool operator==(const ScenarioSpec& a, const ScenarioSpec& b);

// Throws ValidationError naming the violated invariant.
void validate(const ScenarioSpec& spec);

ScenarioSpec parse_scenario(const std::string& json_text);
ScenarioSpec load_scenario(const std::filesystem::path& path);
std::string dump_scenario(const ScenarioSpec& spec);
void save_scenario(const ScenarioSpec& spec, const std::filesystem::path& path);

// Utility bus loads at hour t after demand scaling (n_buses entries).
Eigen::VectorXd scaled_load(const ScenarioSpec& spec, int t);

// Scaled bus loads plus community internal loads at hour t.
double total_load(const ScenarioSpec& spec, int t);

// Reserve requirement R_d at hour t: reserve_fraction * total_load.
double reserve_requirement(const ScenarioSpec& spec, int t);

// Sum over hours and generators of C(P). Dispatch is horizon x n_generators,
// columns ordered as all_generators().
double total_cost(const ScenarioSpec& spec, const Eigen::MatrixXd& dispatch);

// Copy of the scenario covering hours [start, start + horizon) of the
// original profiles, wrapping around the end of the day.
ScenarioSpec rotate_profiles(const ScenarioSpec& spec, int start);

}  // namespace gridbroker
