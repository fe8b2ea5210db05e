#include "gridbroker/messages.hpp"

#include "json.hpp"

namespace gridbroker {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Row-major nested arrays: one inner array per hour.
json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
  return rows;
}

json limits(const CommunityLimits& l) {
  json j = {{"p_exp_min", vec(l.p_exp_min)}, {"p_exp_max", vec(l.p_exp_max)}, {"r_max", vec(l.r_max)}};
  if (l.p_up_max.size() > 0) j["p_up_max"] = vec(l.p_up_max);
  return j;
}

}  // namespace

std::string to_json(const PriceSignal& m) {
  return json{{"iteration", m.iteration}, {"lambda", mat(m.lambda)}, {"mu", vec(m.mu)}}.dump();
}

std::string to_json(const CommunityReport& m) {
  json j{{"iteration", m.iteration},     {"community", m.community},   {"p_exp", vec(m.p_exp)},
         {"r_total", vec(m.r_total)},    {"limits", limits(m.limits)}, {"local_cost", m.local_cost},
         {"dual_value", m.dual_value}};
  if (m.lambda.size() > 0) j["lambda"] = vec(m.lambda);
  return j.dump();
}

std::string to_json(const UtilityReport& m) {
  return json{{"iteration", m.iteration},
              {"p_imp", mat(m.p_imp)},
              {"r_imp", mat(m.r_imp)},
              {"r_g_total", vec(m.r_g_total)},
              {"reserve_requirement", vec(m.reserve_requirement)},
              {"utility_cost", m.utility_cost},
              {"dual_value", m.dual_value}}
      .dump();
}

const std::vector<std::string>& message_key_whitelist() {
  static const std::vector<std::string> keys{
      "iteration", "lambda", "mu",        "community",  "p_exp",  "r_total",   "limits",
      "p_exp_min", "p_exp_max", "r_max", "p_up_max",  "local_cost", "dual_value", "p_imp", "r_imp",
      "r_g_total", "reserve_requirement", "utility_cost"};
  return keys;
}

}  // namespace gridbroker
