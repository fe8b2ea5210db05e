#pragma once

#include <stdexcept>
#include <string>

namespace gridbroker {

// A subproblem has no feasible point. `where` names the agent, `hour` is the
// hour for hourly problems (-1 for whole-horizon problems) and `subsystem`
// the constraint group found responsible when it could be isolated.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(std::string where, int hour, std::string subsystem)
      : std::runtime_error(describe(where, hour, subsystem)),
        where_(std::move(where)),
        hour_(hour),
        subsystem_(std::move(subsystem)) {}

  const std::string& where() const { return where_; }
  int hour() const { return hour_; }
  const std::string& subsystem() const { return subsystem_; }

 private:
  static std::string describe(const std::string& where, int hour, const std::string& subsystem) {
    std::string s = where + ": infeasible";
    if (hour >= 0) s += " at hour " + std::to_string(hour);
    if (!subsystem.empty()) s += " (" + subsystem + ")";
    return s;
  }

  std::string where_;
  int hour_;
  std::string subsystem_;
};

// The QP solver stopped without an optimal point on a problem not shown infeasible.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gridbroker
