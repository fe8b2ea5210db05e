// Command-line front end. `run` takes the arguments after the program name
// and returns the process exit code, so tests can drive it in-process.
#pragma once

#include "gridbroker/coordinator.hpp"
#include "gridbroker/duopoly.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridbroker::cli {

enum ExitCode : int { success = 0, input_error = 1, infeasible = 2, not_converged = 3 };

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything `--set key=value` can change. Keys: alpha, beta, sigma, eps_p,
// eps_r, eps_lambda, eps_cost, max_iters, step_schedule, qp.kkt_tol,
// qp.max_iterations, lambda0, mu0, reserve_fraction, spread, p_imp0,
// p_exp0, sweep_iterations, classify_tol.
struct Settings {
  CoordinatorConfig cfg;
  double lambda0 = 40;  // cold-start community price
  double mu0 = 0;
  std::optional<double> reserve_fraction;
  double spread = 0;  // forecast noise of the moving-horizon study
  duopoly::SweepOptions sweep;
};

// Throws InputError for an unknown key or a malformed value.
void apply_override(Settings& s, std::string_view assignment);

// "lo:hi:n" (n evenly spaced points, ends included), "a,b,c" or a single
// number. Throws InputError on malformed or empty ranges.
std::vector<double> parse_range(std::string_view text);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gridbroker::cli
