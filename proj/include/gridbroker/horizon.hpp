// Moving-horizon operation: every hour the day-ahead window is re-forecast,
// renegotiated starting from the previous hour's prices, and only its first
// hour is committed. Battery energy carries over between windows.
#pragma once

#include "gridbroker/coordinator.hpp"
#include "gridbroker/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace gridbroker {

// Truth = forecast x factor. Factor matrices are indexed by wall-clock hour
// (rows, wrapping around when shorter than the run) and signal (columns):
// utility demand scaling has one column, community load and PV one column
// per community. Empty matrices mean factor 1. Only the current hour is
// revealed; later hours of each window stay at the base forecast.
struct ForecastModel {
  ScenarioSpec base;
  Eigen::MatrixXd demand_factor;          // hours x 1
  Eigen::MatrixXd community_load_factor;  // hours x n_communities
  Eigen::MatrixXd community_pv_factor;    // hours x n_communities

  // Throws std::invalid_argument on non-positive factors or wrong widths.
  void validate() const;
};

// Forecast with lognormal factors exp(spread * z - spread^2 / 2), z ~ N(0, 1)
// drawn from a generator seeded with `seed`; spread 0 gives all ones.
ForecastModel seeded_forecast(const ScenarioSpec& base, double spread, std::uint64_t seed, int hours);

// Window starting at wall-clock hour h: base profiles rotated by h with slot 0
// replaced by the realized values for hour h.
ScenarioSpec apply_forecast_update(const ForecastModel& forecast, int h);

// Prices moved one hour earlier; the last slot repeats its predecessor.
// Throws std::invalid_argument when the horizon is shorter than 2.
PriceSignal shift_warm_start(const PriceSignal& prev);

struct HourRecord {
  int hour = 0;
  int iterations = 0;
  RunStatus status = RunStatus::iteration_limit;
  double window_cost = 0;
  Eigen::VectorXd generator_dispatch;  // slot 0, all_generators() order
  Eigen::VectorXd battery_power;       // slot 0, per community, charging > 0
  Eigen::VectorXd p_exp;               // slot 0, per community
  Eigen::VectorXd lambda;              // slot 0 converged price, per community
  double mu = 0;
  Eigen::VectorXd energy_start;        // per community, MWh
  NegotiationTrace trace;
};

struct HorizonResult {
  std::vector<HourRecord> hours;
  bool failed = false;  // a window did not converge; hours stops there
  std::string failure;
  // n_completed + 1 rows x n_communities; row h is the energy at the start of hour h.
  Eigen::MatrixXd energy_realized;
};

// Called after each hour is committed (progress reporting, streaming output).
using HourCallback = std::function<void(const HourRecord&)>;

HorizonResult run_moving_horizon(const ForecastModel& forecast, Protocol protocol, const CoordinatorConfig& cfg,
                                 int n_hours, const PriceSignal& cold_start, const HourCallback& on_hour = {});

// One row per committed hour: hour, status, iterations, minutes (two per
// iteration), per-generator dispatch, per-community battery power, energy at
// the start of the hour and export, per-community price, mu.
void write_realized_csv(std::ostream& out, const ScenarioSpec& scenario, const HorizonResult& result);

}  // namespace gridbroker
