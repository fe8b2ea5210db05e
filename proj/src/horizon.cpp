#include "gridbroker/horizon.hpp"

#include "gridbroker/csv.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace gridbroker {

namespace {

void check_factors(const Eigen::MatrixXd& f, Eigen::Index width, const char* name) {
  if (f.size() == 0) return;
  if (f.cols() != width)
    throw std::invalid_argument(std::string("forecast: ") + name + " needs " + std::to_string(width) + " columns");
  if (!(f.array() > 0).all() || !f.allFinite())
    throw std::invalid_argument(std::string("forecast: ") + name + " factors must be positive");
}

double factor(const Eigen::MatrixXd& f, int hour, Eigen::Index col) {
  if (f.size() == 0) return 1.0;
  return f(hour % f.rows(), col);
}

}  // namespace

void ForecastModel::validate() const {
  check_factors(demand_factor, 1, "demand_factor");
  check_factors(community_load_factor, base.n_communities(), "community_load_factor");
  check_factors(community_pv_factor, base.n_communities(), "community_pv_factor");
}

ForecastModel seeded_forecast(const ScenarioSpec& base, double spread, std::uint64_t seed, int hours) {
  if (!(spread >= 0)) throw std::invalid_argument("forecast: spread must be nonnegative");
  if (hours < 1) throw std::invalid_argument("forecast: hours must be positive");
  ForecastModel f;
  f.base = base;
  if (spread == 0) return f;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  auto draw = [&] { return std::exp(spread * z(rng) - 0.5 * spread * spread); };
  const int nc = base.n_communities();
  f.demand_factor.resize(hours, 1);
  f.community_load_factor.resize(hours, nc);
  f.community_pv_factor.resize(hours, nc);
  // Hour-major draw order so a longer run extends a shorter one.
  for (int h = 0; h < hours; ++h) {
    f.demand_factor(h, 0) = draw();
    for (int c = 0; c < nc; ++c) f.community_load_factor(h, c) = draw();
    for (int c = 0; c < nc; ++c) f.community_pv_factor(h, c) = draw();
  }
  return f;
}

ScenarioSpec apply_forecast_update(const ForecastModel& forecast, int h) {
  if (h < 0) throw std::invalid_argument("forecast: hour must be nonnegative");
  ScenarioSpec w = rotate_profiles(forecast.base, h);
  w.demand_scaling(0) *= factor(forecast.demand_factor, h, 0);
  for (int c = 0; c < w.n_communities(); ++c) {
    auto& cs = w.communities[std::size_t(c)];
    cs.load_profile(0) *= factor(forecast.community_load_factor, h, c);
    cs.pv_profile(0) *= factor(forecast.community_pv_factor, h, c);
  }
  return w;
}

PriceSignal shift_warm_start(const PriceSignal& prev) {
  const Eigen::Index T = prev.lambda.rows();
  if (T < 2 || prev.mu.size() != T) throw std::invalid_argument("shift_warm_start: horizon must be at least 2");
  PriceSignal out;
  out.iteration = 0;
  out.lambda.resize(T, prev.lambda.cols());
  out.lambda.topRows(T - 1) = prev.lambda.bottomRows(T - 1);
  out.lambda.row(T - 1) = prev.lambda.row(T - 1);
  out.mu.resize(T);
  out.mu.head(T - 1) = prev.mu.tail(T - 1);
  out.mu(T - 1) = prev.mu(T - 1);
  return out;
}

HorizonResult run_moving_horizon(const ForecastModel& forecast, Protocol protocol, const CoordinatorConfig& cfg,
                                 int n_hours, const PriceSignal& cold_start, const HourCallback& on_hour) {
  if (n_hours < 1) throw std::invalid_argument("moving horizon: n_hours must be at least 1");
  forecast.validate();
  cfg.validate();
  const ScenarioSpec& base = forecast.base;
  const int nc = base.n_communities();

  HorizonResult result;
  result.energy_realized.resize(n_hours + 1, nc);
  for (int c = 0; c < nc; ++c) result.energy_realized(0, c) = base.communities[std::size_t(c)].battery.e_init;

  PriceSignal prices = cold_start;
  int completed = 0;
  for (int h = 0; h < n_hours; ++h) {
    ScenarioSpec window = apply_forecast_update(forecast, h);
    for (int c = 0; c < nc; ++c) {
      auto& b = window.communities[std::size_t(c)].battery;
      // Rounding in the energy chain must not push the start outside the box.
      b.e_init = std::clamp(result.energy_realized(h, c), b.e_min, b.e_max);
    }

    NegotiationTrace trace = protocol == Protocol::subgradient
                                 ? run_subgradient(window, cfg, prices.lambda, prices.mu)
                                 : run_lubs(window, cfg, prices.lambda);
    spdlog::info("hour {}: {} after {} iterations", h, to_string(trace.status), trace.iterations());
    if (trace.status != RunStatus::converged) {
      result.failed = true;
      result.failure = "hour " + std::to_string(h) + ": " + to_string(trace.status) +
                       (trace.failure.empty() ? "" : " (" + trace.failure + ")");
      HourRecord rec;
      rec.hour = h;
      rec.iterations = trace.iterations();
      rec.status = trace.status;
      rec.trace = std::move(trace);
      result.hours.push_back(std::move(rec));
      break;
    }

    HourRecord rec;
    rec.hour = h;
    rec.iterations = trace.iterations();
    rec.status = trace.status;
    rec.window_cost = trace.last().cost;
    const int nu = base.n_utility_generators();
    rec.generator_dispatch.resize(nu + nc);
    rec.generator_dispatch.head(nu) = trace.utility.p_g.row(0).transpose();
    rec.battery_power.resize(nc);
    rec.p_exp.resize(nc);
    rec.energy_start = result.energy_realized.row(h).transpose();
    for (int c = 0; c < nc; ++c) {
      const auto& s = trace.communities[std::size_t(c)];
      rec.generator_dispatch(nu + c) = s.p_g(0);
      rec.battery_power(c) = s.p_b(0);
      rec.p_exp(c) = s.p_exp(0);
      result.energy_realized(h + 1, c) = result.energy_realized(h, c) + s.p_b(0);
    }
    rec.lambda = trace.last().prices.lambda.row(0).transpose();
    rec.mu = trace.last().prices.mu(0);
    prices = shift_warm_start(trace.next_prices);
    rec.trace = std::move(trace);
    result.hours.push_back(std::move(rec));
    ++completed;
    if (on_hour) on_hour(result.hours.back());
  }
  result.energy_realized.conservativeResize(completed + 1, nc);
  return result;
}

void write_realized_csv(std::ostream& out, const ScenarioSpec& sc, const HorizonResult& result) {
  csv::Writer w(out);
  w.field("hour").field("status").field("iterations").field("minutes");
  for (const auto& g : sc.all_generators()) w.field("p_" + g.name);
  for (const auto& c : sc.communities) w.field("p_b_" + c.name).field("e_" + c.name).field("p_exp_" + c.name);
  for (const auto& c : sc.communities) w.field("lambda_" + c.name);
  w.field("mu").end();

  for (const auto& rec : result.hours) {
    if (rec.status != RunStatus::converged) continue;
    w.field(rec.hour).field(to_string(rec.status)).field(rec.iterations).field(2 * rec.iterations);
    for (Eigen::Index i = 0; i < rec.generator_dispatch.size(); ++i) w.field(rec.generator_dispatch(i));
    for (int c = 0; c < sc.n_communities(); ++c) w.field(rec.battery_power(c)).field(rec.energy_start(c)).field(rec.p_exp(c));
    for (int c = 0; c < sc.n_communities(); ++c) w.field(rec.lambda(c));
    w.field(rec.mu).end();
  }
}

}  // namespace gridbroker
