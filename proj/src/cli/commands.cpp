#include "gridbroker/cli.hpp"

#include "gridbroker/centralized.hpp"
#include "gridbroker/csv.hpp"
#include "gridbroker/errors.hpp"
#include "gridbroker/horizon.hpp"
#include "gridbroker/model.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#ifndef GRIDBROKER_GIT_DESCRIBE
#define GRIDBROKER_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace gridbroker::cli {

namespace {

double parse_double(std::string_view text, std::string_view what) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
    throw InputError(std::string(what) + ": not a number: '" + std::string(text) + "'");
  return v;
}

int parse_int(std::string_view text, std::string_view what) {
  int v = 0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != end)
    throw InputError(std::string(what) + ": not an integer: '" + std::string(text) + "'");
  return v;
}

}  // namespace

void apply_override(Settings& s, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw InputError("--set expects key=value, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string_view value = assignment.substr(eq + 1);
  auto num = [&] { return parse_double(value, key); };
  auto& c = s.cfg;
  if (key == "alpha") c.alpha = num();
  else if (key == "beta") c.beta = num();
  else if (key == "sigma") c.sigma = num();
  else if (key == "eps_p") c.eps_p = num();
  else if (key == "eps_r") c.eps_r = num();
  else if (key == "eps_lambda") c.eps_lambda = num();
  else if (key == "eps_cost") c.eps_cost = num();
  else if (key == "max_iters") c.max_iters = parse_int(value, key);
  else if (key == "step_schedule") {
    if (value == "constant") c.step_schedule = StepSchedule::constant;
    else if (value == "diminishing") c.step_schedule = StepSchedule::diminishing;
    else throw InputError("step_schedule must be constant or diminishing");
  } else if (key == "qp.kkt_tol") c.qp.kkt_tol = num();
  else if (key == "qp.max_iterations") c.qp.max_iterations = parse_int(value, key);
  else if (key == "lambda0") s.lambda0 = num();
  else if (key == "mu0") s.mu0 = num();
  else if (key == "reserve_fraction") s.reserve_fraction = num();
  else if (key == "spread") s.spread = num();
  else if (key == "p_imp0") s.sweep.p_imp0 = num();
  else if (key == "p_exp0") s.sweep.p_exp0 = num();
  else if (key == "sweep_iterations") s.sweep.iterations = parse_int(value, key);
  else if (key == "classify_tol") s.sweep.tol = num();
  else throw InputError("unknown --set key '" + key + "'");
}

std::vector<double> parse_range(std::string_view text) {
  if (text.empty()) throw InputError("empty range");
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      const auto p = text.find(':', start);
      parts.push_back(text.substr(start, p == std::string_view::npos ? p : p - start));
      if (p == std::string_view::npos) break;
      start = p + 1;
    }
    if (parts.size() != 3) throw InputError("range must be lo:hi:n, got '" + std::string(text) + "'");
    const double lo = parse_double(parts[0], "range"), hi = parse_double(parts[1], "range");
    const int n = parse_int(parts[2], "range count");
    if (n < 1 || hi < lo) throw InputError("empty range '" + std::string(text) + "'");
    if (n == 1) return {lo};
    for (int i = 0; i < n; ++i) out.push_back(i + 1 == n ? hi : lo + (hi - lo) * i / (n - 1));
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto p = text.find(',', start);
    out.push_back(parse_double(text.substr(start, p == std::string_view::npos ? p : p - start), "range"));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

namespace {

struct Options {
  fs::path scenario;
  fs::path out = "out";
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  std::optional<int> max_iters;
  std::string protocol = "subgradient";
  int hours = 24;
  std::string a1, a2, alpha, sigma;
  bool relative = false;
  fs::path manifest;
};

void configure_logging() {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::get("gridbroker");
    if (!logger) logger = spdlog::stderr_color_mt("gridbroker");
    spdlog::set_default_logger(logger);
  });
  const char* env = std::getenv("GRIDBROKER_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_file(path, s.str());
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json manifest(const std::string& command, const std::vector<std::string>& args, const Options& o) {
  ordered_json m;
  m["command"] = command;
  m["args"] = args;
  m["scenario"] = o.scenario.empty() ? "" : fs::absolute(o.scenario).lexically_normal().string();
  ordered_json overrides = ordered_json::object();
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  m["overrides"] = overrides;
  m["seed"] = o.seed;
  m["out"] = o.out.string();
  m["version"] = GRIDBROKER_GIT_DESCRIBE;
  return m;
}

Settings settings_from(const Options& o) {
  Settings s;
  for (const auto& a : o.sets) apply_override(s, a);
  if (o.max_iters) s.cfg.max_iters = *o.max_iters;
  try {
    s.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return s;
}

ScenarioSpec load(const Options& o, const Settings& s) {
  if (o.scenario.empty()) throw InputError("--scenario is required");
  ScenarioSpec sc = load_scenario(o.scenario);
  if (s.reserve_fraction) {
    sc.reserve_fraction = *s.reserve_fraction;
    validate(sc);
  }
  return sc;
}

void write_dispatch_csv(std::ostream& out, const ScenarioSpec& sc, const UtilitySchedule& u,
                        const std::vector<CommunitySchedule>& cs) {
  csv::Writer w(out);
  w.field("t");
  for (const auto& g : sc.all_generators()) w.field("p_" + g.name);
  for (const auto& g : sc.all_generators()) w.field("r_" + g.name);
  for (const auto& c : sc.communities) w.field("p_b_" + c.name).field("r_b_" + c.name).field("e_" + c.name);
  for (const auto& c : sc.communities) w.field("p_exp_" + c.name);
  w.end();
  const int nu = sc.n_utility_generators();
  for (int t = 0; t < sc.horizon; ++t) {
    w.field(t);
    for (int i = 0; i < nu; ++i) w.field(u.p_g(t, i));
    for (const auto& c : cs) w.field(c.p_g(t));
    for (int i = 0; i < nu; ++i) w.field(u.r_g(t, i));
    for (const auto& c : cs) w.field(c.r_g(t));
    for (const auto& c : cs) w.field(c.p_b(t)).field(c.r_b(t)).field(c.e(t));
    for (const auto& c : cs) w.field(c.p_exp(t));
    w.end();
  }
}

void write_prices_csv(std::ostream& out, const ScenarioSpec& sc, const Eigen::MatrixXd& lmp,
                      const Eigen::MatrixXd& lambda, const Eigen::VectorXd& mu) {
  csv::Writer w(out);
  w.field("t");
  for (int b : sc.network.bus_ids) w.field("lmp_" + std::to_string(b));
  for (const auto& c : sc.communities) w.field("lambda_" + c.name);
  w.field("mu").end();
  for (int t = 0; t < sc.horizon; ++t) {
    w.field(t);
    for (Eigen::Index b = 0; b < lmp.cols(); ++b) w.field(lmp(t, b));
    for (Eigen::Index j = 0; j < lambda.cols(); ++j) w.field(lambda(t, j));
    w.field(mu(t)).end();
  }
}

int exit_for(const NegotiationTrace& trace) {
  switch (trace.status) {
    case RunStatus::converged: return success;
    case RunStatus::iteration_limit: return not_converged;
    case RunStatus::failed: return trace.infeasible ? infeasible : not_converged;
  }
  return not_converged;
}

int cmd_centralized(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const Settings s = settings_from(o);
  const ScenarioSpec sc = load(o, s);
  fs::create_directories(o.out);
  write_file(o.out / "manifest.json", dump(manifest("centralized", args, o)));
  const CentralizedSolution sol = solve_centralized(sc, s.cfg.qp);

  write_with(o.out / "dispatch.csv", [&](std::ostream& f) { write_dispatch_csv(f, sc, sol.utility, sol.communities); });
  write_with(o.out / "prices.csv",
             [&](std::ostream& f) { write_prices_csv(f, sc, sol.lmp, sol.community_price, sol.reserve_price); });
  ordered_json summary;
  summary["command"] = "centralized";
  summary["status"] = qp::to_string(sol.status);
  summary["objective"] = sol.total_cost;
  summary["iterations"] = sol.iterations;
  summary["kkt_residual"] = sol.kkt_residual;
  write_file(o.out / "summary.json", dump(summary));
  out << "centralized: " << qp::to_string(sol.status) << ", cost " << csv::format(sol.total_cost) << "\n";
  return success;
}

ordered_json trace_summary(const NegotiationTrace& trace) {
  ordered_json j;
  j["protocol"] = to_string(trace.protocol);
  j["status"] = to_string(trace.status);
  j["iterations"] = trace.iterations();
  if (!trace.failure.empty()) j["failure"] = trace.failure;
  if (trace.iterations() > 0) {
    const auto& l = trace.last();
    j["cost"] = l.cost;
    j["gap_p"] = l.gap_p;
    j["gap_r"] = l.gap_r;
    if (!std::isnan(l.lower_bound)) {
      j["lower_bound"] = l.lower_bound;
      j["upper_bound"] = l.upper_bound;
    }
  }
  return j;
}

Protocol protocol_of(const Options& o) {
  const auto p = parse_protocol(o.protocol);
  if (!p) throw InputError("--protocol must be subgradient or lubs");
  return *p;
}

int cmd_negotiate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const Settings s = settings_from(o);
  const Protocol protocol = protocol_of(o);
  const ScenarioSpec sc = load(o, s);
  fs::create_directories(o.out);
  write_file(o.out / "manifest.json", dump(manifest("negotiate", args, o)));

  std::string messages;
  const MessageSink sink = [&](std::string_view kind, const std::string& body) {
    messages += "{\"kind\":\"";
    messages += kind;
    messages += "\",\"body\":" + body + "}\n";
  };
  const PriceSignal start = flat_prices(sc, s.lambda0);
  const Eigen::VectorXd mu0 = Eigen::VectorXd::Constant(sc.horizon, s.mu0);
  const NegotiationTrace trace = protocol == Protocol::subgradient ? run_subgradient(sc, s.cfg, start.lambda, mu0, sink)
                                                                   : run_lubs(sc, s.cfg, start.lambda, sink);

  write_with(o.out / "trace.csv", [&](std::ostream& f) { write_trace_csv(f, sc, trace); });
  write_file(o.out / "messages.jsonl", messages);
  if (trace.iterations() > 0 && trace.communities.size() == std::size_t(sc.n_communities()) &&
      trace.utility.p_g.rows() == sc.horizon) {
    write_with(o.out / "dispatch.csv",
               [&](std::ostream& f) { write_dispatch_csv(f, sc, trace.utility, trace.communities); });
    const auto& p = trace.last().prices;
    write_with(o.out / "prices.csv", [&](std::ostream& f) { write_prices_csv(f, sc, trace.utility.lmp, p.lambda, p.mu); });
  }
  ordered_json summary;
  summary["command"] = "negotiate";
  summary.update(trace_summary(trace));
  write_file(o.out / "summary.json", dump(summary));

  out << to_string(protocol) << ": " << to_string(trace.status) << " after " << trace.iterations() << " iterations";
  if (trace.iterations() > 0) out << ", cost " << csv::format(trace.last().cost);
  out << "\n";
  return exit_for(trace);
}

int cmd_duopoly_sweep(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const Settings s = settings_from(o);
  if (o.alpha.empty() == o.sigma.empty()) throw InputError("give exactly one of --alpha or --sigma");
  const auto kind = o.alpha.empty() ? duopoly::SweepKind::sigma : duopoly::SweepKind::alpha;
  const auto a1 = parse_range(o.a1), a2 = parse_range(o.a2);
  const auto steps = parse_range(kind == duopoly::SweepKind::alpha ? o.alpha : o.sigma);
  for (double v : a1)
    if (!(v > 0)) throw InputError("--a1 values must be positive");
  for (double v : a2)
    if (!(v > 0)) throw InputError("--a2 values must be positive");

  std::vector<duopoly::SweepRow> rows;
  if (!o.relative) {
    rows = duopoly::sweep(a1, a2, steps, kind, s.sweep);
  } else {
    // Steps given as multiples of each model's critical value.
    for (double x : a1)
      for (double y : a2) {
        const duopoly::DuopolyModel<double> m{x, y, s.sweep.p_imp0, s.sweep.p_exp0};
        const double crit = kind == duopoly::SweepKind::alpha ? duopoly::alpha_critical(m) : duopoly::sigma_critical(m);
        std::vector<double> scaled;
        for (double f : steps) scaled.push_back(f * crit);
        auto part = duopoly::sweep({x}, {y}, scaled, kind, s.sweep);
        rows.insert(rows.end(), part.begin(), part.end());
      }
  }

  fs::create_directories(o.out);
  write_file(o.out / "manifest.json", dump(manifest("duopoly-sweep", args, o)));
  write_with(o.out / "duopoly_sweep.csv", [&](std::ostream& f) {
    csv::Writer w(f);
    w.row("a1", "a2", "kind", "step", "critical", "classification");
    const char* k = kind == duopoly::SweepKind::alpha ? "alpha" : "sigma";
    for (const auto& r : rows) w.row(r.a1, r.a2, k, r.step, r.critical, r.classification);
  });
  out << "duopoly-sweep: " << rows.size() << " points\n";
  return success;
}

int cmd_moving_horizon(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  const Settings s = settings_from(o);
  const Protocol protocol = protocol_of(o);
  if (o.hours < 1) throw InputError("--hours must be at least 1");
  const ScenarioSpec sc = load(o, s);
  fs::create_directories(o.out);
  write_file(o.out / "manifest.json", dump(manifest("moving-horizon", args, o)));

  ForecastModel forecast;
  try {
    forecast = seeded_forecast(sc, s.spread, o.seed, o.hours);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  PriceSignal cold = flat_prices(sc, s.lambda0);
  cold.mu.setConstant(s.mu0);
  const HorizonResult result = run_moving_horizon(forecast, protocol, s.cfg, o.hours, cold);

  write_with(o.out / "realized.csv", [&](std::ostream& f) { write_realized_csv(f, sc, result); });
  ordered_json hours = ordered_json::array();
  for (const auto& h : result.hours) {
    char name[32];
    std::snprintf(name, sizeof name, "hour_%02d_trace.csv", h.hour);
    write_with(o.out / name, [&](std::ostream& f) { write_trace_csv(f, sc, h.trace); });
    hours.push_back({{"hour", h.hour}, {"status", to_string(h.status)}, {"iterations", h.iterations}});
  }
  ordered_json summary;
  summary["command"] = "moving-horizon";
  summary["protocol"] = to_string(protocol);
  summary["hours_requested"] = o.hours;
  summary["hours_completed"] = result.energy_realized.rows() - 1;
  summary["failed"] = result.failed;
  if (result.failed) summary["failure"] = result.failure;
  summary["hours"] = hours;
  write_file(o.out / "summary.json", dump(summary));

  out << "moving-horizon: " << (result.energy_realized.rows() - 1) << "/" << o.hours << " hours committed";
  if (result.failed) out << "; " << result.failure;
  out << "\n";
  if (!result.failed) return success;
  return result.hours.back().trace.infeasible ? infeasible : not_converged;
}

std::vector<std::string> manifest_args(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read manifest " + path.string());
  ordered_json m;
  try {
    m = ordered_json::parse(f);
    return m.at("args").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  Options o;
  CLI::App app{"Negotiated dispatch between a utility and energy communities"};
  app.name("gridbroker");
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub, bool scenario) {
    if (scenario) sub->add_option("--scenario", o.scenario, "Scenario JSON file")->required();
    sub->add_option("--out", o.out, "Output directory")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--set", o.sets, "Override key=value (repeatable)");
    sub->add_option("--max-iters", o.max_iters, "Negotiation iteration limit");
  };
  auto* central = app.add_subcommand("centralized", "Solve the whole system as one QP");
  common(central, true);
  auto* negotiate = app.add_subcommand("negotiate", "Run a negotiation protocol");
  common(negotiate, true);
  negotiate->add_option("--protocol", o.protocol, "subgradient or lubs")->required();
  auto* sweep = app.add_subcommand("duopoly-sweep", "Classify the two-agent price recurrence over a grid");
  common(sweep, false);
  sweep->add_option("--a1", o.a1, "Utility slope range lo:hi:n or list")->required();
  sweep->add_option("--a2", o.a2, "Community slope range")->required();
  sweep->add_option("--alpha", o.alpha, "Price step range (price-update protocol)");
  sweep->add_option("--sigma", o.sigma, "Damping range (demand-driven protocol)");
  sweep->add_flag("--relative", o.relative, "Steps are multiples of the critical value");
  auto* horizon = app.add_subcommand("moving-horizon", "Hourly re-negotiation over a rolling day");
  common(horizon, true);
  horizon->add_option("--protocol", o.protocol, "subgradient or lubs");
  horizon->add_option("--hours", o.hours, "Hours to simulate");
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", o.manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out", o.out, "Output directory (defaults to the recorded one)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? success : input_error;
  }

  try {
    if (replay->parsed()) {
      auto recorded = manifest_args(o.manifest);
      if (replay->count("--out") > 0) {
        recorded.push_back("--out");
        recorded.push_back(o.out.string());
      }
      return run(recorded, out, err);
    }
    if (central->parsed()) return cmd_centralized(o, args, out);
    if (negotiate->parsed()) return cmd_negotiate(o, args, out);
    if (sweep->parsed()) return cmd_duopoly_sweep(o, args, out);
    if (horizon->parsed()) return cmd_moving_horizon(o, args, out);
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return infeasible;
  } catch (const SolverError& e) {
    err << "error: " << e.what() << "\n";
    return not_converged;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return input_error;
  } catch (const ScenarioError& e) {
    err << "error: " << e.what() << "\n";
    return input_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return input_error;
  }
  return input_error;
}

}  // namespace gridbroker::cli
