#include "gridbroker/model.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace gridbroker {

using nlohmann::json;

namespace {

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

Eigen::VectorXd to_vector(const json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(what + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json from_vector(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? field<T>(j, key, where) : fallback;
}

GeneratorSpec parse_generator(const json& j, std::size_t i) {
  const std::string where = "generators[" + std::to_string(i) + "]";
  GeneratorSpec g;
  g.name = field_or<std::string>(j, "name", "G" + std::to_string(i), where);
  g.bus_id = field<int>(j, "bus", where);
  g.p_min = field<double>(j, "p_min", where);
  g.p_max = field<double>(j, "p_max", where);
  g.r_max = field_or<double>(j, "r_max", 0.0, where);
  g.cost_alpha = field<double>(j, "alpha", where);
  g.cost_beta = field<double>(j, "beta", where);
  g.cost_gamma = field_or<double>(j, "gamma", 0.0, where);
  return g;
}

json generator_json(const GeneratorSpec& g, const std::string& owner) {
  return json{{"name", g.name},       {"bus", g.bus_id},         {"owner", owner},
              {"p_min", g.p_min},     {"p_max", g.p_max},        {"r_max", g.r_max},
              {"alpha", g.cost_alpha}, {"beta", g.cost_beta}, {"gamma", g.cost_gamma}};
}

}  // namespace

int NetworkSpec::index_of(int bus_id) const {
  const auto it = std::find(bus_ids.begin(), bus_ids.end(), bus_id);
  if (it == bus_ids.end()) throw std::out_of_range("unknown bus " + std::to_string(bus_id));
  return static_cast<int>(it - bus_ids.begin());
}

std::vector<GeneratorSpec> ScenarioSpec::all_generators() const {
  std::vector<GeneratorSpec> out = utility_generators;
  for (const auto& c : communities) out.push_back(c.generator);
  return out;
}

bool operator==(const CommunitySpec& a, const CommunitySpec& b) {
  return a.name == b.name && a.bus_id == b.bus_id && a.generator == b.generator && a.battery == b.battery &&
         same(a.pv_profile, b.pv_profile) && same(a.load_profile, b.load_profile);
}

bool operator==(const NetworkSpec& a, const NetworkSpec& b) {
  return a.bus_ids == b.bus_ids && a.branches == b.branches && a.slack_bus == b.slack_bus &&
         a.base_mva == b.base_mva;
}

bool operator==(const ScenarioSpec& a, const ScenarioSpec& b) {
  return a.network == b.network && a.utility_generators == b.utility_generators &&
         a.communities == b.communities && same(a.bus_load_profile, b.bus_load_profile) &&
         same(a.demand_scaling, b.demand_scaling) && a.reserve_fraction == b.reserve_fraction &&
         a.horizon == b.horizon;
}

void validate(const ScenarioSpec& spec) {
  auto fail = [](const std::string& what) { throw ValidationError(what); };
  const auto& net = spec.network;
  const int T = spec.horizon;
  if (T < 1) fail("horizon must be at least 1");
  if (net.bus_ids.empty()) fail("network has no buses");
  if (std::set<int>(net.bus_ids.begin(), net.bus_ids.end()).size() != net.bus_ids.size())
    fail("network bus ids are not unique");
  auto has_bus = [&](int id) { return std::find(net.bus_ids.begin(), net.bus_ids.end(), id) != net.bus_ids.end(); };
  if (!has_bus(net.slack_bus)) fail("slack bus " + std::to_string(net.slack_bus) + " is not a network bus");
  if (!(net.base_mva > 0)) fail("base_mva must be positive");

  std::vector<std::vector<int>> adj(net.bus_ids.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    const std::string name = "branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus);
    if (!has_bus(br.from_bus) || !has_bus(br.to_bus)) fail(name + " references an unknown bus");
    if (br.from_bus == br.to_bus) fail(name + " is a self loop");
    if (!(br.flow_limit > 0)) fail(name + ": flow_limit must be positive");
    if (!(br.susceptance > 0)) fail(name + ": susceptance must be positive");
    const int a = net.index_of(br.from_bus), b = net.index_of(br.to_bus);
    adj[std::size_t(a)].push_back(b);
    adj[std::size_t(b)].push_back(a);
  }
  std::vector<bool> seen(net.bus_ids.size(), false);
  std::queue<int> todo;
  todo.push(net.index_of(net.slack_bus));
  seen[std::size_t(todo.front())] = true;
  while (!todo.empty()) {
    const int u = todo.front();
    todo.pop();
    for (int v : adj[std::size_t(u)])
      if (!seen[std::size_t(v)]) {
        seen[std::size_t(v)] = true;
        todo.push(v);
      }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) fail("network is not connected");

  auto check_gen = [&](const GeneratorSpec& g) {
    const std::string name = "generator " + g.name;
    if (!has_bus(g.bus_id)) fail(name + " sits on unknown bus " + std::to_string(g.bus_id));
    if (!(g.p_min <= g.p_max)) fail(name + ": p_min > p_max");
    if (!(g.r_max >= 0)) fail(name + ": r_max must be nonnegative");
    if (!(g.cost_alpha >= 0)) fail(name + ": cost_alpha must be nonnegative");
    if (!std::isfinite(g.cost_beta) || !std::isfinite(g.cost_gamma)) fail(name + ": cost coefficients not finite");
  };
  for (const auto& g : spec.utility_generators) check_gen(g);

  std::set<int> community_buses;
  for (const auto& c : spec.communities) {
    const std::string name = "community " + c.name;
    if (!has_bus(c.bus_id)) fail(name + " sits on unknown bus " + std::to_string(c.bus_id));
    if (!community_buses.insert(c.bus_id).second) fail(name + ": more than one community on bus " + std::to_string(c.bus_id));
    check_gen(c.generator);
    if (c.generator.bus_id != c.bus_id) fail(name + ": generator is not on the community bus");
    const auto& b = c.battery;
    if (!(b.p_min <= 0 && 0 <= b.p_max)) fail(name + ": battery needs p_min <= 0 <= p_max");
    if (!(b.e_min <= b.e_init && b.e_init <= b.e_max)) fail(name + ": battery needs e_min <= e_init <= e_max");
    if (c.pv_profile.size() != T) fail(name + ": pv profile length differs from horizon");
    if (c.load_profile.size() != T) fail(name + ": load profile length differs from horizon");
    if ((c.pv_profile.array() < 0).any() || !c.pv_profile.allFinite()) fail(name + ": pv profile must be nonnegative");
    if ((c.load_profile.array() < 0).any() || !c.load_profile.allFinite()) fail(name + ": load profile must be nonnegative");
  }

  if (spec.bus_load_profile.rows() != T || spec.bus_load_profile.cols() != net.n_buses())
    fail("bus load profile must be horizon x n_buses");
  if ((spec.bus_load_profile.array() < 0).any() || !spec.bus_load_profile.allFinite())
    fail("bus load profile must be nonnegative");
  if (spec.demand_scaling.size() != T) fail("demand scaling length differs from horizon");
  if (!(spec.demand_scaling.array() > 0).all()) fail("demand scaling must be positive");
  if (!(spec.reserve_fraction >= 0)) fail("reserve_fraction must be nonnegative");
}

ScenarioSpec parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scenario root must be an object");
  for (const char* key : {"network", "generators", "communities", "profiles", "reserve_fraction", "horizon"})
    if (!doc.contains(key)) throw ParseError(std::string("scenario: missing key '") + key + "'");

  ScenarioSpec spec;
  spec.horizon = field<int>(doc, "horizon", "scenario");
  spec.reserve_fraction = field<double>(doc, "reserve_fraction", "scenario");

  const json& net = doc["network"];
  spec.network.bus_ids = field<std::vector<int>>(net, "buses", "network");
  spec.network.slack_bus = field<int>(net, "slack_bus", "network");
  spec.network.base_mva = field_or<double>(net, "base_mva", 100.0, "network");
  if (!net.contains("branches") || !net["branches"].is_array()) throw ParseError("network: missing branch list");
  for (std::size_t k = 0; k < net["branches"].size(); ++k) {
    const json& b = net["branches"][k];
    const std::string where = "network.branches[" + std::to_string(k) + "]";
    spec.network.branches.push_back(Branch{field<int>(b, "from", where), field<int>(b, "to", where),
                                           field<double>(b, "susceptance", where),
                                           field<double>(b, "flow_limit", where)});
  }

  if (!doc["generators"].is_array()) throw ParseError("generators must be an array");
  std::map<std::string, GeneratorSpec> community_gens;
  for (std::size_t i = 0; i < doc["generators"].size(); ++i) {
    const json& g = doc["generators"][i];
    const auto owner = field_or<std::string>(g, "owner", "utility", "generators[" + std::to_string(i) + "]");
    auto gen = parse_generator(g, i);
    if (owner == "utility") {
      spec.utility_generators.push_back(gen);
    } else if (!community_gens.emplace(owner, gen).second) {
      throw ValidationError("community " + owner + " owns more than one generator");
    }
  }

  const json& prof = doc["profiles"];
  spec.demand_scaling = to_vector(field<json>(prof, "demand_scaling", "profiles"), "profiles.demand_scaling");
  spec.bus_load_profile = Eigen::MatrixXd::Zero(spec.horizon > 0 ? spec.horizon : 0, spec.network.n_buses());
  if (prof.contains("bus_load")) {
    for (const auto& [bus, values] : prof["bus_load"].items()) {
      int id = 0;
      try {
        id = std::stoi(bus);
      } catch (const std::exception&) {
        throw ParseError("profiles.bus_load: key '" + bus + "' is not a bus id");
      }
      const auto v = to_vector(values, "profiles.bus_load." + bus);
      int col = 0;
      try {
        col = spec.network.index_of(id);
      } catch (const std::out_of_range&) {
        throw ValidationError("profiles.bus_load: unknown bus " + bus);
      }
      if (v.size() != spec.horizon) throw ValidationError("bus load profile for bus " + bus + " has length " +
                                                          std::to_string(v.size()) + ", expected horizon " +
                                                          std::to_string(spec.horizon));
      spec.bus_load_profile.col(col) = v;
    }
  }

  if (!doc["communities"].is_array()) throw ParseError("communities must be an array");
  for (std::size_t i = 0; i < doc["communities"].size(); ++i) {
    const json& c = doc["communities"][i];
    const std::string where = "communities[" + std::to_string(i) + "]";
    CommunitySpec cs;
    cs.name = field<std::string>(c, "name", where);
    cs.bus_id = field<int>(c, "bus", where);
    const auto gen = community_gens.find(cs.name);
    if (gen == community_gens.end()) throw ValidationError("community " + cs.name + " has no generator");
    cs.generator = gen->second;
    community_gens.erase(gen);
    const json& b = field<json>(c, "battery", where);
    cs.battery = BatterySpec{field<double>(b, "p_min", where + ".battery"), field<double>(b, "p_max", where + ".battery"),
                             field<double>(b, "e_min", where + ".battery"), field<double>(b, "e_max", where + ".battery"),
                             field<double>(b, "e_init", where + ".battery")};
    auto lookup = [&](const char* key) {
      const json& group = field<json>(prof, key, "profiles");
      if (!group.contains(cs.name)) throw ParseError(std::string("profiles.") + key + ": no entry for " + cs.name);
      return to_vector(group[cs.name], std::string("profiles.") + key + "." + cs.name);
    };
    cs.load_profile = lookup("community_load");
    cs.pv_profile = lookup("community_pv");
    spec.communities.push_back(std::move(cs));
  }
  if (!community_gens.empty())
    throw ValidationError("generator " + community_gens.begin()->second.name + " is owned by unknown community " +
                          community_gens.begin()->first);

  validate(spec);
  return spec;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string dump_scenario(const ScenarioSpec& spec) {
  json doc;
  doc["horizon"] = spec.horizon;
  doc["reserve_fraction"] = spec.reserve_fraction;
  json branches = json::array();
  for (const auto& b : spec.network.branches)
    branches.push_back({{"from", b.from_bus}, {"to", b.to_bus}, {"susceptance", b.susceptance}, {"flow_limit", b.flow_limit}});
  doc["network"] = {{"buses", spec.network.bus_ids},
                    {"slack_bus", spec.network.slack_bus},
                    {"base_mva", spec.network.base_mva},
                    {"branches", branches}};
  json gens = json::array();
  for (const auto& g : spec.utility_generators) gens.push_back(generator_json(g, "utility"));
  for (const auto& c : spec.communities) gens.push_back(generator_json(c.generator, c.name));
  doc["generators"] = gens;
  json comms = json::array();
  json loads = json::object(), pvs = json::object();
  for (const auto& c : spec.communities) {
    const auto& b = c.battery;
    comms.push_back({{"name", c.name},
                     {"bus", c.bus_id},
                     {"battery", {{"p_min", b.p_min}, {"p_max", b.p_max}, {"e_min", b.e_min}, {"e_max", b.e_max}, {"e_init", b.e_init}}}});
    loads[c.name] = from_vector(c.load_profile);
    pvs[c.name] = from_vector(c.pv_profile);
  }
  doc["communities"] = comms;
  json bus_load = json::object();
  for (int k = 0; k < spec.network.n_buses(); ++k)
    if (spec.bus_load_profile.rows() > 0 && (spec.bus_load_profile.col(k).array() != 0).any())
      bus_load[std::to_string(spec.network.bus_ids[std::size_t(k)])] = from_vector(spec.bus_load_profile.col(k));
  doc["profiles"] = {{"demand_scaling", from_vector(spec.demand_scaling)},
                     {"bus_load", bus_load},
                     {"community_load", loads},
                     {"community_pv", pvs}};
  return doc.dump(2) + "\n";
}

void save_scenario(const ScenarioSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("cannot write scenario file " + path.string());
  out << dump_scenario(spec);
}

Eigen::VectorXd scaled_load(const ScenarioSpec& spec, int t) {
  if (t < 0 || t >= spec.horizon) throw std::out_of_range("hour " + std::to_string(t) + " outside horizon");
  return spec.bus_load_profile.row(t).transpose() * spec.demand_scaling(t);
}

double total_load(const ScenarioSpec& spec, int t) {
  double total = scaled_load(spec, t).sum();
  for (const auto& c : spec.communities) total += c.load_profile(t);
  return total;
}

double reserve_requirement(const ScenarioSpec& spec, int t) { return spec.reserve_fraction * total_load(spec, t); }

double total_cost(const ScenarioSpec& spec, const Eigen::MatrixXd& dispatch) {
  const auto gens = spec.all_generators();
  if (dispatch.cols() != static_cast<Eigen::Index>(gens.size()))
    throw std::invalid_argument("total_cost: dispatch has wrong number of generator columns");
  double cost = 0;
  for (Eigen::Index t = 0; t < dispatch.rows(); ++t)
    for (std::size_t g = 0; g < gens.size(); ++g) cost += gens[g].cost(dispatch(t, Eigen::Index(g)));
  return cost;
}

ScenarioSpec rotate_profiles(const ScenarioSpec& spec, int start) {
  ScenarioSpec out = spec;
  const int T = spec.horizon;
  for (int s = 0; s < T; ++s) {
    const int src = ((start + s) % T + T) % T;
    out.bus_load_profile.row(s) = spec.bus_load_profile.row(src);
    out.demand_scaling(s) = spec.demand_scaling(src);
    for (std::size_t c = 0; c < spec.communities.size(); ++c) {
      out.communities[c].load_profile(s) = spec.communities[c].load_profile(src);
      out.communities[c].pv_profile(s) = spec.communities[c].pv_profile(src);
    }
  }
  return out;
}

}  // namespace gridbroker
