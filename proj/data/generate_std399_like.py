# Writes std399_like.json next to this script.
import json, math, os
T = 24
rho = [round(0.8 + 0.2 * math.cos(2 * math.pi * (t - 18) / 24), 6) for t in range(T)]
# net-load shape, read cyclically: strictly falling from a two-hour evening
# peak through midnight to a two-hour midday valley, strictly rising back
shape = [2.7, 2.6, 2.5, 2.4, 2.3, 2.2, 2.1, 2.0, 1.85, 1.7, 1.5, 1.3, 0.4, 0.4,
         1.0, 1.4, 1.8, 2.2, 2.6, 3.6, 3.6, 3.0, 2.9, 2.8]
pv_shape = [0]*8 + [0.3, 0.8, 1.4, 2.0, 2.4, 2.4, 2.0, 1.4, 0.8, 0.3] + [0]*6
def comm(scale, pv_scale):
    nl = [round(scale * s, 6) for s in shape]
    pv = [round(pv_scale * p, 6) for p in pv_shape]
    load = [round(a + b, 6) for a, b in zip(nl, pv)]
    return load, pv
c1 = comm(1.0, 1.0); c2 = comm(0.4, 0.5); c3 = comm(0.6, 0.8)
c4 = ([round(2.5 * r, 6) for r in rho], [0.0] * T)
doc = {
  "horizon": T,
  "reserve_fraction": 0.1,
  "network": {
    "buses": [100, 4, 9, 29, 30, 50], "slack_bus": 100, "base_mva": 100,
    "branches": [
      {"from": 100, "to": 4, "susceptance": 10.0, "flow_limit": 20.0},
      {"from": 4, "to": 9, "susceptance": 8.0, "flow_limit": 1.0},
      {"from": 4, "to": 29, "susceptance": 8.0, "flow_limit": 1.0},
      {"from": 4, "to": 30, "susceptance": 8.0, "flow_limit": 1.5},
      {"from": 4, "to": 50, "susceptance": 12.0, "flow_limit": 20.0}]},
  "generators": [
    {"name": "G100", "bus": 100, "owner": "utility", "p_min": 0, "p_max": 2, "r_max": 0, "alpha": 0.1, "beta": 55, "gamma": 0},
    {"name": "G4", "bus": 4, "owner": "utility", "p_min": 0, "p_max": 12, "r_max": 2, "alpha": 0.3, "beta": 50, "gamma": 0},
    {"name": "G9", "bus": 9, "owner": "uG1", "p_min": 0, "p_max": 5, "r_max": 0, "alpha": 0.4, "beta": 42, "gamma": 0},
    {"name": "G29", "bus": 29, "owner": "uG2", "p_min": 0, "p_max": 3, "r_max": 0, "alpha": 0.4, "beta": 35, "gamma": 0},
    {"name": "G30", "bus": 30, "owner": "uG3", "p_min": 0, "p_max": 4, "r_max": 0, "alpha": 0.2, "beta": 38, "gamma": 0},
    {"name": "G50", "bus": 50, "owner": "uG4", "p_min": 0, "p_max": 11, "r_max": 8.8, "alpha": 0.2, "beta": 49, "gamma": 0}],
  "communities": [
    {"name": "uG1", "bus": 9, "battery": {"p_min": -0.5, "p_max": 0.5, "e_min": 0, "e_max": 1.0, "e_init": 0}},
    {"name": "uG2", "bus": 29, "battery": {"p_min": -0.2, "p_max": 0.2, "e_min": 0, "e_max": 0.4, "e_init": 0}},
    {"name": "uG3", "bus": 30, "battery": {"p_min": -0.3, "p_max": 0.3, "e_min": 0, "e_max": 0.6, "e_init": 0}},
    {"name": "uG4", "bus": 50, "battery": {"p_min": -0.05, "p_max": 0.05, "e_min": 0, "e_max": 0.05, "e_init": 0}}],
  "profiles": {
    "demand_scaling": rho,
    "bus_load": {"100": [4.0] * T, "4": [11.0] * T},
    "community_load": {"uG1": c1[0], "uG2": c2[0], "uG3": c3[0], "uG4": c4[0]},
    "community_pv": {"uG1": c1[1], "uG2": c2[1], "uG3": c3[1], "uG4": c4[1]}},
  "_comment": "Synthetic 6-bus radial feeder. Generator cost rows are fixed inputs; the demand scaling is a synthetic diurnal sinusoid between 0.6 and 1.0 peaking at hour 18; community load and PV profiles are synthetic."
}
out = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'std399_like.json')
with open(out, 'w') as f:
    json.dump(doc, f, indent=2)
    f.write('\n')
