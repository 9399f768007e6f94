#!/usr/bin/env python3
"""Convert a MATPOWER case (via pypower) into a synchrony grid file.

Conversion choices:
  * Bus injections P_m = (Pg - Pd) / baseMVA from the solved case data. The
    generator total is rescaled (proportionally to Pg) so that sum(P_m) = 0,
    since the model is lossless.
  * Line capacity p_max = |V_i| |V_j| / (x * tap) from the case voltage
    magnitudes and series reactances; parallel branches are merged by adding
    capacities.
  * Every node gets the same inertia and damping (given on the command line).

Usage: convert_matpower.py case39 out.grid --inertia 0.05 --damping 0.05
"""

import argparse
import importlib
import json
import math


def convert(case_name, inertia, damping, omega_syn):
    case = getattr(importlib.import_module("pypower." + case_name), case_name)()
    base = float(case["baseMVA"])
    bus = case["bus"]
    index = {int(b[0]): k for k, b in enumerate(bus)}
    n = len(bus)

    pd = [float(b[2]) for b in bus]
    vm = [float(b[7]) for b in bus]
    pg = [0.0] * n
    for g in case["gen"]:
        if g[7] > 0:
            pg[index[int(g[0])]] += float(g[1])
    scale = sum(pd) / sum(pg)
    p_mech = [(pg[i] * scale - pd[i]) / base for i in range(n)]

    caps = {}
    for br in case["branch"]:
        if br[10] <= 0:
            continue
        i, j = index[int(br[0])], index[int(br[1])]
        tap = float(br[8]) if br[8] != 0 else 1.0
        cap = vm[i] * vm[j] / (float(br[3]) * tap)
        key = (min(i, j), max(i, j))
        caps[key] = caps.get(key, 0.0) + cap

    s = inertia * omega_syn
    nodes = []
    for i in range(n):
        kind = "generator" if pg[i] > 0 else ("load" if pd[i] > 0 else "bus")
        nodes.append({
            "id": i,
            "alpha": damping / s,
            "power": p_mech[i] / s,
            "inertia": inertia,
            "damping": damping,
            "p_mech": p_mech[i],
            "label": "bus %d %s" % (int(bus[i][0]), kind),
        })
    edges = [{"from": a, "to": b, "p_max": c} for (a, b), c in sorted(caps.items())]
    return {"version": 1, "name": case_name, "omega_syn": omega_syn, "nodes": nodes, "edges": edges}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("case")
    ap.add_argument("out")
    ap.add_argument("--inertia", type=float, required=True)
    ap.add_argument("--damping", type=float, required=True)
    ap.add_argument("--omega-syn", type=float, default=2 * math.pi * 60)
    args = ap.parse_args()
    doc = convert(args.case, args.inertia, args.damping, args.omega_syn)
    with open(args.out, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    print("%s: N=%d E=%d" % (args.out, len(doc["nodes"]), len(doc["edges"])))


if __name__ == "__main__":
    main()
