#!/usr/bin/env python3
"""Single-vehicle phase delays and energies, evaluated directly from the
profile file. Output values are frozen into tests/test_cost.cpp.

Usage: python3 scripts/cost_oracle.py [profiles/resnet18.json]
"""
import json
import math
import sys

path = sys.argv[1] if len(sys.argv) > 1 else "profiles/resnet18.json"
prof = json.load(open(path))

# operating point
d = 200.0            # m
f = 15e9             # Hz
phi = 10 ** ((25.0 - 30.0) / 10.0)  # 25 dBm in W
beta = 0.2
cut = 4
samples = 640
h = 1.0
zeta = 1e-30

# channel / EC
W = 10e6
noise = 1e-13
gamma = 3.0
h_r = 1.0
phi_r = 10.0
f_r = 50e9

row = prof["cut_layers"].index(cut)
kappa = prof["flops_per_cycle"]
bwd = prof["bwd_factor"]
gv = prof["fwd_vehicle_flops"][row]
gr = prof["fwd_server_flops"][row]
sa = prof["smashed_bits"][row]
sg = prof["smashed_grad_bits"][row]
sw = prof["vehicle_model_bits"][row]

r_dl = W * math.log(1.0 + h_r * phi_r * d ** (-gamma) / noise)
r_ul = beta * W * math.log(1.0 + h * phi * d ** (-gamma) / noise)

cv_f = gv / kappa
cv_b = bwd * gv / kappa

out = {
    "downlink_rate": r_dl,
    "uplink_rate": r_ul,
    "t_distribute": sw / r_dl,
    "t_execute": samples * cv_f / f,
    "e_execute": zeta / 2 * samples * cv_f * f * f,
    "t_smashed": samples * sa / r_ul,
    "e_smashed": phi * samples * sa / r_ul,
    "t_server": samples * (gr + bwd * gr) / (f_r * kappa),
    "t_gradient": samples * sg / r_dl,
    "t_update": samples * cv_b / f,
    "e_update": zeta / 2 * samples * cv_b * f * f,
    "t_model_up": sw / r_ul,
    "e_model_up": phi * sw / r_ul,
}
out["t_total"] = sum(v for k, v in out.items() if k.startswith("t_"))
out["e_total"] = sum(v for k, v in out.items() if k.startswith("e_"))
for k, v in out.items():
    print(f"{k} {v!r}")
