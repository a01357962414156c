"""
Tariff basics: what a data center pays for a week of requests
=============================================================

Energy is billed per KWh and the peak power of the cycle is billed per KW.
A sharp daily peak is expensive even when the average load is modest.
"""

import numpy as np

from dcreward import BillingModel, DemandInput, FleetModel, baseline_cost, power_profile, synth_diurnal_trace

tau = 168
lam = synth_diurnal_trace(tau, base=2000, amplitude=1500, noise_seed=7)
N = int(np.ceil(lam.max() / (0.9 * 20)))
fleet = FleetModel(N, e0=0.1, e1=0.1, nu=20, e_pue=1.2, tau=tau)
billing = BillingModel.flat(tau)

# power follows utilization linearly, on top of the idle floor
p = power_profile(lam, fleet).p
print(f"{N} servers, power {p.min():.2f} .. {p.max():.2f} KW")

cost = baseline_cost(DemandInput(lam), fleet, billing)
print(f"energy charge  ${cost.energy:8.2f}")
print(f"demand charge  ${sum(cost.demand):8.2f}   <- one slot sets this")
print(f"total          ${cost.total:8.2f}")

# flattening the same energy would remove most of the demand charge
flat = np.full(tau, lam.mean())
flat_cost = baseline_cost(DemandInput(flat), fleet, billing)
print(f"same requests spread evenly: ${flat_cost.total:.2f}")
