"""
Shaving a week of peaks by deferring requests
=============================================

Solve the cost-minimal deferral plan for growing horizons D and compare
against the bill with no demand response.
"""

import numpy as np

from dcreward import build_program, solve
from dcreward.harness import build_scenario, load_config

sc = build_scenario(load_config("configs/demo.yaml"))
base_peak = None
for D in (0, 1, 2, 5, 10):
    sol = solve(build_program("base", sc.demand, sc.fleet, sc.billing, D))
    base_peak = base_peak or sol.peak_kw
    c = sol.cost
    print(f"D={D:2d}  peak {sol.peak_kw / base_peak:.3f}  cost {c.total / c.baseline:.3f}  "
          f"reward ${c.reward:6.2f}  deferred {sol.schedule.deferred.sum():8.0f} requests")

# where did the requests go?  compare the busiest day before and after
lam_hat = sol.program.expressions["lam_hat"].value
day = slice(0, 24)
print("hour  before   after")
for h in range(0, 24, 3):
    print(f"{h:4d} {sc.demand.lam[day][h]:7.0f} {lam_hat[day][h]:7.0f}")
print(f"profit kept by the operator: ${sol.cost.profit_delta:.2e}")
