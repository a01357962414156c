"""
Switching servers off and using local wind
==========================================

Two extensions of the same program: idle servers can be turned off (at a
small toggling and wear cost), or a wind farm offsets grid energy.
"""

from dcreward import RenewableProfile, build_program, solve
from dcreward.harness import build_scenario, load_config

sc = build_scenario(load_config("configs/demo.yaml"))
D = 5

base = solve(build_program("base", sc.demand, sc.fleet, sc.billing, D))
sd = solve(build_program("shutdown", sc.demand, sc.fleet, sc.billing, D, shutdown=sc.shutdown))
plan = sd.shutdown.rounded(sd.program.expressions["lam_hat"].value, sc.fleet.nu, sc.fleet.N)
print(f"base      cost ${base.cost.total:8.2f}")
print(f"shutdown  cost ${sd.cost.total:8.2f}  wear ${sd.cost.wear:.2f}  "
      f"servers {plan.m.min():.0f}..{plan.m.max():.0f} of {sc.fleet.N}")

ren = solve(build_program("renewable", sc.demand, sc.fleet, sc.billing, D, green=sc.green))
print(f"renewable cost ${ren.cost.total:8.2f}  wind supplied {sc.green.g.sum():.0f} KWh")

# with no wind the renewable program is the base program
calm = solve(build_program("renewable", sc.demand, sc.fleet, sc.billing, D, green=RenewableProfile(0 * sc.green.g)))
print(f"calm week matches base: {abs(calm.cost.total - base.cost.total) / base.cost.total:.1e} relative gap")
