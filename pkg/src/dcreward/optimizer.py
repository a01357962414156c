"""Convex programs for cost-minimal request deferral under profit neutrality.

Three variants share one decision variable, the deferral schedule
``eta[d, t]``:

* ``base``: tariff cost of the scheduled load.
* ``shutdown``: servers may be switched off; adds toggling energy and wear.
* ``renewable``: local generation offsets the bill; surplus is dropped.

Every variant keeps the operator's profit at least at its no-deferral
level, with rewards priced by :func:`dcreward.incentives.optimal_reward`.
Demand-charge maxima and ``max(x, 0)`` terms become epigraph variables, so
each program is linear except for one convex quadratic (the reward).
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .core import (
    BillingModel,
    CostBreakdown,
    DeferralSchedule,
    DemandInput,
    FleetModel,
    ModelError,
    baseline_cost,
    boundary_mask,
    scheduled_load,
)
from .incentives import RewardSchedule, optimal_reward, reward_at_optimum, total_reward

log = logging.getLogger(__name__)

MODES = ("base", "shutdown", "renewable")

# weight of the "defer as little as possible" tie-break, relative to the bill
TIE_BREAK = 1e-9


class SolverError(RuntimeError):
    pass


class InfeasibleError(SolverError):
    def __init__(self, message: str, families=()):
        super().__init__(message)
        self.families = list(families)


class ConvergenceError(SolverError):
    pass


@dataclass(frozen=True)
class ShutdownParams:
    """Server on/off model: ``m0`` servers on at the start of the cycle.

    Each toggle costs ``e_tog`` KWh of facility-side energy (scaled by PUE)
    and every turn-on adds ``c_wear`` dollars of wear.
    """

    m0: float
    e_tog: float = 0.01
    c_wear: float = 0.01

    def __post_init__(self):
        if self.e_tog < 0 or self.c_wear < 0:
            raise ModelError("toggle energy and wear cost must be non-negative")


@dataclass(frozen=True)
class RenewableProfile:
    """Local generation per slot, in KWh."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 1 or not np.all(np.isfinite(g)):
            raise ModelError("renewable series must be a finite 1-D array")
        if np.any(g < 0):
            raise ModelError("renewable energy must be non-negative")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-6
    optimality: float = 1e-6
    max_iter: int = 500


@dataclass
class ProgramSpec:
    """A built (not yet solved) program with handles to its pieces."""

    mode: str
    demand: DemandInput
    fleet: FleetModel
    billing: BillingModel
    d_max: int
    baseline: CostBreakdown
    problem: cp.Problem
    variables: dict
    expressions: dict
    mask: np.ndarray
    weight: np.ndarray
    shutdown: ShutdownParams | None = None
    green: RenewableProfile | None = None
    pinned_toggles: bool = False

    def describe(self) -> str:
        n = sum(v.size for v in self.variables.values())
        return f"{self.mode} program: {n} variables, {len(self.problem.constraints)} constraint blocks"


@dataclass(frozen=True)
class ShutdownPlan:
    m_on: np.ndarray
    m_off: np.ndarray
    m: np.ndarray

    def rounded(self, lambda_hat, nu: float, N: int) -> "ShutdownPlan":
        """Integral plan with enough servers for the load; for reporting only."""
        need = np.ceil(np.asarray(lambda_hat) / nu - 1e-9)
        m = np.clip(np.maximum(np.round(self.m), need), 0, N)
        if np.any(m * nu < np.asarray(lambda_hat) - 1e-9):
            raise ModelError("rounded shutdown plan cannot serve the scheduled load")
        m0 = m[0] - (self.m_on[0] - self.m_off[0])
        step = np.diff(np.concatenate([[np.round(m0)], m]))
        return ShutdownPlan(np.maximum(step, 0), np.maximum(-step, 0), m)


@dataclass
class Solution:
    mode: str
    schedule: DeferralSchedule
    rewards: RewardSchedule
    cost: CostBreakdown
    peak_kw: float
    program: ProgramSpec
    shutdown: ShutdownPlan | None = None
    program_objective: float = float("nan")
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ResidualReport:
    """Largest relative violation per constraint family, with offending slots."""

    residuals: dict
    slots: dict
    tol: float

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    @property
    def violated(self) -> list[str]:
        return [k for k, v in self.residuals.items() if v > self.tol]

    def __str__(self) -> str:
        lines = []
        for k, v in self.residuals.items():
            flag = "ok" if v <= self.tol else "VIOLATED"
            where = f" slots={self.slots[k][:10]}" if self.slots.get(k) else ""
            lines.append(f"{k:<16} {v:.3e} {flag}{where}")
        return "\n".join(lines)


# --- program construction -------------------------------------------------


def _free_mask(demand: DemandInput, d_max: int) -> np.ndarray:
    mask = boundary_mask(d_max, demand.tau)
    # no elastic demand -> nothing may be deferred, and the reward price is undefined
    mask[1:, demand.elastic <= 0] = 0.0
    mask[:, demand.lam <= 0] = 0.0
    return mask


def _routing(mask: np.ndarray, lam: np.ndarray):
    """Sparse maps from routed request fractions to per-slot quantities.

    A decision variable is the share of slot ``t``'s requests served at
    ``t + d``; these shares are O(1), which keeps the conic solver well
    conditioned regardless of the request volume.
    """
    d_idx, t_idx = np.nonzero(mask)
    n = d_idx.size
    tau = mask.shape[1]
    cols = np.arange(n)
    ones = np.ones(n)
    weight = lam[t_idx]
    served = sp.csr_matrix((weight, (t_idx + d_idx, cols)), shape=(tau, n))
    generated = sp.csr_matrix((ones, (t_idx, cols)), shape=(tau, n))
    late = d_idx >= 1
    deferred = sp.csr_matrix((ones[late], (t_idx[late], cols[late])), shape=(tau, n))
    return weight, served, generated, deferred


def _check_inputs(demand, fleet, billing, d_max):
    if int(d_max) != d_max or d_max < 0:
        raise ModelError("maximum deferral D must be a non-negative integer")
    tau = demand.tau
    if billing.tau != tau or fleet.e_pue.shape[0] != tau:
        raise ModelError("demand, billing and fleet horizons differ")
    demand.check_capacity(fleet)


def _common(demand, fleet, billing, d_max):
    _check_inputs(demand, fleet, billing, d_max)
    d_max = int(d_max)
    mask = _free_mask(demand, d_max)
    weight, served, generated, deferred = _routing(mask, demand.lam)
    x = cp.Variable(weight.size, nonneg=True, name="eta")
    lam_hat = served @ x
    share = deferred @ x  # deferred fraction of all requests generated in each slot
    active = demand.lam > 0
    # reward with the optimal price plugged in, written in the deferred share
    quad = np.zeros(demand.tau)
    quad[active] = ((demand.ub - demand.lb) * demand.lam / np.where(active, demand.pi, 1.0))[active]
    reward = cp.sum(cp.multiply(quad, cp.square(share)))
    reward = reward + (demand.lb * demand.lam) @ share
    constraints = [
        generated[active] @ x == 1.0,
        share <= demand.pi,
    ]
    baseline = baseline_cost(demand, fleet, billing)
    parts = dict(x=x, lam_hat=lam_hat, q=cp.multiply(demand.lam, share), reward=reward,
                 tie=TIE_BREAK * cp.sum(share) / max(1, int(np.count_nonzero(active))))
    return d_max, mask, weight, baseline, constraints, parts


def _facility_power(fleet: FleetModel, lam_hat, servers_on):
    return cp.multiply(fleet.e_pue, servers_on * fleet.e0 + lam_hat * (fleet.e1 / fleet.nu))


def _demand_epigraph(billing: BillingModel, load, floor_zero=False):
    z = cp.Variable(len(billing.windows), name="peak", nonneg=floor_zero)
    cons = [z[j] >= load[list(w.slots)] for j, w in enumerate(billing.windows)]
    betas = np.array([w.beta for w in billing.windows])
    charge = betas @ z if billing.windows else cp.Constant(0.0)
    return z, cons, charge


def _finish(mode, demand, fleet, billing, d_max, baseline, cons, parts, cost, wear, variables, extra_tie=0.0, **kw):
    """Assemble the program with cost and profit terms normalized by the baseline bill."""
    norm = baseline.total if baseline.total > 0 else 1.0
    cons.append((cost + parts["reward"] + wear) / norm <= 1.0)
    problem = cp.Problem(cp.Minimize(cost / norm + parts["tie"] + extra_tie), cons)
    expressions = {"cost": cost, "reward": parts["reward"], "lam_hat": parts["lam_hat"], "q": parts["q"]}
    if not isinstance(wear, float):
        expressions["wear"] = wear
    return ProgramSpec(mode, demand, fleet, billing, d_max, baseline, problem,
                       variables={"eta": parts["x"], **variables}, expressions=expressions, **kw)


def build_base_program(demand: DemandInput, fleet: FleetModel, billing: BillingModel, d_max: int) -> ProgramSpec:
    d_max, mask, weight, baseline, cons, parts = _common(demand, fleet, billing, d_max)
    lam_hat = parts["lam_hat"]
    power = _facility_power(fleet, lam_hat, fleet.N)
    z, epi, demand_charge = _demand_epigraph(billing, power)
    energy = cp.sum(cp.multiply(billing.T * billing.alpha, power))
    cons += epi
    cons.append(lam_hat / fleet.capacity <= 1.0)
    return _finish("base", demand, fleet, billing, d_max, baseline, cons, parts,
                   energy + demand_charge, 0.0, {"peak": z}, mask=mask, weight=weight)


def build_shutdown_program(
    demand: DemandInput,
    fleet: FleetModel,
    billing: BillingModel,
    d_max: int,
    params: ShutdownParams,
    pin_toggles: bool = False,
) -> ProgramSpec:
    """Base program plus continuous server on/off decisions.

    ``pin_toggles`` fixes every toggle at zero, which with ``m0 = N``
    reduces the program to the base one.
    """
    if not 0 <= params.m0 <= fleet.N:
        raise ModelError(f"initial server count m0={params.m0} outside [0, {fleet.N}]")
    d_max, mask, weight, baseline, cons, parts = _common(demand, fleet, billing, d_max)
    tau, N = demand.tau, fleet.N
    lam_hat = parts["lam_hat"]
    # toggles in units of the whole fleet
    on = cp.Variable(tau, nonneg=True, name="m_on")
    off = cp.Variable(tau, nonneg=True, name="m_off")
    m = params.m0 + N * cp.cumsum(on - off)
    overhead = params.e_tog * N * (on + off)
    p_s = _facility_power(fleet, lam_hat, m)
    billed = p_s + cp.multiply(fleet.e_pue, overhead) / billing.T
    z, epi, demand_charge = _demand_epigraph(billing, billed)
    energy = cp.sum(cp.multiply(billing.alpha, billing.T * p_s + cp.multiply(fleet.e_pue, overhead)))
    wear = params.c_wear * N * cp.sum(on)
    cons += epi
    cons += [lam_hat / (fleet.nu * N) <= m / N, m / N <= 1.0]
    if pin_toggles:
        cons += [on == 0, off == 0]
    return _finish("shutdown", demand, fleet, billing, d_max, baseline, cons, parts,
                   energy + demand_charge, wear, {"peak": z, "m_on": on, "m_off": off},
                   extra_tie=TIE_BREAK * cp.sum(on + off) / tau,
                   mask=mask, weight=weight, shutdown=params, pinned_toggles=pin_toggles)


def build_renewable_program(
    demand: DemandInput,
    fleet: FleetModel,
    billing: BillingModel,
    d_max: int,
    green: RenewableProfile,
) -> ProgramSpec:
    if green.g.shape[0] != demand.tau:
        raise ModelError("renewable series horizon does not match demand")
    d_max, mask, weight, baseline, cons, parts = _common(demand, fleet, billing, d_max)
    lam_hat = parts["lam_hat"]
    power = _facility_power(fleet, lam_hat, fleet.N)
    grid = cp.Variable(demand.tau, nonneg=True, name="grid_energy")
    cons.append(grid >= billing.T * power - green.g)
    z, epi, demand_charge = _demand_epigraph(billing, power - green.g / billing.T, floor_zero=True)
    cons += epi
    cons.append(lam_hat / fleet.capacity <= 1.0)
    return _finish("renewable", demand, fleet, billing, d_max, baseline, cons, parts,
                   billing.alpha @ grid + demand_charge, 0.0, {"peak": z, "grid_energy": grid},
                   mask=mask, weight=weight, green=green)


def build_program(mode: str, demand, fleet, billing, d_max, shutdown=None, green=None, **kw) -> ProgramSpec:
    if mode == "base":
        return build_base_program(demand, fleet, billing, d_max)
    if mode == "shutdown":
        if shutdown is None:
            shutdown = ShutdownParams(m0=fleet.N)
        return build_shutdown_program(demand, fleet, billing, d_max, shutdown, **kw)
    if mode == "renewable":
        if green is None:
            raise ModelError("renewable mode needs a renewable profile")
        return build_renewable_program(demand, fleet, billing, d_max, green)
    raise ModelError(f"unknown mode {mode!r}; expected one of {MODES}")


# --- direct evaluation ----------------------------------------------------


def shutdown_power(lambda_hat, m, m_on, m_off, fleet: FleetModel, params: ShutdownParams):
    """Facility load with ``m`` servers on, and the toggling energy per slot (KWh)."""
    p_s = fleet.e_pue * (m * fleet.e0 + np.asarray(lambda_hat) / fleet.nu * fleet.e1)
    p_o = params.e_tog * (np.asarray(m_on) + np.asarray(m_off))
    return p_s, p_o


def shutdown_cost(p_s, p_o, e_pue, billing: BillingModel) -> CostBreakdown:
    billed = p_s + e_pue * p_o / billing.T
    energy = float(np.sum(billing.alpha * (billing.T * p_s + e_pue * p_o)))
    demand = tuple(w.beta * float(np.max(billed[list(w.slots)])) for w in billing.windows)
    return CostBreakdown(energy, demand)


def renewable_cost(power, g, billing: BillingModel) -> CostBreakdown:
    """Bill for grid energy left after local generation; unused generation is lost."""
    power = np.asarray(power, dtype=float)
    energy = float(np.sum(billing.alpha * np.maximum(billing.T * power - g, 0.0)))
    net = np.maximum(power - g / billing.T, 0.0)
    demand = tuple(w.beta * float(np.max(net[list(w.slots)])) for w in billing.windows)
    return CostBreakdown(energy, demand)


def _billed_load(program: ProgramSpec, lam_hat, plan: ShutdownPlan | None) -> np.ndarray:
    fleet = program.fleet
    if program.mode == "shutdown":
        p_s, p_o = shutdown_power(lam_hat, plan.m, plan.m_on, plan.m_off, fleet, program.shutdown)
        return p_s + fleet.e_pue * p_o / program.billing.T
    power = fleet.e_pue * fleet.N * (fleet.e0 + lam_hat / fleet.capacity * fleet.e1)
    if program.mode == "renewable":
        return np.maximum(power - program.green.g / program.billing.T, 0.0)
    return power


def _direct_cost(program: ProgramSpec, lam_hat, plan) -> tuple[CostBreakdown, float]:
    fleet, billing = program.fleet, program.billing
    if program.mode == "shutdown":
        p_s, p_o = shutdown_power(lam_hat, plan.m, plan.m_on, plan.m_off, fleet, program.shutdown)
        cost = shutdown_cost(p_s, p_o, fleet.e_pue, billing)
        return cost, program.shutdown.c_wear * float(np.sum(plan.m_on))
    power = fleet.e_pue * fleet.N * (fleet.e0 + lam_hat / fleet.capacity * fleet.e1)
    if program.mode == "renewable":
        return renewable_cost(power, program.green.g, billing), 0.0
    energy = float(np.sum(billing.T * billing.alpha * power))
    demand = tuple(w.beta * float(np.max(power[list(w.slots)])) for w in billing.windows)
    return CostBreakdown(energy, demand), 0.0


def _epigraph_objective(program: ProgramSpec, eta: np.ndarray, plan, lam_hat) -> float:
    """Value of the program's own cost expression at ``eta`` with tight epigraph variables."""
    v = program.variables
    v["eta"].value = np.maximum(eta[program.mask.astype(bool)], 0.0) / program.weight
    if plan is not None:
        v["m_on"].value = np.maximum(plan.m_on, 0.0) / program.fleet.N
        v["m_off"].value = np.maximum(plan.m_off, 0.0) / program.fleet.N
    load = _billed_load(program, lam_hat, plan)
    if program.billing.windows:
        v["peak"].value = np.array([np.max(load[list(w.slots)]) for w in program.billing.windows])
    if program.mode == "renewable":
        power = program.fleet.e_pue * program.fleet.N * (
            program.fleet.e0 + lam_hat / program.fleet.capacity * program.fleet.e1
        )
        v["grid_energy"].value = np.maximum(program.billing.T * power - program.green.g, 0.0)
    return float(program.expressions["cost"].value)


def evaluate_schedule(program: ProgramSpec, schedule: DeferralSchedule, plan: ShutdownPlan | None = None) -> Solution:
    """Price an arbitrary schedule (and server plan) under ``program``'s model."""
    demand = program.demand
    if schedule.eta.shape != program.mask.shape:
        raise ModelError(f"schedule shape {schedule.eta.shape} != {program.mask.shape}")
    if program.mode == "shutdown" and plan is None:
        n = program.fleet.N
        zeros = np.zeros(demand.tau)
        on = zeros.copy()
        on[0] = n - program.shutdown.m0
        plan = ShutdownPlan(on, zeros, np.full(demand.tau, float(n)))
    lam_hat = scheduled_load(schedule, demand)
    cost, wear = _direct_cost(program, lam_hat, plan)
    q = schedule.deferred
    try:
        rewards = optimal_reward(schedule, demand)
    except ModelError:
        # over-deferred schedules are still priced so that verification can flag them
        share = np.divide(q, demand.elastic, out=np.zeros_like(q), where=demand.elastic > 0)
        rewards = RewardSchedule(demand.lb + (demand.ub - demand.lb) * share)
    reward = total_reward(schedule, rewards)
    cost = CostBreakdown(cost.energy, cost.demand, reward=reward, wear=wear, baseline=program.baseline.total)
    peak = float(np.max(_billed_load(program, lam_hat, plan)))
    objective = _epigraph_objective(program, schedule.eta, plan, lam_hat)
    return Solution(program.mode, schedule, rewards, cost, peak, program, plan, objective)


# --- solving --------------------------------------------------------------


def _polish(program: ProgramSpec, x: np.ndarray) -> DeferralSchedule:
    """Snap solver output onto the exact demand rows and deferral caps."""
    demand = program.demand
    eta = np.zeros(program.mask.shape)
    eta[program.mask.astype(bool)] = np.maximum(x, 0.0) * program.weight
    late = eta[1:]
    q = late.sum(axis=0)
    cap = demand.elastic
    over = q > cap
    if np.any(over):
        late[:, over] *= cap[over] / q[over]
    eta[0] = np.maximum(demand.lam - late.sum(axis=0), 0.0)
    return DeferralSchedule(eta)


def solve(program: ProgramSpec, tol: Tolerances | float | None = None) -> Solution:
    """Solve with Clarabel and return a verified solution.

    Raises :class:`InfeasibleError` when no profit-neutral schedule exists
    and :class:`ConvergenceError` when the solver stalls or the result fails
    verification at ``tol``.
    """
    if tol is None:
        tol = Tolerances()
    elif not isinstance(tol, Tolerances):
        tol = Tolerances(float(tol), float(tol))
    inner = min(1e-8, 1e-2 * min(tol.feasibility, tol.optimality))
    started = time.perf_counter()
    try:
        program.problem.solve(
            solver=cp.CLARABEL,
            max_iter=tol.max_iter,
            tol_gap_abs=inner,
            tol_gap_rel=inner,
            tol_feas=inner,
            tol_ktratio=1e-6,
        )
    except cp.SolverError as exc:
        raise ConvergenceError(f"{program.mode}: solver failed: {exc}") from exc
    elapsed = time.perf_counter() - started
    status = program.problem.status
    stats = program.problem.solver_stats
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        families = _identity_violations(program)
        raise InfeasibleError(f"{program.mode}: program infeasible ({', '.join(families)})", families)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise ConvergenceError(f"{program.mode}: solver status {status}")
    schedule = _polish(program, program.variables["eta"].value)
    plan = None
    if program.mode == "shutdown":
        on = np.maximum(program.variables["m_on"].value, 0.0) * program.fleet.N
        off = np.maximum(program.variables["m_off"].value, 0.0) * program.fleet.N
        if program.pinned_toggles:
            on, off = np.zeros_like(on), np.zeros_like(off)
        plan = ShutdownPlan(on, off, program.shutdown.m0 + np.cumsum(on - off))
    raw_objective = float(program.expressions["cost"].value)
    solution = evaluate_schedule(program, schedule, plan)
    solution.diagnostics = {
        "status": status,
        "iterations": getattr(stats, "num_iters", None),
        "solve_time_s": elapsed,
        "solver_objective": raw_objective,
    }
    report = verify_solution(solution, tol.feasibility)
    solution.diagnostics["residuals"] = report.residuals
    if not report.ok:
        raise ConvergenceError(f"{program.mode}: solution fails verification:\n{report}")
    log.debug("%s D=%d solved in %.3fs (%s)", program.mode, program.d_max, elapsed, status)
    return solution


def _identity_violations(program: ProgramSpec) -> list[str]:
    ident = DeferralSchedule.identity(program.demand, program.d_max)
    report = verify_solution(evaluate_schedule(program, ident), 1e-9)
    return report.violated or ["unknown"]


def verify_solution(solution: Solution, tol: float = 1e-6, objective_rtol: float = 1e-9) -> ResidualReport:
    """Re-check every constraint family from scratch; never raises."""
    program = solution.program
    demand, fleet = program.demand, program.fleet
    eta = solution.schedule.eta
    tau = demand.tau
    scale = max(1.0, float(np.max(demand.lam)))
    res, where = {}, {}

    def record(name, viol, norm, limit=None):
        viol = np.asarray(viol, dtype=float) / norm
        res[name] = float(max(np.max(viol, initial=0.0), 0.0))
        where[name] = np.flatnonzero(viol > (tol if limit is None else limit)).tolist()

    neg = np.max(-eta, axis=0)
    record("nonnegativity", neg, scale)
    spill = np.max(np.abs(eta) * (boundary_mask(program.d_max, tau) == 0), axis=0)
    record("boundary", spill, scale)
    record("demand", np.abs(eta.sum(axis=0) - demand.lam), scale)
    lam_hat = scheduled_load(solution.schedule, demand)
    q = solution.schedule.deferred
    record("deferral_cap", q - demand.elastic, scale)
    gamma = solution.rewards.gamma
    span = np.max(demand.ub)
    record("reward_bounds", np.maximum(demand.lb - gamma, gamma - demand.ub), span)
    plan = solution.shutdown
    if program.mode == "shutdown" and plan is not None:
        record("servers", np.maximum(lam_hat / fleet.nu - plan.m, plan.m - fleet.N), fleet.N)
        record("toggles", np.maximum(-plan.m_on, -plan.m_off), fleet.N)
    else:
        record("capacity", lam_hat - fleet.capacity, fleet.capacity)
    base = program.baseline.total
    cost, wear = _direct_cost(program, lam_hat, plan)
    reward = reward_at_optimum(q, demand)
    record("profit", [cost.total + reward + wear - base], abs(base) or 1.0)
    mismatch = abs(solution.program_objective - cost.total) / max(abs(cost.total), 1e-12)
    # scaled so that the shared threshold ``tol`` corresponds to ``objective_rtol``
    res["objective"] = mismatch * tol / objective_rtol
    where["objective"] = []
    return ResidualReport(res, where, tol)


# --- brute-force oracle ---------------------------------------------------


@dataclass
class OracleResult:
    schedule: DeferralSchedule
    cost: float
    reward: float
    wear: float
    evaluated: int
    plan: ShutdownPlan | None = None


def _slot_options(demand: DemandInput, d_max: int, grid_steps: int) -> list[np.ndarray]:
    """Per generating slot, every grid point of its deferral simplex as an ``eta`` column."""
    tau = demand.tau
    mask = _free_mask(demand, d_max)
    out = []
    levels = grid_steps - 1
    for t in range(tau):
        free = [d for d in range(1, d_max + 1) if mask[d, t]]
        step = demand.elastic[t] / levels if free else 0.0
        cols = []
        for ks in itertools.product(range(levels + 1), repeat=len(free)):
            if sum(ks) > levels:
                continue
            col = np.zeros(d_max + 1)
            for d, k in zip(free, ks):
                col[d] = k * step
            col[0] = demand.lam[t] - col[1:].sum()
            cols.append(col)
        out.append(np.array(cols))
    return out


def brute_force_oracle(
    demand: DemandInput,
    fleet: FleetModel,
    billing: BillingModel,
    d_max: int,
    grid_steps: int = 21,
    mode: str = "base",
    green: RenewableProfile | None = None,
    shutdown: ShutdownParams | None = None,
    server_steps: int = 3,
    max_points: int = 10**7,
    chunk: int = 20000,
) -> OracleResult:
    """Exhaustive search over a grid of deferral schedules (test oracle).

    Each slot's deferred volume is enumerated on ``grid_steps`` levels of
    its elastic demand. In shutdown mode the number of servers on in each
    slot is either exactly enough for the load or one of ``server_steps``
    levels spread over ``[0, N]``.
    Returns the cheapest profit-neutral grid point; ties go to the smaller
    total deferral.
    """
    _check_inputs(demand, fleet, billing, d_max)
    tau = demand.tau
    options = _slot_options(demand, d_max, grid_steps)
    sizes = [len(o) for o in options]
    total = int(np.prod(sizes, dtype=float))
    servers = None
    if mode == "shutdown":
        shutdown = shutdown or ShutdownParams(m0=fleet.N)
        servers = np.array(list(itertools.product(range(server_steps + 1), repeat=tau)))
        total *= len(servers)
    elif mode == "renewable" and green is None:
        raise ModelError("renewable oracle needs a renewable profile")
    if total > max_points:
        raise ModelError(f"oracle grid has {total} points, limit is {max_points}")
    base = baseline_cost(demand, fleet, billing).total
    lb, ub, elastic = demand.lb, demand.ub, demand.elastic
    alpha_t = billing.alpha * billing.T
    best = (np.inf, np.inf, None, None)
    n_eta = int(np.prod(sizes, dtype=float))
    for start in range(0, n_eta, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, n_eta)), sizes)
        eta = np.stack([options[t][idx[t]] for t in range(tau)], axis=2)  # (k, D+1, tau)
        lam_hat = np.zeros((eta.shape[0], tau))
        for d in range(min(d_max, tau - 1) + 1):
            lam_hat[:, d:] += eta[:, d, : tau - d]
        q = eta[:, 1:, :].sum(axis=1)
        gamma = lb + (ub - lb) * np.divide(q, elastic, out=np.zeros_like(q), where=elastic > 0)
        reward = np.sum(gamma * q, axis=1)
        ok = np.all(lam_hat <= fleet.capacity * (1 + 1e-12), axis=1)
        if mode == "shutdown":
            best = _shutdown_scan(best, eta, lam_hat, q, reward, servers, fleet, billing, shutdown, base)
            continue
        power = fleet.e_pue * (fleet.N * fleet.e0 + lam_hat * fleet.e1 / fleet.nu)
        if mode == "renewable":
            energy = np.sum(billing.alpha * np.maximum(billing.T * power - green.g, 0.0), axis=1)
            billed = np.maximum(power - green.g / billing.T, 0.0)
        else:
            energy = power @ alpha_t
            billed = power
        cost = energy + sum(w.beta * billed[:, list(w.slots)].max(axis=1) for w in billing.windows)
        ok &= cost + reward <= base * (1 + 1e-12)
        best = _pick(best, cost, q.sum(axis=1), ok, eta, reward, None)
    cost, _, eta, extra = best
    if eta is None:
        raise ModelError("no grid point is profit-neutral")
    reward, wear, plan = extra
    return OracleResult(DeferralSchedule(eta), float(cost), float(reward), float(wear), total, plan)


def _pick(best, cost, deferral, ok, eta, reward, plans, wear=None):
    if not np.any(ok):
        return best
    cost = np.where(ok, cost, np.inf)
    lo = cost.min()
    # lexicographic: cheapest, then least deferral
    near = np.flatnonzero(cost <= lo + 1e-12 * max(1.0, abs(lo)))
    i = near[np.argmin(deferral[near])]
    key = (cost[i], deferral[i])
    if key < best[:2]:
        w = 0.0 if wear is None else float(wear[i])
        return (cost[i], deferral[i], eta[i].copy(), (float(reward[i]), w, None if plans is None else plans[i]))
    return best


def _shutdown_scan(best, eta, lam_hat, q, reward, choices, fleet, billing, params, base):
    # choice 0 runs just enough servers for the load; choice c >= 1 picks grid level c - 1
    levels = np.linspace(0.0, fleet.N, choices.max())
    tight = lam_hat / fleet.nu
    m = np.where(choices[None] == 0, tight[:, None, :], levels[np.maximum(choices - 1, 0)][None])
    k, s, tau = m.shape
    step = np.diff(np.concatenate([np.full((k, s, 1), float(params.m0)), m], axis=2), axis=2)
    m_on, m_off = np.maximum(step, 0.0), np.maximum(-step, 0.0)
    lh = lam_hat[:, None, :]
    p_s = fleet.e_pue * (m * fleet.e0 + lh / fleet.nu * fleet.e1)
    p_o = params.e_tog * (m_on + m_off)
    energy = np.sum(billing.alpha * (billing.T * p_s + fleet.e_pue * p_o), axis=2)
    billed = p_s + fleet.e_pue * p_o / billing.T
    cost = energy + sum(w.beta * billed[..., list(w.slots)].max(axis=2) for w in billing.windows)
    wear = params.c_wear * m_on.sum(axis=2)
    ok = np.all(lh / fleet.nu <= m * (1 + 1e-12) + 1e-12, axis=2) & np.all(m <= fleet.N, axis=2)
    ok &= cost + reward[:, None] + wear <= base * (1 + 1e-12)
    deferral = np.repeat(q.sum(axis=1), s)
    plans = _LazyPlans(m.reshape(k * s, tau), m_on.reshape(k * s, tau), m_off.reshape(k * s, tau))
    return _pick(best, cost.reshape(-1), deferral, ok.reshape(-1), _LazyIndex(eta, np.repeat(np.arange(k), s)),
                 np.repeat(reward, s), plans, wear=wear.reshape(-1))


class _LazyIndex:
    def __init__(self, arr, index):
        self.arr, self.index = arr, index

    def __getitem__(self, i):
        return self.arr[self.index[i]]


class _LazyPlans:
    def __init__(self, servers, m_on, m_off):
        self.servers, self.m_on, self.m_off = servers, m_on, m_off

    def __getitem__(self, i):
        return ShutdownPlan(self.m_on[i].copy(), self.m_off[i].copy(), self.servers[i].copy())
