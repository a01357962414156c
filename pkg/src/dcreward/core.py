"""Billing, fleet and load mathematics for a single data center.

A billing cycle is split into ``tau`` slots of ``T`` hours each. Slot
indices are 0-based throughout the Python API (the CSV and config
formats use 1-based slots and are converted on load).

Units: money in USD, power in KW, energy in KWh, requests per slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ModelError(ValueError):
    """Invalid model input (shape, sign or range)."""


class CapacityError(ModelError):
    """Scheduled requests exceed the fleet capacity ``N * nu`` in some slot."""

    def __init__(self, message: str, slots: Sequence[int] = ()):
        super().__init__(message)
        self.slots = list(slots)


def _as_series(values, length: int | None, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 and length is not None:
        arr = np.full(length, float(arr))
    if arr.ndim != 1:
        raise ModelError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise ModelError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DemandWindow:
    """A demand-charge window: slots billed at ``beta`` $/KW on their peak."""

    slots: tuple[int, ...]
    beta: float


@dataclass(frozen=True, init=False)
class BillingModel:
    """Two-part tariff over one billing cycle.

    ``alpha`` is the per-slot energy price ($/KWh) and ``windows`` the
    demand-charge windows. Passing no windows means no demand charge.
    """

    tau: int
    T: float
    alpha: np.ndarray
    windows: tuple[DemandWindow, ...]

    def __init__(self, tau: int, T: float, alpha, windows=()):
        tau = int(tau)
        if tau < 1:
            raise ModelError("tau must be >= 1")
        if not (np.isfinite(T) and T > 0):
            raise ModelError("slot length T must be positive")
        alpha = _as_series(alpha, tau, "alpha")
        if np.any(alpha < 0):
            raise ModelError("energy prices must be non-negative")
        parsed = []
        for w in windows:
            if not isinstance(w, DemandWindow):
                slots, beta = w
                w = DemandWindow(tuple(int(s) for s in slots), float(beta))
            if len(w.slots) == 0:
                raise ModelError("demand window has no slots")
            if min(w.slots) < 0 or max(w.slots) >= tau:
                raise ModelError(f"demand window slots must lie in 0..{tau - 1}")
            if not (np.isfinite(w.beta) and w.beta >= 0):
                raise ModelError("demand prices must be finite and non-negative")
            parsed.append(DemandWindow(tuple(sorted(set(w.slots))), float(w.beta)))
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "T", float(T))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "windows", tuple(parsed))

    @classmethod
    def flat(cls, tau: int, T: float = 1.0, alpha: float = 0.05207, beta: float = 15.59):
        """Constant energy price and a single demand window over the whole cycle."""
        return cls(tau, T, np.full(tau, alpha), [(range(tau), beta)])


@dataclass(frozen=True, init=False)
class FleetModel:
    """Homogeneous server fleet with a linear utilization-to-power model."""

    N: int
    e0: float
    e1: float
    nu: float
    e_pue: np.ndarray

    def __init__(self, N: int, e0: float, e1: float, nu: float, e_pue, tau: int | None = None):
        if int(N) != N or N < 1:
            raise ModelError("server count N must be an integer >= 1")
        if e0 < 0 or e1 < 0:
            raise ModelError("server power coefficients must be non-negative")
        if not nu > 0:
            raise ModelError("per-server capacity nu must be positive")
        e_pue = _as_series(e_pue, tau, "e_pue")
        if np.any(e_pue < 1):
            raise ModelError("PUE must be >= 1")
        object.__setattr__(self, "N", int(N))
        object.__setattr__(self, "e0", float(e0))
        object.__setattr__(self, "e1", float(e1))
        object.__setattr__(self, "nu", float(nu))
        object.__setattr__(self, "e_pue", e_pue)

    @property
    def capacity(self) -> float:
        return self.N * self.nu


@dataclass(frozen=True, init=False)
class DemandInput:
    """Aggregate requests with the elastic share and utility-loss bounds.

    ``lb``/``ub`` bound the per-request utility loss of elastic users;
    their loss factors are taken as uniform on ``[lb, ub]``.
    """

    lam: np.ndarray
    pi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __init__(self, lam, pi=0.5, lb=1e-3, ub=1e-2):
        lam = _as_series(lam, None, "lambda")
        tau = lam.shape[0]
        pi = _as_series(pi, tau, "pi")
        lb = _as_series(lb, tau, "lb")
        ub = _as_series(ub, tau, "ub")
        if np.any(lam < 0):
            raise ModelError("request counts must be non-negative")
        if np.any((pi < 0) | (pi > 1)):
            raise ModelError("elastic fraction pi must lie in [0, 1]")
        if np.any(lb < 0) or np.any(lb >= ub):
            raise ModelError("utility-loss bounds need 0 <= lb < ub")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def tau(self) -> int:
        return self.lam.shape[0]

    @property
    def elastic(self) -> np.ndarray:
        """Most requests that may be deferred per slot, ``pi * lambda``."""
        return self.pi * self.lam

    def check_capacity(self, fleet: FleetModel) -> None:
        over = np.flatnonzero(self.lam > fleet.capacity * (1 + 1e-12))
        if over.size:
            raise CapacityError(
                f"demand exceeds capacity N*nu={fleet.capacity:g} in slots {over.tolist()}",
                over.tolist(),
            )


@dataclass(frozen=True, init=False)
class DeferralSchedule:
    """Request routing ``eta[d, t]``: requests generated at ``t`` served at ``t + d``."""

    eta: np.ndarray

    def __init__(self, eta):
        eta = np.array(eta, dtype=float)
        if eta.ndim != 2:
            raise ModelError("eta must have shape (D + 1, tau)")
        if not np.all(np.isfinite(eta)):
            raise ModelError("eta contains non-finite values")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def d_max(self) -> int:
        return self.eta.shape[0] - 1

    @property
    def tau(self) -> int:
        return self.eta.shape[1]

    @property
    def deferred(self) -> np.ndarray:
        """Requests deferred out of each slot, ``sum_{d>=1} eta[d, t]``."""
        return self.eta[1:].sum(axis=0)

    @classmethod
    def identity(cls, demand: DemandInput, d_max: int = 0) -> "DeferralSchedule":
        eta = np.zeros((d_max + 1, demand.tau))
        eta[0] = demand.lam
        return cls(eta)

    def violations(self, demand: DemandInput, atol: float = 1e-9) -> dict[str, list[int]]:
        """Slots breaking non-negativity, demand satisfaction or the cycle boundary."""
        tau = demand.tau
        scale = max(1.0, float(np.max(demand.lam, initial=0.0)))
        bad_neg = np.flatnonzero(np.any(self.eta < -atol * scale, axis=0))
        bad_sum = np.flatnonzero(np.abs(self.eta.sum(axis=0) - demand.lam) > atol * scale)
        spill = boundary_mask(self.d_max, tau) == 0
        bad_spill = np.flatnonzero(np.any(np.abs(self.eta) * spill > atol * scale, axis=0))
        return {
            "nonnegativity": bad_neg.tolist(),
            "demand": bad_sum.tolist(),
            "boundary": bad_spill.tolist(),
        }


def boundary_mask(d_max: int, tau: int) -> np.ndarray:
    """1 where ``eta[d, t]`` may be non-zero, i.e. ``t + d`` stays inside the cycle."""
    d = np.arange(d_max + 1)[:, None]
    t = np.arange(tau)[None, :]
    return (t + d < tau).astype(float)


@dataclass(frozen=True)
class PowerProfile:
    p: np.ndarray


@dataclass(frozen=True)
class CostBreakdown:
    """Electricity bill plus the incentive terms of one run.

    ``total`` is the tariff cost (energy plus demand charges).
    ``profit_delta`` is ``baseline - (total + reward + wear)``.
    """

    energy: float
    demand: tuple[float, ...]
    reward: float = 0.0
    wear: float = 0.0
    baseline: float = float("nan")

    @property
    def total(self) -> float:
        return self.energy + sum(self.demand)

    @property
    def profit_delta(self) -> float:
        return self.baseline - (self.total + self.reward + self.wear)


def _check_horizon(n: int, tau: int, what: str) -> None:
    if n != tau:
        raise ModelError(f"{what} horizon {n} does not match {tau}")


def scheduled_load(schedule: DeferralSchedule, demand: DemandInput) -> np.ndarray:
    """Requests served in each slot, ``sum_d eta[d, t - d]``.

    Anything routed past the last slot is dropped here; the boundary rule
    keeps feasible schedules from ever doing that.
    """
    _check_horizon(schedule.tau, demand.tau, "schedule")
    tau = schedule.tau
    out = np.zeros(tau)
    for d in range(min(schedule.d_max, tau - 1) + 1):
        out[d:] += schedule.eta[d, : tau - d]
    return out


def utilization(lambda_hat, fleet: FleetModel) -> np.ndarray:
    lam = np.asarray(lambda_hat, dtype=float)
    if np.any(lam < 0):
        raise ModelError("scheduled load must be non-negative")
    over = np.flatnonzero(lam > fleet.capacity * (1 + 1e-9))
    if over.size:
        raise CapacityError(f"scheduled load exceeds capacity in slots {over.tolist()}", over.tolist())
    return lam / fleet.capacity


def power_profile(lambda_hat, fleet: FleetModel) -> PowerProfile:
    """Facility power with every server on and load spread evenly across them."""
    u = utilization(lambda_hat, fleet)
    _check_horizon(u.shape[0], fleet.e_pue.shape[0], "fleet PUE")
    return PowerProfile(fleet.e_pue * fleet.N * (fleet.e0 + u * fleet.e1))


def electricity_cost(power: PowerProfile | np.ndarray, billing: BillingModel) -> CostBreakdown:
    p = np.asarray(power.p if isinstance(power, PowerProfile) else power, dtype=float)
    _check_horizon(p.shape[0], billing.tau, "power profile")
    energy = float(np.sum(billing.T * billing.alpha * p))
    demand = tuple(w.beta * float(np.max(p[list(w.slots)])) for w in billing.windows)
    return CostBreakdown(energy=energy, demand=demand)


def baseline_cost(demand: DemandInput, fleet: FleetModel, billing: BillingModel) -> CostBreakdown:
    """Bill with no demand response: every request runs in its own slot."""
    demand.check_capacity(fleet)
    cost = electricity_cost(power_profile(demand.lam, fleet), billing)
    return CostBreakdown(cost.energy, cost.demand, baseline=cost.total)


def revenue(demand: DemandInput | Sequence[np.ndarray], unit_prices) -> float:
    """Income from baseline prices.

    Accepts the aggregate demand with a per-slot price series, or a list of
    per-user request series with a matching list of per-user prices.
    """
    if isinstance(demand, DemandInput):
        delta = _as_series(unit_prices, demand.tau, "unit prices")
        if np.any(delta < 0):
            raise ModelError("unit prices must be non-negative")
        return float(np.dot(demand.lam, delta))
    lam = np.asarray(demand, dtype=float)
    delta = np.asarray(unit_prices, dtype=float)
    if lam.shape != delta.shape:
        raise ModelError("per-user requests and prices must have the same shape")
    if np.any(delta < 0):
        raise ModelError("unit prices must be non-negative")
    return float(np.sum(lam * delta))
