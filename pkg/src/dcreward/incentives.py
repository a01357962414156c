"""User-side participation game, reward pricing and per-user settlement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DeferralSchedule, DemandInput, ModelError


class RewardError(ModelError):
    """Planned deferral cannot be paid for within the reward bounds."""


@dataclass(frozen=True)
class UserProfile:
    """One user's per-slot requests, utility, price and utility-loss factor.

    Inelastic users carry ``kappa = inf`` in every slot.
    """

    id: str
    lam: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        for name in ("lam", "v", "delta", "kappa"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        n = self.lam.shape[0]
        for name in ("v", "delta", "kappa"):
            arr = getattr(self, name)
            if arr.shape[0] == 1 and n > 1:
                object.__setattr__(self, name, np.full(n, arr[0]))
            elif arr.shape[0] != n:
                raise ModelError(f"user {self.id}: {name} length does not match requests")
        if np.any(self.lam < 0):
            raise ModelError(f"user {self.id}: negative requests")
        if np.any(np.isnan(self.kappa)) or np.any(self.kappa < 0):
            raise ModelError(f"user {self.id}: kappa must be >= 0")

    @property
    def inelastic(self) -> bool:
        return bool(np.all(np.isinf(self.kappa)))


@dataclass(frozen=True)
class RewardSchedule:
    gamma: np.ndarray

    def within_bounds(self, demand: DemandInput, atol: float = 0.0) -> bool:
        return bool(np.all(self.gamma >= demand.lb - atol) and np.all(self.gamma <= demand.ub + atol))


@dataclass(frozen=True)
class SettlementRecord:
    """Outcome for one user in one slot."""

    user: str
    t: int
    participates: bool
    deferred: float
    payout: float
    charge: float
    surplus: float


def dominant_strategy(kappa: float, gamma: float) -> bool:
    """True when granting deferral is dominant: the reward strictly beats the loss."""
    if kappa < 0 or gamma < 0:
        raise ModelError("kappa and gamma must be non-negative")
    return gamma > kappa


def user_surplus(profile: UserProfile, t: int, gamma: float, deferred: float) -> tuple[float, float]:
    """Slot-``t`` surplus of a user when declining and when participating.

    ``deferred`` is how many of the user's requests the operator actually
    shifted; the user cannot choose it, only bound it by ``lam[t]``.
    """
    lam = float(profile.lam[t])
    if deferred < 0 or deferred > lam:
        raise ModelError(f"deferred={deferred} outside [0, {lam}]")
    s_no = lam * (float(profile.v[t]) - float(profile.delta[t]))
    if deferred == 0:
        return s_no, s_no
    return s_no, s_no + deferred * (gamma - float(profile.kappa[t]))


def _deferral_share(deferred: np.ndarray, elastic: np.ndarray) -> np.ndarray:
    share = np.zeros_like(deferred)
    pos = elastic > 0
    share[pos] = deferred[pos] / elastic[pos]
    return share


def optimal_reward(schedule: DeferralSchedule, demand: DemandInput, rtol: float = 1e-9) -> RewardSchedule:
    """Smallest per-slot reward that makes the planned deferral incentive-compatible.

    Interpolates linearly between ``lb`` (nothing deferred) and ``ub`` (every
    elastic request deferred). Slots with no elastic demand get ``lb``.
    """
    q = schedule.deferred
    if q.shape[0] != demand.tau:
        raise ModelError("schedule horizon does not match demand")
    elastic = demand.elastic
    slack = rtol * np.maximum(elastic, 1.0)
    bad = np.flatnonzero(q > elastic + slack)
    if bad.size:
        raise RewardError(f"deferral exceeds the elastic demand pi*lambda in slots {bad.tolist()}")
    share = np.clip(_deferral_share(q, elastic), 0.0, 1.0)
    gamma = demand.lb + (demand.ub - demand.lb) * share
    # keep the endpoint exact so within_bounds holds without slack
    return RewardSchedule(np.where(share >= 1.0, demand.ub, gamma))


def deferrable_capacity(gamma: float, demand: DemandInput, t: int) -> float:
    """Requests whose owners accept deferral at reward ``gamma`` in slot ``t``."""
    lb, ub = float(demand.lb[t]), float(demand.ub[t])
    if gamma < lb or gamma > ub:
        raise RewardError(f"gamma={gamma} outside [{lb}, {ub}]")
    return float(demand.elastic[t]) * (gamma - lb) / (ub - lb)


def total_reward(schedule: DeferralSchedule, rewards: RewardSchedule) -> float:
    q = schedule.deferred
    if q.shape != rewards.gamma.shape:
        raise ModelError("schedule and reward horizons differ")
    return float(np.dot(rewards.gamma, q))


def reward_at_optimum(deferred, demand: DemandInput) -> float:
    """Total reward once the optimal reward is plugged in; quadratic in the deferral."""
    q = np.asarray(deferred, dtype=float)
    coef = np.zeros_like(q)
    pos = demand.elastic > 0
    coef[pos] = (demand.ub - demand.lb)[pos] / demand.elastic[pos]
    return float(np.sum(coef * q**2 + demand.lb * q))


def settle_rewards(
    users: list[UserProfile], schedule: DeferralSchedule, rewards: RewardSchedule
) -> list[SettlementRecord]:
    """Split each slot's deferral pro rata over the users who opted in, and pay them.

    Every user is charged its usual ``delta * lam``; participants whose
    requests were shifted receive ``gamma * deferred`` on top.
    """
    q = schedule.deferred
    tau = q.shape[0]
    for u in users:
        if u.lam.shape[0] != tau:
            raise ModelError(f"user {u.id}: horizon does not match schedule")
    records = []
    for t in range(tau):
        gamma = float(rewards.gamma[t])
        joins = [dominant_strategy(float(u.kappa[t]), gamma) for u in users]
        pool = sum(float(u.lam[t]) for u, j in zip(users, joins) if j)
        if q[t] > pool * (1 + 1e-12) + 1e-12:
            raise RewardError(
                f"slot {t}: deferral {q[t]:g} exceeds participants' requests {pool:g}"
            )
        for u, joined in zip(users, joins):
            lam = float(u.lam[t])
            share = min(lam, q[t] * lam / pool) if joined and pool > 0 else 0.0
            payout = gamma * share
            charge = lam * float(u.delta[t])
            surplus = user_surplus(u, t, gamma, share)[1]
            records.append(SettlementRecord(u.id, t, joined, share, payout, charge, surplus))
    return records
