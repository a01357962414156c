"""
The reward game: who agrees to wait, and for how much
=====================================================

A user grants deferral whenever the reward beats their own loss from
waiting. The operator pays the smallest reward that recruits enough users.
"""

import numpy as np

from dcreward import DeferralSchedule, DemandInput, UserProfile, dominant_strategy, optimal_reward, settle_rewards
from dcreward.incentives import RewardSchedule

# a one-slot table of decisions
for kappa in (1e-3, 5e-3, np.inf):
    row = ["join " if dominant_strategy(kappa, g) else "skip " for g in (1e-3, 5e-3, 1e-2)]
    print(f"kappa={kappa:<6g}", *row)

# the reward needed grows linearly with the share of elastic requests deferred
demand = DemandInput([1000.0], pi=0.5, lb=1e-3, ub=1e-2)
for q in (0, 125, 250, 500):
    s = DeferralSchedule(np.array([[1000.0 - q], [q]]))
    print(f"defer {q:4d}: reward {optimal_reward(s, demand).gamma[0]:.4f} $/request")

# settle one slot among three users; the inelastic one is never paid
users = [
    UserProfile("a", [400.0], 0.03, 0.01, [2e-3]),
    UserProfile("b", [600.0], 0.03, 0.01, [4e-3]),
    UserProfile("c", [500.0], 0.03, 0.01, [np.inf]),
]
sched = DeferralSchedule(np.array([[1300.0], [200.0]]))
for r in settle_rewards(users, sched, RewardSchedule(np.array([5e-3]))):
    print(f"user {r.user}: deferred {r.deferred:6.1f}  payout ${r.payout:.3f}  surplus ${r.surplus:.3f}")
