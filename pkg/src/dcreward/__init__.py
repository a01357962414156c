"""Time-varying deferral rewards and electricity-cost minimization for a data center."""

from .core import (
    BillingModel,
    CapacityError,
    CostBreakdown,
    DeferralSchedule,
    DemandInput,
    FleetModel,
    ModelError,
    PowerProfile,
    baseline_cost,
    electricity_cost,
    power_profile,
    revenue,
    scheduled_load,
    utilization,
)
from .incentives import (
    RewardError,
    RewardSchedule,
    SettlementRecord,
    UserProfile,
    deferrable_capacity,
    dominant_strategy,
    optimal_reward,
    settle_rewards,
    total_reward,
    user_surplus,
)
from .optimizer import (
    ConvergenceError,
    InfeasibleError,
    ProgramSpec,
    RenewableProfile,
    ShutdownParams,
    Solution,
    Tolerances,
    brute_force_oracle,
    build_base_program,
    build_program,
    build_renewable_program,
    build_shutdown_program,
    solve,
    verify_solution,
)
from .traces import (
    TraceError,
    TurbineCurve,
    export_trace,
    load_request_trace,
    load_wind_trace,
    synth_diurnal_trace,
    synth_wind_speeds,
    wind_to_power,
)

__version__ = "0.1.0"
