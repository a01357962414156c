import numpy as np
import pytest

from dcreward.core import BillingModel, DemandInput, FleetModel
from dcreward.traces import synth_diurnal_trace


def toy_instance(rng, tau=4, N=2, nu=5.0, pi=0.5):
    lam = rng.uniform(0.0, N * nu, tau)
    demand = DemandInput(lam, pi, 1e-3, 1e-2)
    fleet = FleetModel(N, 0.1, 0.1, nu, 1.2, tau=tau)
    billing = BillingModel.flat(tau)
    return demand, fleet, billing


def random_instance(rng, tau, pue_series=False, windows=1):
    """Random feasible instance with time-varying prices and one or more demand windows."""
    base = rng.uniform(50, 500)
    lam = synth_diurnal_trace(tau, base, rng.uniform(0, base), rng.choice([6, 12, 24]),
                              noise_seed=int(rng.integers(1 << 30)), noise=0.2)
    nu = 20.0
    N = int(np.ceil(lam.max() / (rng.uniform(0.5, 0.98) * nu))) or 1
    e_pue = rng.uniform(1.1, 1.6, tau) if pue_series else 1.2
    fleet = FleetModel(N, rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), nu, e_pue, tau=tau)
    alpha = rng.uniform(0.03, 0.08, tau)
    if windows == 1:
        wins = [(range(tau), rng.uniform(5, 20))]
    else:
        cut = int(rng.integers(1, tau)) if tau > 1 else 1
        wins = [(range(cut), rng.uniform(5, 20)), (range(cut // 2, tau), rng.uniform(1, 10))]
    billing = BillingModel(tau, 1.0, alpha, wins)
    demand = DemandInput(lam, rng.uniform(0.2, 0.8), 1e-3, 1e-2)
    return demand, fleet, billing


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def case_fleet_24():
    return FleetModel(100, 0.1, 0.1, 20, 1.2, tau=24)


# acceptance checks append (criterion, passed, detail) here; printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
