import time

import pytest

from microgrid_dobc.scenarios import default_lfc_loop, generate_table3_grid, worst_case_scan


@pytest.fixture(scope="session")
def table3_sweep():
    """The 16-scenario DOBC sweep, run once per session, with its wall time."""
    start = time.perf_counter()
    result = worst_case_scan(generate_table3_grid(), default_lfc_loop())
    return result, time.perf_counter() - start


def step_dataset(model, dt=1e-4, n=20000, hold=500, seed=1, noise=0.0):
    """Input/output record from ``model`` under random held steps, starting at rest.

    Integrated with our own RK4 on the controllable realization, independent
    of the scipy filtering used by the estimator.
    """
    import numpy as np

    from microgrid_dobc.lti import step_rk4, to_state_space
    from microgrid_dobc.sysid import IdDataset

    rng = np.random.default_rng(seed)
    levels = rng.uniform(-1, 1, n // hold + 1)
    levels[0] = 0.0
    u = np.repeat(levels, hold)[:n]
    ss = to_state_space(model)
    y = np.zeros(n)
    for k in range(1, n):
        y[k] = step_rk4(ss, u[k - 1], dt)
    if noise:
        y = y + noise * rng.standard_normal(n)
    return IdDataset(dt, u, y)


@pytest.fixture(scope="session")
def hardware_dataset():
    from microgrid_dobc.plants import IDENTIFIED_HARDWARE_PLANT

    return step_dataset(IDENTIFIED_HARDWARE_PLANT)


# lines recorded by test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
