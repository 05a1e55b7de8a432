"""Polyhedral uncertainty budgets, the 16-test budget grid, worst-case scans
and the scripted AVR/LFC experiment cases."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ClosedLoop, NoiseSpec, ObserverSettings, PIDGains, Stimulus, Trace, simulate
from .lti import SimulationDiverged
from .metrics import PerformanceReport, compute_indices
from .plants import AVRParams, LFCParams, build_avr, build_lfc

log = logging.getLogger(__name__)

BUDGET_LEVELS = ((0.9, 1.1), (0.8, 1.2), (0.7, 1.3), (0.6, 1.4))
# forecast levels reverse-engineered from the printed step sizes
PV_FORECAST = 1.0 / 6.0
LOAD_FORECAST = 1.0 / 3.0

PAPER_CASES = ("avr-a", "avr-b", "lfc-a", "lfc-b", "lfc-c", "lfc-d")


@dataclass(frozen=True)
class UncertaintyBudget:
    zeta_l: float
    zeta_u: float
    forecast_pf: float
    p_min: float = 0.0
    p_max: float = 1.0

    def __post_init__(self):
        if not (0 < self.zeta_l <= 1 <= self.zeta_u):
            raise ValueError(f"budgets must satisfy 0 < zeta_l <= 1 <= zeta_u, got ({self.zeta_l}, {self.zeta_u})")
        if self.p_min > self.p_max:
            raise ValueError("p_min exceeds p_max")

    def admits(self, level: float, tol: float = 1e-12) -> bool:
        """Single-interval set membership of a realized level."""
        if not self.p_min - tol <= level <= self.p_max + tol:
            return False
        if self.forecast_pf == 0:
            return level == 0
        ratio = level / self.forecast_pf
        return self.zeta_l - tol <= ratio <= self.zeta_u + tol


def budget_to_step(budget: UncertaintyBudget, direction: str = "up") -> float:
    """Largest admissible excursion from forecast, as a positive magnitude."""
    if direction == "up":
        return (budget.zeta_u - 1.0) * budget.forecast_pf
    if direction == "down":
        return (1.0 - budget.zeta_l) * budget.forecast_pf
    raise ValueError("direction must be 'up' or 'down'")


@dataclass(frozen=True)
class Scenario:
    name: str
    pv_budget: UncertaintyBudget
    load_budget: UncertaintyBudget
    pv_step: float  # signed pu change in PV output
    load_step: float  # signed pu change in load
    t_step: float = 1.0
    delay: float = 0.0
    noise: NoiseSpec | None = None
    horizon: float = 40.0

    def __post_init__(self):
        pv_level = self.pv_budget.forecast_pf + self.pv_step
        load_level = self.load_budget.forecast_pf + self.load_step
        if not self.pv_budget.admits(pv_level):
            raise ValueError(f"{self.name}: PV step {self.pv_step} outside its budget")
        if not self.load_budget.admits(load_level):
            raise ValueError(f"{self.name}: load step {self.load_step} outside its budget")

    def stimulus(self) -> Stimulus:
        return Stimulus({"dP_pv": [(self.t_step, self.pv_step)], "dP_load": [(self.t_step, self.load_step)]})


def make_scenario(
    name: str,
    pv_budget: UncertaintyBudget,
    load_budget: UncertaintyBudget,
    **kwargs,
) -> Scenario:
    """Worst-case direction: PV drops to its lower budget while load rises to its upper one."""
    return Scenario(
        name=name,
        pv_budget=pv_budget,
        load_budget=load_budget,
        pv_step=-budget_to_step(pv_budget, "down"),
        load_step=budget_to_step(load_budget, "up"),
        **kwargs,
    )


def generate_table3_grid(
    pv_forecast: float = PV_FORECAST,
    load_forecast: float = LOAD_FORECAST,
    **kwargs,
) -> list[Scenario]:
    """Tests 1-16: load budget is the outer loop, PV budget the inner one."""
    grid = []
    for load_b in BUDGET_LEVELS:
        for pv_b in BUDGET_LEVELS:
            n = len(grid) + 1
            grid.append(
                make_scenario(
                    f"test-{n}",
                    UncertaintyBudget(*pv_b, pv_forecast),
                    UncertaintyBudget(*load_b, load_forecast),
                    **kwargs,
                )
            )
    return grid


@dataclass
class ScanEntry:
    scenario: Scenario
    df_max: float
    report: PerformanceReport | None
    diverged: bool = False
    message: str = ""


@dataclass
class SweepResult:
    entries: list[ScanEntry]
    argmax: int | None = field(default=None)

    def __post_init__(self):
        if self.argmax is None:
            self.argmax = _argmax(self.entries)

    @property
    def worst(self) -> ScanEntry | None:
        return None if self.argmax is None else self.entries[self.argmax]


def _argmax(entries: list[ScanEntry]) -> int | None:
    best = None
    for i, e in enumerate(entries):
        # strict '>' keeps the lowest index on ties
        if not e.diverged and (best is None or e.df_max > entries[best].df_max):
            best = i
    return best


def lfc_report(trace: Trace, t0: float) -> PerformanceReport:
    return compute_indices(trace["df"], trace.dt, t0, peak_label="df_max (Hz)")


def avr_report(trace: Trace, t0: float) -> PerformanceReport:
    error = trace["v_ref"] - trace["v_t"]
    return compute_indices(error, trace.dt, t0, response=trace["v_t"], peak_label="MO (pu)")


def configure(loop: ClosedLoop, scenario: Scenario) -> ClosedLoop:
    return replace(
        loop,
        stimulus=scenario.stimulus(),
        measurement_delay=scenario.delay,
        load_noise=scenario.noise,
    )


def _scan_one(args) -> ScanEntry:
    scenario, loop = args
    try:
        tr = simulate(configure(loop, scenario), scenario.horizon)
    except SimulationDiverged as exc:
        return ScanEntry(scenario, float("nan"), None, diverged=True, message=str(exc))
    df = tr["df"]
    if not np.all(np.isfinite(df)):
        return ScanEntry(scenario, float("nan"), None, diverged=True, message="non-finite output")
    return ScanEntry(scenario, float(np.max(np.abs(df))), lfc_report(tr, scenario.t_step))


def worst_case_scan(grid: list[Scenario], loop_spec: ClosedLoop, workers: int = 1) -> SweepResult:
    """Simulate every scenario under the same loop and locate the largest ``|df|``."""
    if not grid:
        raise ValueError("empty scenario grid")
    jobs = [(s, loop_spec) for s in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            entries = list(ex.map(_scan_one, jobs))
    else:
        entries = [_scan_one(j) for j in jobs]
    for e in entries:
        if e.diverged:
            log.warning("scenario %s diverged: %s", e.scenario.name, e.message)
    return SweepResult(entries)


# Defaults for the scripted cases. The LFC integral gain and observer are
# not printed; see README for how they were chosen.
LFC_INTEGRAL = PIDGains(ki=0.1)
LFC_OBSERVER = ObserverSettings(lam=0.01, order=3)
AVR_OBSERVER = ObserverSettings(lam=0.01, order=4)
AVR_PID_EXAMPLE = PIDGains(kp=0.6568, ki=0.5393, kd=0.2458, derivative_filter_n=100.0)
CASE_DELAY = 0.02
LFC_NOISE = NoiseSpec(sigma=0.002, hold_interval=0.01, seed=0)
LFC_HORIZON = 40.0
AVR_HORIZON = 5.0


def default_lfc_loop(params: LFCParams | None = None, dobc: bool = True, dt: float = 1e-3) -> ClosedLoop:
    return ClosedLoop(build_lfc(params), LFC_INTEGRAL, LFC_OBSERVER if dobc else None, dt=dt)


def default_avr_loop(
    params: AVRParams | None = None, gains: PIDGains = AVR_PID_EXAMPLE, dobc: bool = True, dt: float = 1e-3
) -> ClosedLoop:
    return ClosedLoop(build_avr(params), gains, AVR_OBSERVER if dobc else None, dt=dt)


def worst_case_scenario(loop_spec: ClosedLoop | None = None, **kwargs) -> Scenario:
    """Test 16 of the grid (both budgets at their widest)."""
    return generate_table3_grid(**kwargs)[-1]


def run_paper_case(
    case_id: str,
    loop_spec: ClosedLoop,
    t_step: float = 1.0,
    horizon: float | None = None,
    noise: NoiseSpec | None = None,
    workers: int = 1,
) -> tuple[Trace, PerformanceReport]:
    """Configure and run one scripted experiment.

    ``avr-a``/``avr-b``: unit reference step, without/with 20 ms delay.
    ``lfc-a``: grid scan, returns the worst scenario's run. ``lfc-b``/``c``/``d``:
    widest-budget steps, plain / 20 ms delay / seeded load noise.
    """
    if case_id not in PAPER_CASES:
        raise ValueError(f"unknown case {case_id!r}; expected one of {', '.join(PAPER_CASES)}")
    if case_id.startswith("avr"):
        if loop_spec.kind != "avr":
            raise ValueError(f"case {case_id} needs an AVR loop")
        loop = replace(
            loop_spec,
            stimulus=Stimulus({"v_ref": [(t_step, 1.0)]}),
            measurement_delay=CASE_DELAY if case_id == "avr-b" else 0.0,
            load_noise=None,
        )
        tr = simulate(loop, horizon or AVR_HORIZON)
        return tr, avr_report(tr, t_step)

    if loop_spec.kind != "lfc":
        raise ValueError(f"case {case_id} needs an LFC loop")
    h = horizon or LFC_HORIZON
    if case_id == "lfc-a":
        grid = generate_table3_grid(t_step=t_step, horizon=h)
        sweep = worst_case_scan(grid, loop_spec, workers=workers)
        scenario = sweep.worst.scenario
    else:
        scenario = replace(worst_case_scenario(), t_step=t_step, horizon=h)
        if case_id == "lfc-c":
            scenario = replace(scenario, delay=CASE_DELAY)
        elif case_id == "lfc-d":
            scenario = replace(scenario, noise=noise or LFC_NOISE)
    tr = simulate(configure(loop_spec, scenario), scenario.horizon)
    return tr, lfc_report(tr, scenario.t_step)
