"""Baseline controllers and closed-loop assembly for the AVR and LFC loops,
with optional observer feed-forward, measurement delay and load noise."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .diagram import CompiledSystem, Diagram
from .dobc import design_q, make_observer
from .lti import SimulationDiverged, TransferFunction
from .plants import AVRPlant, GenericPlant, LFCPlant


@dataclass(frozen=True)
class PIDGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    derivative_filter_n: float = 100.0

    def __post_init__(self):
        if self.ki < 0 or self.kd < 0:
            raise ValueError("ki and kd must be non-negative")
        if self.kd > 0 and not self.derivative_filter_n > 0:
            raise ValueError("derivative filter coefficient must be positive when kd > 0")


@dataclass
class PIDState:
    integral: float = 0.0
    derivative: float = 0.0
    prev_error: float | None = None


def pid_step(gains: PIDGains, error: float, state: PIDState, dt: float) -> float:
    """Discrete parallel PID: trapezoidal integral, Tustin-filtered derivative.

    The first call seeds the previous error with the current one, so there is
    no derivative kick and a constant error integrates exactly.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    prev = error if state.prev_error is None else state.prev_error
    state.integral += gains.ki * dt * 0.5 * (error + prev)
    if gains.kd > 0:
        n = gains.derivative_filter_n
        state.derivative = (
            (2.0 - n * dt) * state.derivative + 2.0 * gains.kd * n * (error - prev)
        ) / (2.0 + n * dt)
    state.prev_error = error
    return gains.kp * error + state.integral + state.derivative


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.01
    hold_interval: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.hold_interval > 0:
            raise ValueError("hold_interval must be positive")

    def sample(self, index: int) -> float:
        if self.sigma == 0:
            return 0.0
        rng = np.random.default_rng((int(self.seed), int(index)))
        return self.sigma * float(rng.standard_normal())

    def index_at(self, t: float) -> int:
        return int(math.floor(t / self.hold_interval + 1e-9))


def inject_load_noise(spec: NoiseSpec, base_load: float, t: float) -> float:
    """``base_load`` plus the zero-mean Gaussian sample held over ``t``'s interval."""
    return base_load + spec.sample(spec.index_at(t))


@dataclass(frozen=True)
class ObserverSettings:
    """Observer configuration.

    ``input_pairing`` decides which plant-input sample the observer pairs with
    a delayed measurement: ``"direct"`` uses the input being applied now,
    ``"delayed"`` uses the input applied one delay earlier.
    """

    lam: float = 0.01
    order: int = 4
    saturation: float = 10.0
    input_pairing: str = "direct"

    def __post_init__(self):
        if self.input_pairing not in ("direct", "delayed"):
            raise ValueError("input_pairing must be 'direct' or 'delayed'")


@dataclass
class Stimulus:
    """Piecewise-constant exogenous inputs: ``{input: [(t_on, value), ...]}``.

    Values are cumulative steps, so ``[(1.0, 0.1), (5.0, -0.1)]`` is a pulse.
    """

    steps: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def value(self, name: str, t: float) -> float:
        return sum(v for t_on, v in self.steps.get(name, ()) if t >= t_on - 1e-12)

    def onset(self) -> float:
        times = [t for seq in self.steps.values() for t, v in seq if v != 0]
        return min(times) if times else 0.0


Plant = Union[LFCPlant, AVRPlant, GenericPlant]


@dataclass
class ClosedLoop:
    plant: Plant
    controller: PIDGains = field(default_factory=PIDGains)
    observer: ObserverSettings | None = None
    measurement_delay: float = 0.0
    load_noise: NoiseSpec | None = None
    stimulus: Stimulus = field(default_factory=Stimulus)
    dt: float = 1e-3

    def __post_init__(self):
        if self.measurement_delay < 0:
            raise ValueError("measurement delay must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.load_noise is not None and self.load_noise.hold_interval < self.dt - 1e-15:
            raise ValueError("noise hold interval must be at least dt")

    @property
    def kind(self) -> str:
        if isinstance(self.plant, LFCPlant):
            return "lfc"
        if isinstance(self.plant, AVRPlant):
            return "avr"
        return "generic"


@dataclass
class Trace:
    dt: float
    channels: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ValueError("trace channels must have equal length")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return len(next(iter(self.channels.values()))) if self.channels else 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def to_csv(self, fh=None) -> str | None:
        """Time column first, then channels; shortest round-trip decimal."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.channels)
        w.writerow(["t", *names])
        cols = [self.time, *(self.channels[n] for n in names)]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue() if fh is None else None


def _pid_into(dg: Diagram, gains: PIDGains, error: str) -> str:
    terms: dict[str, float] = {}
    if gains.kp:
        terms[dg.add_sum("ctrl_p", {error: gains.kp})] = 1.0
    if gains.ki:
        terms[dg.add_block("ctrl_i", TransferFunction([gains.ki], [0.0, 1.0]), {error: 1.0})] = 1.0
    if gains.kd:
        n = gains.derivative_filter_n
        terms[dg.add_block("ctrl_d", TransferFunction([0.0, gains.kd * n], [n, 1.0]), {error: 1.0})] = 1.0
    return dg.add_sum("x_c", terms)


@dataclass
class Simulation:
    loop: ClosedLoop
    system: CompiledSystem
    delay_steps: int
    delayed: dict[str, str]  # delayed input name -> source signal
    exogenous: list[str]
    warnings: list[str]

    @property
    def dt(self) -> float:
        return self.loop.dt


def assemble(loop: ClosedLoop) -> Simulation:
    """Wire plant, controller and observer into one compiled system.

    AVR: error = v_ref - delayed(v_s). LFC: error = -delayed(df); the
    controller output enters the governor reference alongside the droop.
    Generic plants: error = ref - delayed(y).
    In both loops the observer estimate is subtracted from the controller
    output before it reaches the plant.
    """
    dt = loop.dt
    warnings: list[str] = []
    nd = int(round(loop.measurement_delay / dt))
    if loop.measurement_delay > 0 and nd == 0:
        nd = 1
        warnings.append(f"measurement delay {loop.measurement_delay} s shorter than dt; rounded up to {dt} s")
    elif loop.measurement_delay > 0 and abs(nd * dt - loop.measurement_delay) > 1e-9:
        warnings.append(f"measurement delay rounded to {nd * dt} s")

    dg = Diagram()
    plant = loop.plant
    plant.add_to(dg)
    measured = {"lfc": "df", "avr": "v_s", "generic": "y"}[loop.kind]
    delayed: dict[str, str] = {}
    if nd:
        dg.add_input(measured + "_meas")
        delayed[measured + "_meas"] = measured
    else:
        dg.add_sum(measured + "_meas", {measured: 1.0})
    if loop.kind == "lfc":
        dg.add_sum("error", {"df_meas": -1.0})
    elif loop.kind == "avr":
        dg.add_sum("error", {"v_ref": 1.0, "v_s_meas": -1.0})
    else:
        dg.add_sum("error", {"ref": 1.0, "y_meas": -1.0})
    _pid_into(dg, loop.controller, "error")

    u_terms = {"x_c": 1.0}
    if loop.observer is not None:
        obs_cfg = loop.observer
        nominal = {
            "lfc": lambda: plant.control_to_frequency(),
            "avr": lambda: plant.open_loop(),
            "generic": lambda: plant.nominal(),
        }[loop.kind]()
        obs = make_observer(nominal, design_q(obs_cfg.lam, obs_cfg.order))
        x_src = "u"
        if nd and obs_cfg.input_pairing == "delayed":
            x_src = dg.add_input("u_meas")
            delayed["u_meas"] = "u"
        dg.add_block("obs_yq", obs.branch_yq, {measured + "_meas": 1.0})
        dg.add_block("obs_xq", obs.branch_xq, {x_src: 1.0})
        dg.add_sum("d_hat_raw", {"obs_yq": 1.0, "obs_xq": -1.0})
        dg.add_saturation("d_hat", "d_hat_raw", obs_cfg.saturation)
        u_terms["d_hat"] = -1.0
    dg.rewire("u", u_terms)

    if loop.kind == "lfc":
        outputs = ["df", "df_meas", "dP_dg", "pv_out", "dP_pv", "dP_load", "d_l", "x_c", "u"]
        dg.add_sum("d_l", {"disturbance": 1.0})
    elif loop.kind == "avr":
        outputs = ["v_t", "v_s", "v_s_meas", "v_ref", "error", "x_c", "u"]
    else:
        outputs = ["y", "y_meas", "ref", "d", "error", "x_c", "u"]
    if loop.observer is not None:
        outputs.append("d_hat")
    system = dg.compile(outputs)
    exogenous = [n for n in dg.inputs if n not in delayed]
    return Simulation(loop, system, nd, delayed, exogenous, warnings)


def run(sim: Simulation, horizon: float) -> Trace:
    """Fixed-step run over ``[0, horizon]``; deterministic for a given loop."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    loop, sys_ = sim.loop, sim.system
    dt = loop.dt
    n = int(round(horizon / dt)) + 1
    inputs = sys_.inputs
    t = np.arange(n) * dt

    W = np.zeros((n, len(inputs)))
    for j, name in enumerate(inputs):
        if name in sim.delayed:
            continue
        W[:, j] = [loop.stimulus.value(name, tk) for tk in t]
        if name == "dP_load" and loop.load_noise is not None:
            spec = loop.load_noise
            idx = np.floor(t / spec.hold_interval + 1e-9).astype(int)
            samples = {i: spec.sample(i) for i in np.unique(idx)}
            W[:, j] += [samples[i] for i in idx]

    nd = sim.delay_steps
    feeds = [(inputs.index(dst), sys_.signal_row(src)) for dst, src in sim.delayed.items()]
    nx, nw = sys_.n_states, len(inputs)
    step = sys_.stepper(dt)
    X = np.zeros((n, nx))
    hist = np.zeros((n, len(feeds)))
    x = sys_.x0.copy()
    # divergence is detected below; silence numpy's overflow chatter
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            w = W[k]
            if feeds and k >= nd:
                for i, (j, _) in enumerate(feeds):
                    w[j] = hist[k - nd, i]
            X[k] = x
            if feeds:
                sig = sys_.saturated(x, w)
                z = np.concatenate([x, w, sig])
                for i, (_, row) in enumerate(feeds):
                    hist[k, i] = row @ z
            if k + 1 < n:
                x = step(x, w)
                if not np.all(np.isfinite(x)):
                    raise SimulationDiverged(f"simulation diverged at t={t[k + 1]:.6g} s", float(t[k + 1]))

    if sys_.limits.size:
        sig = np.array([sys_.saturated(X[k], W[k]) for k in range(n)])
    else:
        sig = np.zeros((n, 0))
    Y = np.hstack([X, W, sig]) @ sys_.Y.T
    channels = {name: Y[:, i].copy() for i, name in enumerate(sys_.outputs)}
    meta = {
        "kind": loop.kind,
        "delay_steps": nd,
        "effective_delay": nd * dt,
        "onset": loop.stimulus.onset(),
        "warnings": list(sim.warnings),
    }
    return Trace(dt, channels, meta)


def simulate(loop: ClosedLoop, horizon: float) -> Trace:
    return run(assemble(loop), horizon)
