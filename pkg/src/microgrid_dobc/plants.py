"""Physical models: PV generator output, the islanded frequency (LFC) loop
and the diesel generator's voltage (AVR) loop.

Powers are per-unit on the 3 kVA diesel-generator base, frequency deviation
in Hz, voltages in pu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagram import Diagram
from .lti import TransferFunction, compose_feedback, series


@dataclass(frozen=True)
class PVParams:
    area_A: float = 10.0
    eta_r: float = 0.15
    eta_i: float = 0.95
    n_temp: float = 0.004
    t_ref: float = 25.0
    noct: float = 45.0

    def __post_init__(self):
        if not self.area_A > 0:
            raise ValueError("area_A must be positive")
        if not (0 < self.eta_r <= 1 and 0 < self.eta_i <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.n_temp < 0:
            raise ValueError("n_temp must be non-negative")


def pv_cell_temp(s_i: float, t_ambient: float, params: PVParams) -> float:
    """Cell temperature (degC) from irradiance (W/m^2) and ambient temperature."""
    if s_i < 0:
        raise ValueError("irradiance must be non-negative")
    return t_ambient + (params.noct - 20.0) / 800.0 * s_i


def pv_power(s_i: float, t_ambient: float, params: PVParams) -> float:
    """PV array output (W); efficiency is floored at zero for extreme heat."""
    t_pv = pv_cell_temp(s_i, t_ambient, params)
    eta_a = params.eta_r * params.eta_i * (1.0 - params.n_temp * (t_pv - params.t_ref))
    return s_i * max(eta_a, 0.0) * params.area_A


def power_system_gains(h: float, d: float, f0: float, printed_form: bool = False) -> tuple[float, float]:
    """Power-system gain ``k_p = 1/D`` (Hz/pu) and time constant ``t_p`` (s).

    ``t_p = 2H/(f0*D)`` by default. ``printed_form=True`` returns ``2*H*D/f0``
    instead, kept only for comparison runs (it yields a sub-millisecond
    inertia time constant).
    """
    if not (h > 0 and d > 0 and f0 > 0):
        raise ValueError("h, d and f0 must be positive")
    k_p = 1.0 / d
    t_p = 2.0 * h * d / f0 if printed_form else 2.0 * h / (f0 * d)
    return k_p, t_p


@dataclass(frozen=True)
class PowerSystemParams:
    inertia_H: float = 1.0
    damping_D: float = 0.0067
    f_nominal: float = 50.0
    printed_tp_form: bool = False

    def __post_init__(self):
        if not (self.inertia_H > 0 and self.damping_D > 0 and self.f_nominal > 0):
            raise ValueError("inertia, damping and nominal frequency must be positive")

    @property
    def k_p(self) -> float:
        return power_system_gains(self.inertia_H, self.damping_D, self.f_nominal, self.printed_tp_form)[0]

    @property
    def t_p(self) -> float:
        return power_system_gains(self.inertia_H, self.damping_D, self.f_nominal, self.printed_tp_form)[1]


@dataclass(frozen=True)
class LFCParams:
    droop_R: float = 2.4
    t_gov: float = 0.0728
    t_diesel: float = 0.273
    t_vsc: float = 0.04
    t_lc: float = 0.004
    power_system: PowerSystemParams = field(default_factory=PowerSystemParams)

    def __post_init__(self):
        if min(self.droop_R, self.t_gov, self.t_diesel, self.t_vsc, self.t_lc) <= 0:
            raise ValueError("droop and all time constants must be positive")


@dataclass(frozen=True)
class AVRParams:
    k_a: float = 10.0
    t_a: float = 0.1
    k_e: float = 1.0
    t_e: float = 0.4
    k_g: float = 1.0
    t_g: float = 1.0
    k_r: float = 1.0
    t_r: float = 0.01

    def __post_init__(self):
        if min(self.t_a, self.t_e, self.t_g, self.t_r) <= 0:
            raise ValueError("time constants must be positive")
        if min(self.k_a, self.k_e, self.k_g, self.k_r) < 0:
            raise ValueError("gains must be non-negative")


@dataclass
class LFCPlant:
    """Frequency-control plant blocks.

    Injection points: ``u`` (secondary control at the governor reference),
    ``dP_pv`` and ``dP_load``. Tapped signals: ``df``, ``dP_dg``, ``pv_out``.
    """

    params: LFCParams
    governor: TransferFunction
    diesel: TransferFunction
    vsc: TransferFunction
    lc_filter: TransferFunction
    power_system: TransferFunction

    def add_to(self, dg: Diagram) -> Diagram:
        inv_r = 1.0 / self.params.droop_R
        dg.add_input("dP_pv")
        dg.add_input("dP_load")
        dg.add_sum("u")
        dg.add_block("governor", self.governor, {"u": 1.0, "df": -inv_r})
        dg.add_block("dP_dg", self.diesel, {"governor": 1.0})
        dg.add_block("vsc", self.vsc, {"dP_pv": 1.0})
        dg.add_block("pv_out", self.lc_filter, {"vsc": 1.0})
        dg.add_sum("net_power", {"dP_dg": 1.0, "pv_out": 1.0, "dP_load": -1.0})
        dg.add_block("df", self.power_system, {"net_power": 1.0})
        dg.add_sum("disturbance", {"pv_out": 1.0, "dP_load": -1.0})
        return dg

    def diagram(self) -> Diagram:
        return self.add_to(Diagram())

    def control_to_frequency(self) -> TransferFunction:
        """``u -> df`` with the droop loop closed; the observer's nominal model."""
        forward = series(self.governor, self.diesel, self.power_system)
        return compose_feedback(forward, TransferFunction.gain(1.0 / self.params.droop_R))

    def disturbance_to_frequency(self) -> TransferFunction:
        """Net accelerating power ``-> df`` with the droop loop closed."""
        loop = series(self.governor, self.diesel, TransferFunction.gain(1.0 / self.params.droop_R))
        return compose_feedback(self.power_system, loop)

    def droop_steady_state(self, net_power: float) -> float:
        """Frequency deviation (Hz) with primary droop only."""
        ps = self.params.power_system
        return net_power / (ps.damping_D + 1.0 / self.params.droop_R)


def build_lfc(params: LFCParams | None = None) -> LFCPlant:
    p = params or LFCParams()
    ps = p.power_system
    return LFCPlant(
        params=p,
        governor=TransferFunction.first_order(1.0, p.t_gov),
        diesel=TransferFunction.first_order(1.0, p.t_diesel),
        vsc=TransferFunction.first_order(1.0, p.t_vsc),
        lc_filter=TransferFunction.first_order(1.0, p.t_lc),
        power_system=TransferFunction.first_order(ps.k_p, ps.t_p),
    )


@dataclass
class AVRPlant:
    """Voltage-control plant blocks.

    Injection points: ``v_ref`` and ``u`` (amplifier input). Tapped signals:
    ``v_t`` (terminal voltage), ``v_s`` (sensed voltage), ``v_error``.
    """

    params: AVRParams
    amplifier: TransferFunction
    exciter: TransferFunction
    generator: TransferFunction
    sensor: TransferFunction

    def add_to(self, dg: Diagram) -> Diagram:
        dg.add_input("v_ref")
        dg.add_sum("u")
        dg.add_block("amplifier", self.amplifier, {"u": 1.0})
        dg.add_block("exciter", self.exciter, {"amplifier": 1.0})
        dg.add_block("v_t", self.generator, {"exciter": 1.0})
        dg.add_block("v_s", self.sensor, {"v_t": 1.0})
        dg.add_sum("v_error", {"v_ref": 1.0, "v_s": -1.0})
        return dg

    def diagram(self) -> Diagram:
        return self.add_to(Diagram())

    def open_loop(self) -> TransferFunction:
        """Amplifier input to sensed voltage: the four blocks in cascade."""
        return series(self.amplifier, self.exciter, self.generator, self.sensor)

    def forward(self) -> TransferFunction:
        return series(self.amplifier, self.exciter, self.generator)

    def closed_loop(self) -> TransferFunction:
        """``v_ref -> v_t`` with the amplifier driven directly by ``v_error``."""
        return compose_feedback(self.forward(), self.sensor)


def build_avr(params: AVRParams | None = None) -> AVRPlant:
    p = params or AVRParams()
    return AVRPlant(
        params=p,
        amplifier=TransferFunction.first_order(p.k_a, p.t_a),
        exciter=TransferFunction.first_order(p.k_e, p.t_e),
        generator=TransferFunction.first_order(p.k_g, p.t_g),
        sensor=TransferFunction.first_order(p.k_r, p.t_r),
    )


@dataclass
class GenericPlant:
    """Single transfer-function plant ``y = G (u + d)``, e.g. an identified model.

    Injection points: ``u`` (control), ``d`` (input disturbance), ``ref``.
    Tapped signal: ``y``.
    """

    model: TransferFunction

    def add_to(self, dg: Diagram) -> Diagram:
        if not self.model.is_proper():
            raise ValueError("plant model must be proper")
        dg.add_input("ref")
        dg.add_input("d")
        dg.add_sum("u")
        dg.add_sum("plant_in", {"u": 1.0, "d": 1.0})
        dg.add_block("y", self.model, {"plant_in": 1.0})
        return dg

    def diagram(self) -> Diagram:
        return self.add_to(Diagram())

    def nominal(self) -> TransferFunction:
        return self.model


IDENTIFIED_HARDWARE_PLANT = TransferFunction([2.68e5], [4661.0, 303.4, 1.0])
