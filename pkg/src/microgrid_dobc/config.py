"""Run configuration: named parameter profiles and the YAML config schema.

A config file has optional sections ``profile``, ``loop``, ``plant``,
``controller``, ``observer``, ``scenario``, ``solver`` and ``seed``. Profiles
supply defaults for every section; the file overrides them key by key.
Extra profiles are looked up as ``<name>.yaml`` in the directory named by
``MICROGRID_DOBC_PROFILE_DIR``.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .control import ClosedLoop, NoiseSpec, ObserverSettings, PIDGains, Stimulus
from .lti import TransferFunction
from .plants import AVRParams, GenericPlant, LFCParams, PowerSystemParams, build_avr, build_lfc
from .scenarios import PAPER_CASES

PROFILE_ENV = "MICROGRID_DOBC_PROFILE_DIR"

BUILTIN_PROFILES: dict[str, dict] = {
    "paper-appendix-a": {
        "loop": "lfc",
        "plant": {
            "lfc": {"droop_R": 2.4, "t_gov": 0.0728, "t_diesel": 0.273, "t_vsc": 0.04, "t_lc": 0.004,
                    "inertia_H": 1.0, "damping_D": 0.0067, "f_nominal": 50.0},
            "avr": {"k_a": 10.0, "t_a": 0.1, "k_e": 1.0, "t_e": 0.4, "k_g": 1.0, "t_g": 1.0,
                    "k_r": 1.0, "t_r": 0.01},
        },
        "controller": {
            "lfc": {"kp": 0.0, "ki": 0.1, "kd": 0.0},
            "avr": {"kp": 0.6568, "ki": 0.5393, "kd": 0.2458, "derivative_filter_n": 100.0},
        },
        "observer": {
            "lfc": {"enabled": True, "lam": 0.01, "order": 3},
            "avr": {"enabled": True, "lam": 0.01, "order": 4},
        },
    },
    "paper-hardware-b": {
        "loop": "generic",
        "plant": {"generic": {"num": [2.68e5], "den": [4661.0, 303.4, 1.0]}},
        "controller": {"generic": {"kp": 0.0, "ki": 0.01, "kd": 0.0}},
        "observer": {"generic": {"enabled": True, "lam": 0.02, "order": 2}},
    },
}

DEFAULT_SOLVER = {"lfc": {"dt": 1e-3, "horizon": 40.0}, "avr": {"dt": 1e-3, "horizon": 5.0},
                  "generic": {"dt": 1e-4, "horizon": 2.0}}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_profile(name: str) -> dict:
    if name in BUILTIN_PROFILES:
        return copy.deepcopy(BUILTIN_PROFILES[name])
    directory = os.environ.get(PROFILE_ENV)
    if directory:
        path = Path(directory) / f"{name}.yaml"
        if path.is_file():
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
            if not isinstance(data, dict):
                raise ConfigError("profile", f"profile file {path} is not a mapping")
            return data
    raise ConfigError("profile", f"unknown plant profile {name!r}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _pick(section: dict, loop: str) -> dict:
    """Profile sections are keyed by loop kind; flat sections apply as-is."""
    if not isinstance(section, dict):
        return {}
    if loop in section and isinstance(section[loop], dict):
        flat = {k: v for k, v in section.items() if k not in ("lfc", "avr", "generic")}
        return _merge(section[loop], flat)
    return {k: v for k, v in section.items() if k not in ("lfc", "avr", "generic")}


def _build(cls, data: dict, field_name: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(field_name, f"unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(field_name, str(exc)) from None


@dataclass
class RunConfig:
    """Fully resolved run settings (what the manifest records)."""

    profile: str
    loop: str
    plant: dict
    controller: dict
    observer: dict
    scenario: dict
    dt: float
    horizon: float
    seed: int

    def as_dict(self) -> dict:
        return {
            "profile": self.profile,
            "loop": self.loop,
            "plant": self.plant,
            "controller": self.controller,
            "observer": self.observer,
            "scenario": self.scenario,
            "solver": {"dt": self.dt, "horizon": self.horizon},
            "seed": self.seed,
        }

    def plant_model(self):
        p = dict(self.plant)
        if self.loop == "lfc":
            ps_keys = {f.name for f in fields(PowerSystemParams)}
            ps = _build(PowerSystemParams, {k: p.pop(k) for k in list(p) if k in ps_keys}, "plant")
            return build_lfc(_build(LFCParams, {**p, "power_system": ps}, "plant"))
        if self.loop == "avr":
            return build_avr(_build(AVRParams, p, "plant"))
        try:
            return GenericPlant(TransferFunction(p["num"], p["den"]))
        except KeyError as exc:
            raise ConfigError("plant", f"generic plant needs 'num' and 'den' (missing {exc})") from None

    def closed_loop(self, dobc: bool | None = None) -> ClosedLoop:
        gains = _build(PIDGains, self.controller, "controller")
        obs_cfg = dict(self.observer)
        enabled = obs_cfg.pop("enabled", True)
        if dobc is not None:
            enabled = dobc
        observer = _build(ObserverSettings, obs_cfg, "observer") if enabled else None
        sc = self.scenario
        noise = None
        if sc.get("noise"):
            noise = _build(NoiseSpec, {"seed": self.seed, **sc["noise"]}, "scenario.noise")
        return ClosedLoop(
            self.plant_model(),
            gains,
            observer,
            measurement_delay=float(sc.get("delay", 0.0)),
            load_noise=noise,
            stimulus=self.stimulus(),
            dt=self.dt,
        )

    def stimulus(self) -> Stimulus:
        sc = self.scenario
        t = float(sc.get("t_step", 1.0))
        names = {"lfc": ("pv_step", "dP_pv", "load_step", "dP_load"),
                 "avr": ("v_ref_step", "v_ref"),
                 "generic": ("ref_step", "ref", "disturbance_step", "d")}[self.loop]
        steps = {}
        for key, sig in zip(names[0::2], names[1::2]):
            if key in sc:
                steps[sig] = [(t, float(sc[key]))]
        return Stimulus(steps)

    @property
    def case(self) -> str | None:
        return self.scenario.get("case")

    @property
    def t_step(self) -> float:
        return float(self.scenario.get("t_step", 1.0))


def resolve(raw: dict | None = None, **overrides) -> RunConfig:
    """Merge profile defaults, file contents and command-line overrides."""
    raw = copy.deepcopy(raw or {})
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    profile_name = overrides.get("profile") or raw.get("profile") or "paper-appendix-a"
    profile = load_profile(profile_name)
    case = overrides.get("case")
    loop = raw.get("loop")
    if case:
        if case not in PAPER_CASES:
            raise ConfigError("case", f"unknown case {case!r}; expected one of {', '.join(PAPER_CASES)}")
        loop = case.split("-")[0]
    loop = loop or (raw.get("scenario", {}) or {}).get("case", "").split("-")[0] or profile.get("loop", "lfc")
    if loop not in ("lfc", "avr", "generic"):
        raise ConfigError("loop", f"unknown loop {loop!r}")

    plant = _merge(_pick(profile.get("plant", {}), loop), _pick(raw.get("plant", {}), loop))
    if not plant:
        raise ConfigError("plant", f"profile {profile_name!r} has no {loop} plant")
    controller = _merge(_pick(profile.get("controller", {}), loop), _pick(raw.get("controller", {}), loop))
    observer = _merge(_pick(profile.get("observer", {}), loop), _pick(raw.get("observer", {}), loop))
    scenario = dict(raw.get("scenario") or {})
    if case:
        scenario["case"] = case
    sc_case = scenario.get("case")
    if sc_case is not None and sc_case not in PAPER_CASES:
        raise ConfigError("scenario.case", f"unknown case {sc_case!r}")
    if sc_case is not None and sc_case.split("-")[0] != loop:
        raise ConfigError("scenario.case", f"case {sc_case!r} does not match loop {loop!r}")
    solver = _merge(DEFAULT_SOLVER[loop], raw.get("solver") or {})
    for key in ("dt", "horizon"):
        if overrides.get(key) is not None:
            solver[key] = overrides[key]
    try:
        dt, horizon = float(solver["dt"]), float(solver["horizon"])
    except (TypeError, ValueError):
        raise ConfigError("solver", "dt and horizon must be numbers") from None
    if not dt > 0:
        raise ConfigError("solver.dt", "must be positive")
    if not horizon > 0:
        raise ConfigError("solver.horizon", "must be positive")
    seed = overrides.get("seed")
    seed = int(raw.get("seed", 0) if seed is None else seed)
    cfg = RunConfig(profile_name, loop, plant, controller, observer, scenario, dt, horizon, seed)
    cfg.closed_loop()  # validate every section now
    return cfg


def load_config(path: str | os.PathLike | None, **overrides) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from None
        if isinstance(raw, dict) and "tool" in raw and "config" in raw:
            raw = raw["config"]  # a run manifest
    return resolve(raw, **overrides)
