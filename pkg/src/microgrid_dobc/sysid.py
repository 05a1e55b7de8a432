"""Second-order continuous-time plant identification, ``b0 / (s^2 + a1 s + a0)``,
by least squares on state-variable-filtered input/output data."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .lti import TransferFunction, compose_feedback, poles, routh_hurwitz_stable, series

N_PARAMS = 3
RELIABLE_FIT = 50.0


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class IdentificationError(ValueError):
    pass


@dataclass
class IdDataset:
    dt: float
    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if not self.dt > 0:
            raise DatasetError("dt must be positive")
        if self.u.shape != self.y.shape or self.u.ndim != 1:
            raise DatasetError("u and y must be 1-D sequences of equal length")
        if self.u.size < 10 * N_PARAMS:
            raise DatasetError(f"need at least {10 * N_PARAMS} samples, got {self.u.size}")

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.u.size) * self.dt

    @classmethod
    def from_csv(cls, path) -> IdDataset:
        """Read ``time, u, y`` columns (header row optional, uniform sampling)."""
        t, u, y = [], [], []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if lineno == 1 and not _is_number(row[0]):
                    continue
                if len(row) < 3:
                    raise DatasetError(f"expected 3 columns (time, u, y), got {len(row)}", lineno)
                try:
                    vals = [float(c) for c in row[:3]]
                except ValueError:
                    raise DatasetError(f"non-numeric value in {row[:3]}", lineno) from None
                t.append(vals[0])
                u.append(vals[1])
                y.append(vals[2])
        if len(t) < 2:
            raise DatasetError("dataset has fewer than two samples")
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt + 1e-12:
            raise DatasetError("time column must be strictly increasing and uniformly spaced")
        return cls(dt, np.array(u), np.array(y))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "u", "y"])
            for row in zip(self.time, self.u, self.y):
                w.writerow([repr(float(v)) for v in row])


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


@dataclass
class IdResult:
    model: TransferFunction
    fit_percent: float
    stable: bool
    reliable: bool = True
    filter_bandwidth: float = 0.0
    poles: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=complex))

    @property
    def b0(self) -> float:
        return float(self.model.num.coeffs[0])

    @property
    def a1(self) -> float:
        return float(self.model.den.coeffs[1])

    @property
    def a0(self) -> float:
        return float(self.model.den.coeffs[0])

    def to_profile(self) -> dict:
        return {
            "plant": {
                "num": self.model.num.coeffs.tolist(),
                "den": self.model.den.coeffs.tolist(),
            },
            "fit_percent": self.fit_percent,
            "stable": self.stable,
        }


def _filtered(x: np.ndarray, t: np.ndarray, wf: float, hold: bool) -> np.ndarray:
    """Columns ``[F x, s F x, s^2 F x]`` with ``F = 1 / (s + wf)^2``."""
    den = np.polymul([1.0, wf], [1.0, wf])
    out = []
    for num in ([1.0], [1.0, 0.0], [1.0, 0.0, 0.0]):
        _, yf, _ = signal.lsim((num, den), x, t, interp=not hold)
        out.append(yf)
    return np.column_stack(out)


def _solve(data: IdDataset, wf: float, input_hold: bool) -> np.ndarray:
    t = data.time
    fu = _filtered(data.u - data.u[0], t, wf, input_hold)
    fy = _filtered(data.y - data.y[0], t, wf, False)
    # s^2 F y = -a1 sF y - a0 F y + b0 F u
    Phi = np.column_stack([-fy[:, 1], -fy[:, 0], fu[:, 0]])
    target = fy[:, 2]
    norms = np.linalg.norm(Phi, axis=0)
    if np.any(norms == 0):
        raise IdentificationError("regression is rank deficient (a regressor is identically zero)")
    Pn = Phi / norms
    sv = np.linalg.svd(Pn, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise IdentificationError("regression is rank deficient; input is not exciting enough")
    theta, *_ = np.linalg.lstsq(Pn, target, rcond=None)
    return theta / norms


def simulate_model(model: TransferFunction, u: np.ndarray, dt: float, input_hold: bool = True) -> np.ndarray:
    t = np.arange(u.size) * dt
    num = model.num.coeffs[::-1]
    den = model.den.coeffs[::-1]
    _, y, _ = signal.lsim((num, den), u, t, interp=not input_hold)
    return y


def fit_percent(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Normalized-RMSE fit, ``100 (1 - |y - y_hat| / |y - mean(y)|)``, clipped to [0, 100]."""
    spread = np.linalg.norm(y - np.mean(y))
    if spread == 0 or not np.all(np.isfinite(y_hat)):
        return 0.0
    return float(np.clip(100.0 * (1.0 - np.linalg.norm(y - y_hat) / spread), 0.0, 100.0))


def fit_second_order(
    data: IdDataset,
    filter_bandwidth: float | None = None,
    input_hold: bool = True,
) -> IdResult:
    """Fit ``b0 / (s^2 + a1 s + a0)`` to the dataset.

    Without an explicit ``filter_bandwidth`` a first pass at a fast filter
    locates the dominant pole, and the fit is repeated with the filter at ten
    times that pole's magnitude. ``input_hold`` treats ``u`` as
    piecewise-constant between samples (logged duty cycle).
    """
    if filter_bandwidth is None:
        wf = 0.05 * 2.0 * np.pi / data.dt
        a1, a0, _ = _solve(data, wf, input_hold)
        r = np.roots([1.0, a1, a0])
        dom = np.min(np.abs(r)) if np.all(np.isfinite(r)) else 0.0
        if dom > 0:
            wf = 10.0 * dom
    else:
        wf = float(filter_bandwidth)
        if not wf > 0:
            raise ValueError("filter bandwidth must be positive")
    a1, a0, b0 = _solve(data, wf, input_hold)
    model = TransferFunction([b0], [a0, a1, 1.0])
    stable = routh_hurwitz_stable(model.den)
    u0, y0 = data.u[0], data.y[0]
    with np.errstate(all="ignore"):
        y_hat = simulate_model(model, data.u - u0, data.dt, input_hold) + y0
    fit = fit_percent(data.y, y_hat)
    return IdResult(model, fit, stable, fit >= RELIABLE_FIT, wf, poles(model))


def verify_stability(result: IdResult | TransferFunction, ki: float) -> tuple[bool, np.ndarray]:
    """Close ``ki/s`` around the plant with unity feedback; Routh verdict and poles."""
    plant = result.model if isinstance(result, IdResult) else result
    loop = series(TransferFunction([ki], [0.0, 1.0]), plant)
    cl = compose_feedback(loop, TransferFunction.gain(1.0))
    return routh_hurwitz_stable(cl.den), poles(cl)


def critical_integral_gain(result: IdResult | TransferFunction) -> float:
    """Integral gain where ``s^3 + a1 s^2 + a0 s + ki b0`` loses stability (``a1 a0 / b0``)."""
    plant = result.model if isinstance(result, IdResult) else result
    a0, a1 = plant.den.coeffs[0], plant.den.coeffs[1]
    return float(a1 * a0 / plant.num.coeffs[0])
