"""Performance indices (ISE, ITSE, IAE, ITAE, peak, settling time) and the
tabular report renderings."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

COLUMNS = ("ISE", "ITSE", "IAE", "ITAE", "MO", "Settling Time")


@dataclass(frozen=True)
class PerformanceReport:
    ise: float
    itse: float
    iae: float
    itae: float
    max_overshoot: float
    settling_time: float
    settled: bool = True
    band_fraction: float = 0.05
    peak_label: str = "peak |e|"

    def values(self) -> tuple[float, ...]:
        return (self.ise, self.itse, self.iae, self.itae, self.max_overshoot, self.settling_time)

    def as_dict(self) -> dict:
        return asdict(self)


def _trapz(y: np.ndarray, dt: float) -> float:
    if y.size < 2:
        return 0.0
    return float(dt * (np.sum(y) - 0.5 * (y[0] + y[-1])))


def settling_time(
    signal,
    final_value: float,
    band_fraction: float,
    dt: float,
    t0: float = 0.0,
    scale: float | None = None,
) -> tuple[float, bool]:
    """Last time (from ``t0``) the signal is outside ``final +/- band*scale``.

    ``scale`` defaults to the peak excursion from ``final`` after ``t0``. For
    a step response with under 100% overshoot that is the step size; for
    regulation back to the pre-disturbance value it is the peak deviation,
    which keeps measurement noise at ``t0`` from shrinking the band. Returns
    ``(time, settled)``; an unsettled signal reports the remaining horizon.
    """
    if not band_fraction > 0:
        raise ValueError("band_fraction must be positive")
    y = np.asarray(signal, dtype=float)
    k0 = int(round(t0 / dt))
    seg = y[k0:] - final_value
    if seg.size == 0:
        raise ValueError("t0 lies beyond the end of the signal")
    if scale is None:
        scale = float(np.max(np.abs(seg)))
    if scale == 0:
        return 0.0, True
    outside = np.nonzero(np.abs(seg) > band_fraction * scale)[0]
    if outside.size == 0:
        return 0.0, True
    last = outside[-1]
    horizon = (seg.size - 1) * dt
    if last == seg.size - 1:
        return float(horizon), False
    return float((last + 1) * dt), True


def compute_indices(
    error_channel,
    dt: float,
    t0: float = 0.0,
    response=None,
    band_fraction: float = 0.05,
    peak_label: str | None = None,
) -> PerformanceReport:
    """Trapezoidal ISE/ITSE/IAE/ITAE of ``error_channel`` from ``t0`` on.

    Time in the weighted indices is measured from ``t0``. The peak field is
    ``max(response)`` when a response channel is given (absolute peak, as for
    terminal voltage) and ``max |error|`` otherwise (as for frequency
    deviation). Settling is measured on the error toward zero.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = np.asarray(error_channel, dtype=float)
    if e.size == 0:
        raise ValueError("empty signal")
    k0 = int(round(t0 / dt))
    seg = e[k0:]
    tau = np.arange(seg.size) * dt
    if response is not None:
        peak = float(np.max(np.asarray(response, dtype=float)[k0:]))
        label = peak_label or "peak value"
    else:
        peak = float(np.max(np.abs(seg)))
        label = peak_label or "peak |e|"
    ts, settled = settling_time(seg, 0.0, band_fraction, dt)
    return PerformanceReport(
        ise=_trapz(seg**2, dt),
        itse=_trapz(tau * seg**2, dt),
        iae=_trapz(np.abs(seg), dt),
        itae=_trapz(tau * np.abs(seg), dt),
        max_overshoot=peak,
        settling_time=ts,
        settled=settled,
        band_fraction=band_fraction,
        peak_label=label,
    )


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _cells(r: PerformanceReport) -> list[str]:
    cells = [_fmt(v) for v in r.values()]
    if not r.settled:
        cells[-1] += " (not settled)"
    return cells


def render_csv(rows: dict[str, PerformanceReport] | list[tuple[str, PerformanceReport]]) -> str:
    items = list(rows.items()) if isinstance(rows, dict) else list(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["controller", *COLUMNS, "settled"])
    for name, r in items:
        w.writerow([name, *(repr(float(v)) for v in r.values()), str(r.settled).lower()])
    return buf.getvalue()


def render_text(rows: dict[str, PerformanceReport] | list[tuple[str, PerformanceReport]], title: str = "") -> str:
    items = list(rows.items()) if isinstance(rows, dict) else list(rows)
    header = ["", *COLUMNS]
    body = [[name, *_cells(r)] for name, r in items]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(h.rjust(wd) if i else h.ljust(wd) for i, (h, wd) in enumerate(zip(header, widths))))
    lines.append("  ".join("-" * wd for wd in widths))
    for row in body:
        lines.append("  ".join(c.rjust(wd) if i else c.ljust(wd) for i, (c, wd) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def render_report(rows, title: str = "") -> tuple[str, str]:
    """``(plain_text, csv)`` renderings with the fixed column order."""
    return render_text(rows, title), render_csv(rows)
