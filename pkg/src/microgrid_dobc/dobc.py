"""Disturbance observer: low-pass Q-filter design and the two-branch
estimator ``d_hat = Q Gn^-1 y - Q x``.

``Gn^-1`` is improper for any strictly proper plant, so it is never realized
on its own; the output branch realizes ``Q * Gn^-1`` as one rational block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .lti import (
    FrequencyPoint,
    StateSpaceModel,
    TransferFunction,
    cutoff_frequency,
    frequency_response,
    step_rk4,
    to_state_space,
)


@dataclass(frozen=True)
class QFilter:
    lam: float
    order: int
    tf: TransferFunction

    @property
    def settling_horizon(self) -> float:
        """``5 * order * lambda``, after which a constant disturbance is tracked to 1%."""
        return 5.0 * self.order * self.lam

    def response(self, omega: float) -> FrequencyPoint:
        return frequency_response(self.tf, omega)

    def closed_form(self, omega: float) -> tuple[float, float]:
        """``(|Q(jw)|, angle Q(jw) in degrees)`` from the factored form."""
        x = self.lam * omega
        return (1.0 + x * x) ** (-self.order / 2.0), -self.order * np.degrees(np.arctan(x))

    def cutoff(self) -> float:
        return cutoff_frequency(self.tf)

    def cutoff_closed_form(self) -> float:
        return np.sqrt(2.0 ** (1.0 / self.order) - 1.0) / self.lam


def design_q(lam: float, order: int) -> QFilter:
    """``Q(s) = 1 / (lam*s + 1)**order`` with exact binomial coefficients."""
    if not lam > 0:
        raise ValueError(f"filter parameter lambda must be positive, got {lam}")
    if int(order) != order or order < 1:
        raise ValueError(f"filter order must be a positive integer, got {order}")
    order = int(order)
    den = [comb(order, k) * lam**k for k in range(order + 1)]
    return QFilter(float(lam), order, TransferFunction([1.0], den))


class ObserverOrderError(ValueError):
    pass


@dataclass
class DisturbanceObserver:
    q_filter: QFilter
    nominal_plant: TransferFunction
    branch_yq: StateSpaceModel
    branch_xq: StateSpaceModel
    yq_tf: TransferFunction = field(repr=False)
    last_estimate: float = 0.0

    def reset(self) -> None:
        self.branch_yq.reset()
        self.branch_xq.reset()
        self.last_estimate = 0.0


def make_observer(nominal: TransferFunction, q: QFilter) -> DisturbanceObserver:
    required = nominal.relative_degree
    if q.order < required:
        raise ObserverOrderError(
            f"Q-filter order {q.order} is below the nominal plant's relative degree; "
            f"minimum order is {required}"
        )
    yq = TransferFunction(nominal.den * q.tf.num, nominal.num * q.tf.den)
    return DisturbanceObserver(
        q_filter=q,
        nominal_plant=nominal,
        branch_yq=to_state_space(yq),
        branch_xq=to_state_space(q.tf),
        yq_tf=yq,
    )


def observe_step(obs: DisturbanceObserver, y: float, x: float, dt: float) -> float:
    """Advance both branches by ``dt`` with ``y`` and ``x`` held; return the estimate."""
    d_hat = step_rk4(obs.branch_yq, y, dt) - step_rk4(obs.branch_xq, x, dt)
    obs.last_estimate = d_hat
    return d_hat


def feed_forward(x_c: float, d_hat: float) -> float:
    """Plant input with the estimated disturbance cancelled."""
    return x_c - d_hat


# lambda values tabulated in the filter analysis, largest first
TABLE1_LAMBDAS = (5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.15, 0.1, 0.05, 0.01)


def q_summary(lam: float, order: int = 4, omega: float = 0.1) -> tuple[float, float, float]:
    """``(gain_db, phase_deg, cutoff)`` of the Q filter at one probe frequency."""
    q = design_q(lam, order)
    p = q.response(omega)
    return p.gain_db, p.phase_deg, q.cutoff()
