"""Linear block-diagram compiler.

Blocks are SISO state-space realizations wired through weighted sums of named
signals. ``compile`` flattens the diagram into one system

    x' = A x + Bw w + Bs sat(s),    s = Sx x + Sw w (+ earlier saturations)

so a whole closed loop integrates with a single RK4 step and no artificial
one-sample lag between blocks. Saturations are the only nonlinearity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lti import SimulationDiverged, StateSpaceModel, TransferFunction, rk4, to_state_space


class AlgebraicLoopError(ValueError):
    pass


@dataclass
class _Block:
    model: StateSpaceModel
    terms: dict[str, float]
    offset: int = 0


@dataclass
class _Saturation:
    source: str
    limit: float


@dataclass
class Diagram:
    inputs: list[str] = field(default_factory=list)
    blocks: dict[str, _Block] = field(default_factory=dict)
    sums: dict[str, dict[str, float]] = field(default_factory=dict)
    saturations: dict[str, _Saturation] = field(default_factory=dict)

    def _check_new(self, name: str) -> None:
        if name in self.inputs or name in self.blocks or name in self.sums or name in self.saturations:
            raise ValueError(f"signal {name!r} already defined")

    def add_input(self, name: str) -> str:
        self._check_new(name)
        self.inputs.append(name)
        return name

    def add_block(self, name: str, system: TransferFunction | StateSpaceModel, terms: dict[str, float]) -> str:
        self._check_new(name)
        model = to_state_space(system) if isinstance(system, TransferFunction) else system.copy()
        self.blocks[name] = _Block(model, dict(terms))
        return name

    def add_sum(self, name: str, terms: dict[str, float] | None = None) -> str:
        self._check_new(name)
        self.sums[name] = dict(terms or {})
        return name

    def add_saturation(self, name: str, source: str, limit: float) -> str:
        self._check_new(name)
        if not limit > 0:
            raise ValueError("saturation limit must be positive")
        self.saturations[name] = _Saturation(source, float(limit))
        return name

    def rewire(self, name: str, terms: dict[str, float]) -> None:
        """Replace the terms feeding a sum or block input."""
        if name in self.sums:
            self.sums[name] = dict(terms)
        elif name in self.blocks:
            self.blocks[name].terms = dict(terms)
        else:
            raise KeyError(name)

    def signals(self) -> list[str]:
        return [*self.inputs, *self.blocks, *self.sums, *self.saturations]

    def compile(self, outputs: list[str]) -> CompiledSystem:
        return _Compiler(self).run(outputs)


class _Compiler:
    """Expresses every signal as a row over (x, w, sigma)."""

    def __init__(self, dg: Diagram):
        self.dg = dg
        off = 0
        for blk in dg.blocks.values():
            blk.offset = off
            off += blk.model.n_states
        self.nx = off
        self.nw = len(dg.inputs)
        self.sat_names = list(dg.saturations)
        self.ns = len(self.sat_names)
        self.width = self.nx + self.nw + self.ns
        self.rows: dict[str, np.ndarray] = {}
        self.active: set[str] = set()

    def row(self, name: str) -> np.ndarray:
        if name in self.rows:
            return self.rows[name]
        dg = self.dg
        if name in self.active:
            raise AlgebraicLoopError(f"algebraic loop through {name!r}")
        self.active.add(name)
        r = np.zeros(self.width)
        if name in dg.inputs:
            r[self.nx + dg.inputs.index(name)] = 1.0
        elif name in dg.saturations:
            r[self.nx + self.nw + self.sat_names.index(name)] = 1.0
        elif name in dg.sums:
            for src, g in dg.sums[name].items():
                r += g * self._resolved(src)
        elif name in dg.blocks:
            blk = dg.blocks[name]
            m = blk.model
            r[blk.offset : blk.offset + m.n_states] = m.C[0]
            d = m.D[0, 0]
            if d != 0.0:
                r += d * self.input_row(name)
        else:
            raise KeyError(f"unknown signal {name!r}")
        self.active.discard(name)
        self.rows[name] = r
        return r

    def _resolved(self, src: str) -> np.ndarray:
        if src not in self.dg.signals():
            raise KeyError(f"unknown signal {src!r}")
        return self.row(src)

    def input_row(self, block: str) -> np.ndarray:
        r = np.zeros(self.width)
        for src, g in self.dg.blocks[block].terms.items():
            r += g * self._resolved(src)
        return r

    def run(self, outputs: list[str]) -> CompiledSystem:
        nx, nw, ns = self.nx, self.nw, self.ns
        A = np.zeros((nx, nx))
        Bw = np.zeros((nx, nw))
        Bs = np.zeros((nx, ns))
        for name, blk in self.dg.blocks.items():
            m = blk.model
            if not m.n_states:
                continue
            sl = slice(blk.offset, blk.offset + m.n_states)
            u = self.input_row(name)
            A[sl, sl] += m.A
            A[sl, :] += np.outer(m.B[:, 0], u[:nx])
            Bw[sl, :] += np.outer(m.B[:, 0], u[nx : nx + nw])
            Bs[sl, :] += np.outer(m.B[:, 0], u[nx + nw :])
        S = np.zeros((ns, self.width))
        limits = np.zeros(ns)
        for j, name in enumerate(self.sat_names):
            sat = self.dg.saturations[name]
            S[j] = self._resolved(sat.source)
            if np.any(S[j, nx + nw + j :] != 0):
                raise AlgebraicLoopError(f"saturation {name!r} depends on itself or a later saturation")
            limits[j] = sat.limit
        Y = np.vstack([self.row(o) for o in outputs]) if outputs else np.zeros((0, self.width))
        x0 = np.concatenate([b.model.state for b in self.dg.blocks.values()]) if nx else np.zeros(0)
        return CompiledSystem(
            A=A, Bw=Bw, Bs=Bs, S=S, limits=limits, Y=Y,
            inputs=list(self.dg.inputs), outputs=list(outputs), x0=x0,
        )


@dataclass
class CompiledSystem:
    A: np.ndarray
    Bw: np.ndarray
    Bs: np.ndarray
    S: np.ndarray
    limits: np.ndarray
    Y: np.ndarray
    inputs: list[str]
    outputs: list[str]
    x0: np.ndarray

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def saturated(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        nx, nw = self.A.shape[0], self.Bw.shape[1]
        sig = np.zeros(self.limits.size)
        for j in range(sig.size):
            raw = self.S[j, :nx] @ x + self.S[j, nx : nx + nw] @ w + self.S[j, nx + nw :] @ sig
            sig[j] = min(max(raw, -self.limits[j]), self.limits[j])
        return sig

    def derivative(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        dx = self.A @ x + self.Bw @ w
        if self.limits.size:
            dx = dx + self.Bs @ self.saturated(x, w)
        return dx

    def evaluate(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """All declared outputs at state ``x`` with inputs ``w``."""
        z = np.concatenate([x, w, self.saturated(x, w)])
        return self.Y @ z

    def signal_row(self, name: str) -> np.ndarray:
        return self.Y[self.outputs.index(name)]

    def stepper(self, dt: float):
        """Return ``step(x, w) -> x_next`` performing one RK4 step with ``w`` held.

        Without saturations RK4 on a linear system is the fixed linear map
        ``x + dt*k1/6 + ...`` which is precomputed as ``Phi x + Gamma w``.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not self.limits.size:
            n = self.n_states
            Ah = self.A * dt
            I = np.eye(n)
            A2 = Ah @ Ah
            T = I + Ah / 2 + A2 / 6 + A2 @ Ah / 24
            Phi = I + Ah @ T
            Gam = dt * T @ self.Bw

            def step(x, w):
                return Phi @ x + Gam @ w

            return step

        nx, nw = self.n_states, self.Bw.shape[1]
        if not np.any(self.S[:, nx + nw :]):
            # independent saturations: clip a single matrix product per stage
            A, Bs, Sx, lim = self.A, self.Bs, self.S[:, :nx], self.limits

            def step(x, w):
                bw = self.Bw @ w
                sw = self.S[:, nx : nx + nw] @ w
                return rk4(lambda z: A @ z + bw + Bs @ np.clip(Sx @ z + sw, -lim, lim), x, dt)

            return step

        def step(x, w):
            return rk4(lambda z: self.derivative(z, w), x, dt)

        return step

    def simulate(self, w_of_k, n_steps: int, dt: float, t0: float = 0.0) -> np.ndarray:
        """Open-loop simulation with a callable ``w_of_k(k)``; returns output samples."""
        step = self.stepper(dt)
        x = self.x0.copy()
        out = np.zeros((n_steps, len(self.outputs)))
        for k in range(n_steps):
            w = w_of_k(k)
            out[k] = self.evaluate(x, w)
            x = step(x, w)
            if not np.all(np.isfinite(x)):
                raise SimulationDiverged("closed-loop state became non-finite", t0 + (k + 1) * dt)
        return out
