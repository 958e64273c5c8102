"""Geodesics, flows with their tangent maps, and flow-level residuals.

All integration is classical fixed-step RK4. A run of length ``t_end`` with
requested step ``h`` uses ``ceil(t_end / h)`` equal steps, so the final
sample lands exactly on ``t_end``. Trajectories that leave the margin-inset
chart box abort with :class:`LeftChart`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, TextIO

import numpy as np

from .expr import DomainError
from .geometry import ChartManifold, christoffel, geometry_jet
from .operators import FieldSpec, _field_arrays

__all__ = [
    "GeodesicState",
    "FlowState",
    "TrajectorySample",
    "LeftChart",
    "StepInvalid",
    "integrate_geodesic",
    "integrate_flow",
    "flow_points",
    "metric_preservation_residual",
    "volume_preservation_residual",
    "geodesic_preservation_residual",
    "jacobi_ode_residual",
    "dump_trajectory",
]


class LeftChart(DomainError):
    def __init__(self, t: float, pos):
        self.t = float(t)
        super().__init__(f"trajectory left the chart interior at t={self.t:.6g}", pos)


class StepInvalid(ValueError):
    pass


@dataclass(frozen=True)
class GeodesicState:
    pos: np.ndarray
    vel: np.ndarray


@dataclass(frozen=True)
class FlowState:
    pos: np.ndarray
    jac: np.ndarray


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    state: GeodesicState | FlowState
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        s = self.state
        rec = {"t": self.t}
        if isinstance(s, GeodesicState):
            rec.update(kind="geodesic", pos=s.pos.tolist(), vel=s.vel.tolist())
        else:
            rec.update(kind="flow", pos=s.pos.tolist(), jac=s.jac.tolist())
        rec["diagnostics"] = self.diagnostics
        return json.dumps(rec)


def _steps(t_end: float, step: float) -> tuple[int, float]:
    if not (math.isfinite(step) and step > 0):
        raise StepInvalid(f"step must be positive and finite, got {step!r}")
    if not (math.isfinite(t_end) and t_end >= 0):
        raise StepInvalid(f"integration length must be non-negative and finite, got {t_end!r}")
    if t_end == 0:
        return 0, 0.0
    n = max(1, math.ceil(t_end / step - 1e-9))
    return n, t_end / n


def _rk4(rhs: Callable, y0: np.ndarray, t_end: float, step: float, after_step: Callable) -> list[np.ndarray]:
    """Fixed-step RK4; returns the state after every step (including t=0)."""
    n, h = _steps(t_end, step)
    y = np.array(y0, dtype=float)
    out = [y.copy()]
    for k in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        y = after_step(y, (k + 1) * h if k + 1 < n else t_end)
        out.append(y.copy())
    return out


def _times(t_end: float, step: float) -> list[float]:
    n, h = _steps(t_end, step)
    return [k * h for k in range(n)] + [t_end] if n else [0.0]


def _guard(m: ChartManifold, n: int):
    def after(y, t):
        pos = y[..., :n]
        bad = m.outside(pos.reshape(-1, n))
        if np.any(bad):
            raise LeftChart(t, pos.reshape(-1, n)[int(np.flatnonzero(bad)[0])])
        y = y.copy()
        y[..., :n] = m.wrap(pos)
        return y

    return after


def _check_start(m: ChartManifold, pos: np.ndarray) -> None:
    bad = m.outside(np.atleast_2d(pos))
    if np.any(bad):
        raise LeftChart(0.0, np.atleast_2d(pos)[int(np.flatnonzero(bad)[0])])


# --------------------------------------------------------------------------
# geodesics


def _geodesic_rhs(m: ChartManifold):
    n = m.dim

    def rhs(y):
        x, v = y[:, :n], y[:, n:]
        gam = christoffel(m, x)
        return np.concatenate([v, -np.einsum("...ijk,...j,...k->...i", gam, v, v)], axis=1)

    return rhs


def _geodesic_batch(m: ChartManifold, pos: np.ndarray, vel: np.ndarray, s_end: float, step: float) -> list[np.ndarray]:
    n = m.dim
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    vel = np.atleast_2d(np.asarray(vel, dtype=float))
    _check_start(m, pos)
    y0 = np.concatenate([m.wrap(pos), vel], axis=1)
    return _rk4(_geodesic_rhs(m), y0, s_end, step, _guard(m, n))


def _energy(m: ChartManifold, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    g = geometry_jet(m, pos).g
    return np.einsum("...ij,...i,...j->...", g, vel, vel)


def integrate_geodesic(m: ChartManifold, start: GeodesicState, t_end: float, step: float = 1e-3) -> list[TrajectorySample]:
    """Solve the geodesic equation from ``start``; records ``g(T, T)`` as ``energy``."""
    n = m.dim
    states = _geodesic_batch(m, start.pos, start.vel, t_end, step)
    ys = np.stack([s[0] for s in states])
    energy = _energy(m, ys[:, :n], ys[:, n:])
    return [
        TrajectorySample(t, GeodesicState(y[:n].copy(), y[n:].copy()), {"energy": float(e)})
        for t, y, e in zip(_times(t_end, step), ys, energy)
    ]


# --------------------------------------------------------------------------
# flows


def _flow_rhs(m: ChartManifold, f: FieldSpec, with_jac: bool):
    n = m.dim

    def rhs(y):
        x = y[:, :n]
        vals, dx, _ = _field_arrays(f, x, order=1)
        if not with_jac:
            return vals
        jac = y[:, n:].reshape(-1, n, n)
        djac = np.einsum("...ik,...kj->...ij", dx, jac)
        return np.concatenate([vals, djac.reshape(-1, n * n)], axis=1)

    return rhs


def _flow_batch(m: ChartManifold, f: FieldSpec, pts: np.ndarray, t_end: float, step: float, with_jac: bool = True):
    n = m.dim
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    _check_start(m, pts)
    if len(f.components) != n:
        raise ValueError(f"field {f.name!r} does not match the dimension of {m.name!r}")
    y0 = m.wrap(pts)
    if with_jac:
        y0 = np.concatenate([y0, np.tile(np.eye(n).reshape(1, -1), (len(pts), 1))], axis=1)
    return _rk4(_flow_rhs(m, f, with_jac), y0, t_end, step, _guard(m, n))


def flow_points(m: ChartManifold, f: FieldSpec, pts, t: float, step: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints ``phi_t(p)`` and tangent maps ``d phi_t`` for a batch of points."""
    n = m.dim
    final = _flow_batch(m, f, pts, t, step)[-1]
    return final[:, :n], final[:, n:].reshape(-1, n, n)


def integrate_flow(m: ChartManifold, f: FieldSpec, start_pos, t_end: float, step: float = 1e-3) -> list[TrajectorySample]:
    """Integrate ``x' = X(x)`` together with ``J' = (dX/dx) J``, ``J(0) = I``."""
    n = m.dim
    states = _flow_batch(m, f, start_pos, t_end, step)
    out = []
    for t, y in zip(_times(t_end, step), states):
        jac = y[0, n:].reshape(n, n).copy()
        out.append(TrajectorySample(t, FlowState(y[0, :n].copy(), jac), {"det": float(np.linalg.det(jac))}))
    return out


def metric_preservation_residual(m: ChartManifold, f: FieldSpec, p, t: float, step: float = 1e-3) -> float:
    """max-abs entry of ``Jac^T g(phi_t p) Jac - g(p)``."""
    pos, jac = flow_points(m, f, p, t, step)
    g0 = geometry_jet(m, np.atleast_2d(p)).g
    g1 = geometry_jet(m, pos).g
    pulled = np.einsum("...ki,...kl,...lj->...ij", jac, g1, jac)
    return float(np.abs(pulled - g0).max())


def volume_preservation_residual(m: ChartManifold, f: FieldSpec, p, t: float, step: float = 1e-3) -> float:
    pos, jac = flow_points(m, f, p, t, step)
    s0 = geometry_jet(m, np.atleast_2d(p)).sqrt_det_g
    s1 = geometry_jet(m, pos).sqrt_det_g
    return float(np.abs(np.linalg.det(jac) * s1 / s0 - 1.0).max())


def _coord_distance(m: ChartManifold, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    per = m.periods()
    for k, P in enumerate(per):
        if P > 0:
            d[..., k] = (d[..., k] + 0.5 * P) % P - 0.5 * P
    return np.linalg.norm(d, axis=-1)


def geodesic_preservation_residual(
    m: ChartManifold,
    f: FieldSpec,
    start: GeodesicState,
    t_flow: float,
    s_end: float,
    step: float = 1e-3,
) -> float:
    """Distance between the flowed geodesic and the geodesic with flowed initial data.

    ``c(s) = phi_t(gamma(s))`` is compared with the geodesic starting at
    ``(phi_t(gamma(0)), d phi_t gamma'(0))`` at every step of ``s``; the
    maximum coordinate distance is returned.
    """
    n = m.dim
    gamma = np.stack([y[0] for y in _geodesic_batch(m, start.pos, start.vel, s_end, step)])
    flowed, jac = flow_points(m, f, gamma[:, :n], t_flow, step)
    vel0 = jac[0] @ gamma[0, n:]
    image = np.stack([y[0] for y in _geodesic_batch(m, flowed[0], vel0, s_end, step)])
    return float(_coord_distance(m, flowed, image[:, :n]).max())


def jacobi_ode_residual(m: ChartManifold, f: FieldSpec, geo: GeodesicState, s_end: float, step: float = 1e-3) -> float:
    """max over the geodesic of ``|nabla_T nabla_T V + R(V, T) T|`` with ``V = X|gamma``.

    ``nabla_T V = (nabla X)(T)`` and its derivative along the curve are
    assembled from exact jets, with ``T' = -Gamma(T, T)`` from the geodesic
    equation.
    """
    n = m.dim
    traj = np.concatenate([y for y in _geodesic_batch(m, geo.pos, geo.vel, s_end, step)], axis=0)
    return float(_jacobi_along(m, f, traj[:, :n], traj[:, n:]).max())


def _jacobi_along(m: ChartManifold, f: FieldSpec, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    gj = geometry_jet(m, pos)
    x, dx, ddx = _field_arrays(f, pos)
    gam = gj.gamma
    acc = -np.einsum("...ijk,...j,...k->...i", gam, vel, vel)
    nabla = dx + np.einsum("...ikl,...l->...ik", gam, x)
    w = np.einsum("...ik,...k->...i", nabla, vel)
    # d/ds of nabla^i_k along the curve: (d_m nabla^i_k) T^m
    d_nabla = ddx + np.einsum("...iklm,...l->...ikm", gj.dgamma, x) + np.einsum("...ikl,...lm->...ikm", gam, dx)
    dw = np.einsum("...ikm,...m,...k->...i", d_nabla, vel, vel) + np.einsum("...ik,...k->...i", nabla, acc)
    cov = dw + np.einsum("...imk,...m,...k->...i", gam, vel, w)
    curv = gj.curvature_operator(x, vel, vel)
    return np.abs(cov + curv).max(axis=-1)


def dump_trajectory(samples: Iterable[TrajectorySample], out: TextIO) -> int:
    count = 0
    for s in samples:
        out.write(s.to_json() + "\n")
        count += 1
    return count
