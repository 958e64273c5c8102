"""Field operators: covariant differential, Killing and Jacobi tensors,
Lie derivative of the connection, divergence, and the three-way classifier.

Index conventions follow :mod:`fieldkind.geometry`; for field data

* ``dx[..., i, k] = d_k X^i``, ``ddx[..., i, j, k] = d_j d_k X^i``
* ``nabla_x[..., i, k] = (nabla_k X)^i = d_k X^i + Gamma^i_kl X^l``
* ``cov_diff_down[..., j, k] = X_{j;k} = g_ji nabla_x[i, k]``
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .expr import DomainError, Expression, eval_jet, parse, to_source
from .geometry import ChartManifold, GeometryJet, geometry_jet

__all__ = [
    "FieldSpec",
    "FieldJet",
    "Grid",
    "Thresholds",
    "ClassificationReport",
    "field_jet",
    "killing_tensor",
    "jacobi_tensor",
    "lie_derivative_connection",
    "divergence",
    "grid_points",
    "classify",
]


@dataclass(frozen=True, eq=False)
class FieldSpec:
    name: str
    components: tuple[Expression, ...]
    source: tuple[str, ...] = field(default=(), repr=False)

    @classmethod
    def from_strings(cls, name: str, components: Sequence[str], coords: Sequence[str]) -> "FieldSpec":
        if len(components) != len(coords):
            raise ValueError(f"field {name!r} has {len(components)} components, chart has dimension {len(coords)}")
        return cls(name, tuple(parse(c, coords) for c in components), tuple(components))

    def strings(self) -> list[str]:
        return list(self.source) if self.source else [to_source(c) for c in self.components]


@dataclass(frozen=True, eq=False)
class FieldJet:
    x_up: np.ndarray
    dx: np.ndarray
    ddx: np.ndarray
    x_down: np.ndarray
    nabla_x: np.ndarray
    cov_diff_down: np.ndarray


def _field_arrays(f: FieldSpec, pts: np.ndarray, order: int = 2):
    jets = [eval_jet(c, pts, order=order) for c in f.components]
    x = np.stack([j.value for j in jets], axis=-1)
    dx = np.stack([j.grad for j in jets], axis=-2)
    ddx = np.stack([j.hess for j in jets], axis=-3) if order >= 2 else None
    return x, dx, ddx


def _pointwise(m: ChartManifold, f: FieldSpec, p, geo: GeometryJet | None = None):
    if len(f.components) != m.dim:
        raise ValueError(f"field {f.name!r} does not match the dimension of {m.name!r}")
    arr = np.asarray(p, dtype=float)
    geo = geometry_jet(m, arr) if geo is None else geo
    x, dx, ddx = _field_arrays(f, np.atleast_2d(arr))
    if arr.ndim == 1:
        x, dx, ddx = x[0], dx[0], ddx[0]
    return geo, x, dx, ddx


def _assemble(geo: GeometryJet, x, dx, ddx) -> FieldJet:
    nabla = dx + np.einsum("...ikl,...l->...ik", geo.gamma, x)
    return FieldJet(
        x_up=x,
        dx=dx,
        ddx=ddx,
        x_down=np.einsum("...ij,...j->...i", geo.g, x),
        nabla_x=nabla,
        cov_diff_down=np.einsum("...ji,...ik->...jk", geo.g, nabla),
    )


def field_jet(m: ChartManifold, f: FieldSpec, p, geo: GeometryJet | None = None) -> FieldJet:
    geo, x, dx, ddx = _pointwise(m, f, p, geo)
    return _assemble(geo, x, dx, ddx)


def _killing(fj: FieldJet) -> np.ndarray:
    c = fj.cov_diff_down
    return c + np.swapaxes(c, -1, -2)


def second_covariant(geo: GeometryJet, fj: FieldJet) -> np.ndarray:
    """``H^i_jk`` with ``nabla^2_{d_j, d_k} X = H^i_jk d_i``."""
    gam, x, dx, n_x = geo.gamma, fj.x_up, fj.dx, fj.nabla_x
    # d_j (nabla_k X)^i
    d_nabla = (
        fj.ddx
        + np.einsum("...iklj,...l->...ijk", geo.dgamma, x)
        + np.einsum("...ikl,...lj->...ijk", gam, dx)
    )
    # nabla_j (nabla_k X) - nabla_(nabla_j d_k) X
    return d_nabla + np.einsum("...ijm,...mk->...ijk", gam, n_x) - np.einsum("...mjk,...im->...ijk", gam, n_x)


def _jacobi(geo: GeometryJet, fj: FieldJet) -> np.ndarray:
    # R(d_j, X) d_k = X^l R^i_kjl
    curv = np.einsum("...ikjl,...l->...ijk", geo.riemann, fj.x_up)
    return second_covariant(geo, fj) - curv


def _lie_connection(geo: GeometryJet, x, dx, ddx) -> np.ndarray:
    gam = geo.gamma
    return (
        ddx
        + np.einsum("...l,...ijkl->...ijk", x, geo.dgamma)
        - np.einsum("...ljk,...il->...ijk", gam, dx)
        + np.einsum("...ikl,...lj->...ijk", gam, dx)
        + np.einsum("...ijl,...lk->...ijk", gam, dx)
    )


def killing_tensor(m: ChartManifold, f: FieldSpec, p) -> np.ndarray:
    """``K_jk = X_{j;k} + X_{k;j}``, the Lie derivative of the metric along X."""
    return _killing(field_jet(m, f, p))


def jacobi_tensor(m: ChartManifold, f: FieldSpec, p) -> np.ndarray:
    """``J^i_jk`` with ``J(d_j, d_k) X = nabla^2_{d_j, d_k} X - R(d_j, X) d_k``.

    Built from covariant derivatives and the curvature tensor, not from the
    coordinate formula of :func:`lie_derivative_connection`.
    """
    geo, x, dx, ddx = _pointwise(m, f, p)
    return _jacobi(geo, _assemble(geo, x, dx, ddx))


def lie_derivative_connection(m: ChartManifold, f: FieldSpec, p) -> np.ndarray:
    """Coordinate expression of ``(L_X Gamma)^i_jk``."""
    geo, x, dx, ddx = _pointwise(m, f, p)
    return _lie_connection(geo, x, dx, ddx)


def divergence(m: ChartManifold, f: FieldSpec, p) -> np.ndarray | float:
    fj = field_jet(m, f, p)
    return np.trace(fj.nabla_x, axis1=-2, axis2=-1)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of ``per_dim`` points per axis plus quasi-random points.

    Periodic axes use ``per_dim`` equispaced points over one period; the
    other axes span the margin-inset interval including its endpoints.
    """

    per_dim: int = 33
    random_points: int = 200
    seed: int = 0

    def describe(self) -> dict:
        return {"kind": "lattice+halton", "per_dim": self.per_dim, "random_points": self.random_points, "seed": self.seed}


@dataclass(frozen=True)
class Thresholds:
    killing: float = 1e-8
    jacobi: float = 1e-8
    solenoidal: float = 1e-8
    div_constancy: float = 1e-8

    @classmethod
    def uniform(cls, tol: float) -> "Thresholds":
        return cls(tol, tol, tol, tol)


def grid_points(m: ChartManifold, grid: Grid = Grid()) -> np.ndarray:
    lo, hi = m.interior_box()
    axes = []
    for a, b, per in zip(lo, hi, m.periodic):
        if per:
            axes.append(a + (b - a) * np.arange(grid.per_dim) / grid.per_dim)
        else:
            axes.append(np.linspace(a, b, grid.per_dim))
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    if grid.random_points <= 0:
        return lattice
    sampler = qmc.Halton(d=m.dim, scramble=True, seed=grid.seed)
    extra = lo + (hi - lo) * sampler.random(grid.random_points)
    return np.concatenate([lattice, extra], axis=0)


@dataclass
class ClassificationReport:
    field: str
    manifold: str
    killing_residual: float
    jacobi_residual: float
    solenoidal_residual: float
    div_constancy_residual: float
    divergence_values: dict
    thresholds: dict
    is_killing: bool
    is_global_jacobi: bool
    is_solenoidal: bool
    is_div_constant: bool
    grid: dict

    def booleans(self) -> dict:
        return {"killing": self.is_killing, "jacobi": self.is_global_jacobi, "solenoidal": self.is_solenoidal}

    def to_dict(self) -> dict:
        return asdict(self)


def residual_fields(m: ChartManifold, f: FieldSpec, pts: np.ndarray) -> dict:
    """Pointwise Killing tensor, Jacobi tensor and divergence at a batch of points."""
    geo, x, dx, ddx = _pointwise(m, f, np.atleast_2d(pts))
    fj = _assemble(geo, x, dx, ddx)
    return {
        "killing": _killing(fj),
        "jacobi": _jacobi(geo, fj),
        "lie_connection": _lie_connection(geo, x, dx, ddx),
        "divergence": np.trace(fj.nabla_x, axis1=-2, axis2=-1),
        "geometry": geo,
        "field": fj,
    }


def classify(
    m: ChartManifold,
    f: FieldSpec,
    grid: Grid = Grid(),
    thresholds: Thresholds = Thresholds(),
) -> ClassificationReport:
    """Classify ``f`` as Killing, global Jacobi and/or solenoidal on a sample grid.

    Residuals are sup norms over the grid of the max-abs tensor entry.
    """
    pts = grid_points(m, grid)
    res = residual_fields(m, f, pts)
    kill = float(np.abs(res["killing"]).max(initial=0.0))
    jac = float(np.abs(res["jacobi"]).max(initial=0.0))
    div = res["divergence"]
    sol = float(np.abs(div).max(initial=0.0))
    spread = float(div.max() - div.min())
    return ClassificationReport(
        field=f.name,
        manifold=m.name,
        killing_residual=kill,
        jacobi_residual=jac,
        solenoidal_residual=sol,
        div_constancy_residual=spread,
        divergence_values={"min": float(div.min()), "max": float(div.max()), "mean": float(div.mean())},
        thresholds=asdict(thresholds),
        is_killing=kill <= thresholds.killing,
        is_global_jacobi=jac <= thresholds.jacobi,
        is_solenoidal=sol <= thresholds.solenoidal,
        is_div_constant=spread <= thresholds.div_constancy,
        grid={**grid.describe(), "points": int(len(pts))},
    )


def random_interior_points(m: ChartManifold, count: int, seed: int = 0) -> np.ndarray:
    lo, hi = m.interior_box()
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((count, m.dim))


__all__ += ["residual_fields", "random_interior_points", "second_covariant", "DomainError"]
