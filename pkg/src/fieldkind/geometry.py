"""Pointwise Riemannian geometry of a single coordinate chart.

Index conventions (all arrays may carry leading batch axes):

* ``dg[..., i, j, k] = d_k g_ij`` and ``ddg[..., i, j, k, l] = d_k d_l g_ij``
* ``gamma[..., i, j, k] = Gamma^i_jk``
* ``dgamma[..., i, j, k, l] = d_l Gamma^i_jk``
* ``riemann[..., i, j, k, l] = R^i_jkl`` with ``R(d_k, d_l) d_j = R^i_jkl d_i``
  and ``R(U, V)W = nabla_U nabla_V W - nabla_V nabla_U W - nabla_[U,V] W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import DomainError, Expression, eval_jet, parse, to_source

__all__ = [
    "ChartManifold",
    "GeometryJet",
    "NotPositiveDefinite",
    "geometry_jet",
    "christoffel",
    "lower_index",
    "raise_index",
]


class NotPositiveDefinite(DomainError):
    pass


@dataclass(frozen=True, eq=False)
class ChartManifold:
    """A Riemannian manifold described by one coordinate chart.

    ``boundary_margin`` insets sampling grids and geodesic/flow trajectories
    away from the chart edges. ``quadrature_margin`` does the same for
    quadrature nodes on non-periodic coordinates of a compact chart; it is
    kept separate so that excluded polar caps can be made negligibly small.
    Pointwise evaluation only requires the point to lie in the open domain
    box (non-periodic coordinates).
    """

    name: str
    coord_names: tuple[str, ...]
    metric: tuple[tuple[Expression, ...], ...]
    domain: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]
    boundary_margin: tuple[float, ...]
    compact_chart: bool = False
    quadrature_margin: tuple[float, ...] = ()
    metric_source: tuple[tuple[str, ...], ...] = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return len(self.coord_names)

    @classmethod
    def from_strings(
        cls,
        name: str,
        coords: Sequence[str],
        metric: Sequence[Sequence[str]],
        domain: Sequence[Sequence[float]],
        periodic: Sequence[bool] | None = None,
        boundary_margin: Sequence[float] | None = None,
        compact_chart: bool = False,
        quadrature_margin: Sequence[float] | None = None,
    ) -> "ChartManifold":
        n = len(coords)
        if n < 1 or len(set(coords)) != n:
            raise ValueError("coordinate names must be distinct and non-empty")
        if len(metric) != n or any(len(row) != n for row in metric):
            raise ValueError(f"metric must be a {n}x{n} matrix of expressions")
        if len(domain) != n:
            raise ValueError(f"domain must give one (lo, hi) pair per coordinate")
        dom = tuple((float(lo), float(hi)) for lo, hi in domain)
        for lo, hi in dom:
            if not lo < hi:
                raise ValueError(f"empty domain interval ({lo}, {hi})")
        per = tuple(bool(b) for b in (periodic if periodic is not None else [False] * n))
        if boundary_margin is None:
            boundary_margin = [0.0 if p else 1e-2 * (hi - lo) for p, (lo, hi) in zip(per, dom)]
        if quadrature_margin is None:
            quadrature_margin = boundary_margin
        parsed = tuple(tuple(parse(src, coords) for src in row) for row in metric)
        m = cls(
            name=name,
            coord_names=tuple(coords),
            metric=parsed,
            domain=dom,
            periodic=per,
            boundary_margin=tuple(float(x) for x in boundary_margin),
            compact_chart=bool(compact_chart),
            quadrature_margin=tuple(float(x) for x in quadrature_margin),
            metric_source=tuple(tuple(row) for row in metric),
        )
        m.validate()
        return m

    def metric_strings(self) -> list[list[str]]:
        if self.metric_source:
            return [list(row) for row in self.metric_source]
        return [[to_source(e) for e in row] for row in self.metric]

    def interior_box(self, margin: Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray]:
        margin = self.boundary_margin if margin is None else margin
        lo = np.array([a + (0.0 if p else m) for (a, _), p, m in zip(self.domain, self.periodic, margin)])
        hi = np.array([b - (0.0 if p else m) for (_, b), p, m in zip(self.domain, self.periodic, margin)])
        return lo, hi

    def periods(self) -> np.ndarray:
        return np.array([hi - lo if p else 0.0 for (lo, hi), p in zip(self.domain, self.periodic)])

    def wrap(self, p: np.ndarray) -> np.ndarray:
        """Map periodic coordinates back into ``[lo, hi)``."""
        p = np.array(p, dtype=float, copy=True)
        for k, ((lo, hi), per) in enumerate(zip(self.domain, self.periodic)):
            if per:
                p[..., k] = lo + np.mod(p[..., k] - lo, hi - lo)
        return p

    def outside(self, pts: np.ndarray, margin: Sequence[float] | None = None, strict_open: bool = False) -> np.ndarray:
        """Boolean mask of points outside the (margin-inset) box.

        Periodic coordinates never count as outside.
        """
        pts = np.atleast_2d(pts)
        bad = ~np.all(np.isfinite(pts), axis=-1)
        for k, ((lo, hi), per) in enumerate(zip(self.domain, self.periodic)):
            if per:
                continue
            if strict_open:
                bad |= (pts[..., k] <= lo) | (pts[..., k] >= hi)
            else:
                m = (self.boundary_margin if margin is None else margin)[k]
                bad |= (pts[..., k] < lo + m) | (pts[..., k] > hi - m)
        return bad

    def validate(self, samples: int = 9) -> None:
        """Check symmetry and positive-definiteness of the metric on a small lattice."""
        lo, hi = self.interior_box()
        axes = [np.linspace(a, b, samples) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        g = np.empty((len(pts), self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                g[:, i, j] = eval_jet(self.metric[i][j], pts, order=1).value
        asym = np.abs(g - np.swapaxes(g, -1, -2)).max(axis=(-1, -2))
        if np.any(asym > 1e-12 * (1.0 + np.abs(g).max())):
            raise ValueError(f"metric of {self.name!r} is not symmetric at {pts[int(np.argmax(asym))].tolist()}")
        _cholesky_check(g, pts)


@dataclass(frozen=True, eq=False)
class GeometryJet:
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    riemann: np.ndarray
    sqrt_det_g: np.ndarray

    def riemann_lowered(self) -> np.ndarray:
        """``R_ijkl = g_im R^m_jkl``."""
        return np.einsum("...im,...mjkl->...ijkl", self.g, self.riemann)

    def curvature_operator(self, u, v, w) -> np.ndarray:
        """Components of ``R(u, v)w``."""
        return np.einsum("...ijkl,...j,...k,...l->...i", self.riemann, w, u, v)


def _cholesky_check(g: np.ndarray, pts: np.ndarray) -> None:
    try:
        np.linalg.cholesky(g)
        return
    except np.linalg.LinAlgError:
        pass
    for idx in range(len(g)):
        try:
            np.linalg.cholesky(g[idx])
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("metric is not positive definite", pts[idx]) from None


def _check_points(m: ChartManifold, p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    batched = arr.ndim == 2
    pts = np.atleast_2d(arr)
    if pts.ndim != 2 or pts.shape[1] != m.dim:
        raise ValueError(f"points must have shape ({m.dim},) or (N, {m.dim}), got {arr.shape}")
    bad = m.outside(pts, strict_open=True)
    if np.any(bad):
        raise DomainError(f"point outside the domain of chart {m.name!r}", pts[int(np.flatnonzero(bad)[0])])
    return pts, batched


def _metric_jets(m: ChartManifold, pts: np.ndarray, order: int):
    N, n = pts.shape
    g = np.empty((N, n, n))
    dg = np.empty((N, n, n, n))
    ddg = np.empty((N, n, n, n, n)) if order >= 2 else None
    for i in range(n):
        for j in range(i, n):
            jet = eval_jet(m.metric[i][j], pts, order=order)
            g[:, i, j] = g[:, j, i] = jet.value
            dg[:, i, j] = dg[:, j, i] = jet.grad
            if ddg is not None:
                ddg[:, i, j] = ddg[:, j, i] = jet.hess
    return g, dg, ddg


def _first_kind(dg: np.ndarray) -> np.ndarray:
    # Gamma_ljk = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    t = np.swapaxes(dg, -1, -2)
    return 0.5 * (t + dg - np.moveaxis(dg, -1, -3))


def christoffel(m: ChartManifold, p) -> np.ndarray:
    """Christoffel symbols of the second kind only (first derivatives of g)."""
    pts, batched = _check_points(m, p)
    g, dg, _ = _metric_jets(m, pts, order=1)
    _cholesky_check(g, pts)
    gamma = np.einsum("...il,...ljk->...ijk", np.linalg.inv(g), _first_kind(dg))
    return gamma if batched else gamma[0]


def geometry_jet(m: ChartManifold, p) -> GeometryJet:
    """Metric, inverse, Christoffel symbols, their partials and the Riemann tensor at ``p``."""
    pts, batched = _check_points(m, p)
    g, dg, ddg = _metric_jets(m, pts, order=2)
    _cholesky_check(g, pts)
    g_inv = np.linalg.inv(g)
    low = _first_kind(dg)
    gamma = np.einsum("...il,...ljk->...ijk", g_inv, low)
    # d_m Gamma_ljk from the second derivatives of g
    dlow = 0.5 * (
        np.einsum("...lkjm->...ljkm", ddg) + np.einsum("...ljkm->...ljkm", ddg) - np.einsum("...jklm->...ljkm", ddg)
    )
    # d_m g^il = -g^ia d_m g_ab g^bl
    dginv = -np.einsum("...ia,...abm,...bl->...ilm", g_inv, dg, g_inv)
    dgamma = np.einsum("...ilm,...ljk->...ijkm", dginv, low) + np.einsum("...il,...ljkm->...ijkm", g_inv, dlow)
    # R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj + Gamma^i_km Gamma^m_lj - Gamma^i_lm Gamma^m_kj
    d_term = np.einsum("...iljk->...ijkl", dgamma)
    quad = np.einsum("...ikm,...mlj->...ijkl", gamma, gamma)
    riemann = d_term - np.swapaxes(d_term, -1, -2) + quad - np.swapaxes(quad, -1, -2)
    sqrt_det = np.sqrt(np.linalg.det(g))
    jet = GeometryJet(g, g_inv, dg, ddg, gamma, dgamma, riemann, sqrt_det)
    if batched:
        return jet
    return GeometryJet(*(getattr(jet, f)[0] for f in GeometryJet.__dataclass_fields__))


def lower_index(jet: GeometryJet, v) -> np.ndarray:
    return np.einsum("...ij,...j->...i", jet.g, np.asarray(v, dtype=float))


def raise_index(jet: GeometryJet, w) -> np.ndarray:
    return np.einsum("...ij,...j->...i", jet.g_inv, np.asarray(w, dtype=float))
