"""Tensor-product quadrature on compact charts and the global identities
checked with it: the divergence theorem and the integral identity relating
the Jacobi operator, the Killing tensor and the divergence.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import ChartManifold, geometry_jet
from .operators import FieldSpec, residual_fields

__all__ = [
    "NotCompact",
    "QuadratureRule",
    "IdentityBreakdown",
    "quadrature_rule",
    "integrate",
    "verify_divergence_integral",
    "verify_integral_identity",
    "identity_integrands",
]


class NotCompact(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes_per_dim: tuple[int, ...]
    schemes: tuple[str, ...]
    points: np.ndarray
    weights: np.ndarray  # includes sqrt(det g)


def _require_compact(m: ChartManifold) -> None:
    if not m.compact_chart:
        raise NotCompact(f"chart {m.name!r} is not flagged compact")


def quadrature_rule(m: ChartManifold, nodes: int | Sequence[int] = 64) -> QuadratureRule:
    """Periodic axes: equispaced trapezoid. Other axes: Gauss-Legendre on the
    interval inset by ``quadrature_margin``. Weights carry ``sqrt(det g)``."""
    _require_compact(m)
    counts = (nodes,) * m.dim if isinstance(nodes, int) else tuple(nodes)
    if len(counts) != m.dim or any(c < 1 for c in counts):
        raise ValueError(f"need one positive node count per dimension, got {counts}")
    axes, ws, schemes = [], [], []
    for k, ((lo, hi), per, c) in enumerate(zip(m.domain, m.periodic, counts)):
        if per:
            axes.append(lo + (hi - lo) * np.arange(c) / c)
            ws.append(np.full(c, (hi - lo) / c))
            schemes.append("periodic-equispaced")
        else:
            a, b = lo + m.quadrature_margin[k], hi - m.quadrature_margin[k]
            x, w = np.polynomial.legendre.leggauss(c)
            axes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * w)
            schemes.append("gauss-legendre")
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    w = np.ones(1)
    for wk in ws:
        w = np.multiply.outer(w, wk)
    w = w.reshape(-1)
    w = w * geometry_jet(m, pts).sqrt_det_g
    return QuadratureRule(counts, tuple(schemes), pts, w)


def _sum(values: np.ndarray, weights: np.ndarray) -> float:
    # compensated summation keeps the result independent of node order
    return math.fsum((values * weights).tolist())


def integrate(m: ChartManifold, density: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule | None = None) -> float:
    """Integrate ``density`` (vectorised over an ``(N, n)`` point array) against dvol."""
    _require_compact(m)
    rule = quadrature_rule(m) if rule is None else rule
    return _sum(np.asarray(density(rule.points), dtype=float) * np.ones(len(rule.points)), rule.weights)


def verify_divergence_integral(m: ChartManifold, f: FieldSpec, rule: QuadratureRule | None = None) -> float:
    _require_compact(m)
    rule = quadrature_rule(m) if rule is None else rule
    return _sum(residual_fields(m, f, rule.points)["divergence"], rule.weights)


@dataclass(frozen=True)
class IdentityBreakdown:
    term_jacobi: float
    term_killing: float
    term_div: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)

    def magnitude(self) -> float:
        return abs(self.term_jacobi) + abs(self.term_killing) + abs(self.term_div)


def identity_integrands(m: ChartManifold, f: FieldSpec, pts: np.ndarray) -> dict[str, np.ndarray]:
    """Pointwise integrands of the three terms.

    ``jacobi = X_i g^jk J^i_jk``; ``killing = 1/2 (X^{j,k}+X^{k,j})(X_{j,k}+X_{k,j})``
    with both indices raised from the covariant differential;
    ``div = (div X)^2``.
    """
    res = residual_fields(m, f, pts)
    geo, fj = res["geometry"], res["field"]
    t_jac = np.einsum("...i,...jk,...ijk->...", fj.x_down, geo.g_inv, res["jacobi"])
    # X^{j,k} = (nabla X)^j_l g^{lk}
    up = np.einsum("...jl,...lk->...jk", fj.nabla_x, geo.g_inv)
    t_kill = 0.5 * np.einsum("...jk,...jk->...", up + np.swapaxes(up, -1, -2), res["killing"])
    return {"jacobi": t_jac, "killing": t_kill, "div": res["divergence"] ** 2}


def verify_integral_identity(m: ChartManifold, f: FieldSpec, rule: QuadratureRule | None = None) -> IdentityBreakdown:
    _require_compact(m)
    rule = quadrature_rule(m) if rule is None else rule
    terms = identity_integrands(m, f, rule.points)
    tj = _sum(terms["jacobi"], rule.weights)
    tk = _sum(terms["killing"], rule.weights)
    td = _sum(terms["div"], rule.weights)
    total = math.fsum(((terms["jacobi"] + terms["killing"] - terms["div"]) * rule.weights).tolist())
    return IdentityBreakdown(tj, tk, td, total)
