"""Built-in manifolds and vector fields with their expected classification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import GeodesicState
from .geometry import ChartManifold
from .operators import FieldSpec

__all__ = ["CatalogEntry", "Expected", "UnknownEntry", "builtin", "BUILTIN_NAMES"]

BUILTIN_NAMES = ("euclidean2", "flat_torus2", "sphere2", "hyperbolic2")


class UnknownEntry(KeyError):
    pass


@dataclass(frozen=True)
class Expected:
    killing: bool
    jacobi: bool
    solenoidal: bool
    provenance: str

    def booleans(self) -> dict:
        return {"killing": self.killing, "jacobi": self.jacobi, "solenoidal": self.solenoidal}


@dataclass(frozen=True)
class FlowProbe:
    point: tuple[float, ...]
    t: float


@dataclass(frozen=True)
class GeodesicProbe:
    pos: tuple[float, ...]
    vel: tuple[float, ...]
    t_flow: float
    s_end: float

    def state(self) -> GeodesicState:
        return GeodesicState(np.array(self.pos, dtype=float), np.array(self.vel, dtype=float))


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    manifold: ChartManifold
    fields: dict[str, FieldSpec]
    expected: dict[str, Expected]
    flow_probes: tuple[FlowProbe, ...] = ()
    geodesic_probes: tuple[GeodesicProbe, ...] = ()
    notes: dict = field(default_factory=dict)


def _entry(manifold: ChartManifold, fields: dict[str, tuple[list[str], Expected]], flows, geodesics) -> CatalogEntry:
    specs = {name: FieldSpec.from_strings(name, comps, manifold.coord_names) for name, (comps, _) in fields.items()}
    return CatalogEntry(
        manifold=manifold,
        fields=specs,
        expected={name: exp for name, (_, exp) in fields.items()},
        flow_probes=tuple(FlowProbe(tuple(p), t) for p, t in flows),
        geodesic_probes=tuple(GeodesicProbe(tuple(p), tuple(v), tf, s) for p, v, tf, s in geodesics),
    )


def _euclidean2() -> CatalogEntry:
    m = ChartManifold.from_strings(
        "euclidean2", ["x", "y"], [["1", "0"], ["0", "1"]], [(-5.0, 5.0), (-5.0, 5.0)]
    )
    return _entry(
        m,
        {
            "dilation": (["x", "y"], Expected(False, True, False, "worked example: radial dilation of the plane")),
            "saddle": (["x", "-y"], Expected(False, True, True, "worked example: jacobi and solenoidal but not killing")),
            "rotation": (["-y", "x"], Expected(True, True, True, "derived: rotation is an isometry")),
            "translation": (["1", "0"], Expected(True, True, True, "derived: translation is an isometry")),
            "quadratic": (["x^2", "0"], Expected(False, False, False, "derived: J^x_xx = 2, div = 2x")),
        },
        flows=[((0.5, 0.5), 0.3), ((-0.7, 0.3), 0.3)],
        geodesics=[((0.5, -0.5), (0.3, 0.4), 0.3, 1.0), ((1.0, 0.0), (0.0, 1.0), math.log(2.0), 1.0)],
    )


def _flat_torus2() -> CatalogEntry:
    two_pi = 2.0 * math.pi
    m = ChartManifold.from_strings(
        "flat_torus2",
        ["x", "y"],
        [["1", "0"], ["0", "1"]],
        [(0.0, two_pi), (0.0, two_pi)],
        periodic=[True, True],
        compact_chart=True,
    )
    return _entry(
        m,
        {
            "dx": (["1", "0"], Expected(True, True, True, "derived: translation")),
            "sinx": (["sin(x)", "0"], Expected(False, False, False, "derived: K = diag(2cos x, 0), div = cos x")),
            "sinx_cosy": (["sin(x)", "cos(y)"], Expected(False, False, False, "derived: div = cos x - sin y")),
        },
        flows=[((1.0, 0.5), 0.5), ((4.0, 2.5), 0.5)],
        geodesics=[((1.0, 2.0), (0.6, 0.8), 0.5, 1.0)],
    )


def _sphere2() -> CatalogEntry:
    m = ChartManifold.from_strings(
        "sphere2",
        ["theta", "phi"],
        [["1", "0"], ["0", "sin(theta)^2"]],
        [(0.0, math.pi), (0.0, 2.0 * math.pi)],
        periodic=[False, True],
        boundary_margin=[0.05, 0.0],
        compact_chart=True,
        # excluded polar caps have area 4*pi*(1 - cos 2e-4) ~ 2.5e-7
        quadrature_margin=[2e-4, 0.0],
    )
    return _entry(
        m,
        {
            "dphi": (["0", "1"], Expected(True, True, True, "derived: rotation about the polar axis")),
            "tilted": (
                ["cos(phi)", "-cos(theta)/sin(theta)*sin(phi)"],
                Expected(True, True, True, "derived: rotation about a horizontal axis"),
            ),
        },
        flows=[((math.pi / 3, 0.2), 0.7), ((1.2, 2.0), 0.7), ((2.0, 4.0), 0.5)],
        geodesics=[((1.0, 0.3), (0.5, 0.7), 0.7, 1.0)],
    )


def _hyperbolic2() -> CatalogEntry:
    m = ChartManifold.from_strings(
        "hyperbolic2", ["x", "y"], [["1/(y*y)", "0"], ["0", "1/(y*y)"]], [(-5.0, 5.0), (0.1, 10.0)]
    )
    return _entry(
        m,
        {
            "dx": (["1", "0"], Expected(True, True, True, "derived: horizontal translation is an isometry")),
            "dilation": (["x", "y"], Expected(True, True, True, "derived: dilation is an isometry of the upper half plane")),
        },
        flows=[((0.5, 1.0), 0.3), ((-1.0, 2.0), 0.3)],
        geodesics=[((0.0, 1.0), (0.5, 0.3), 0.3, 1.0)],
    )


_BUILDERS = {
    "euclidean2": _euclidean2,
    "flat_torus2": _flat_torus2,
    "sphere2": _sphere2,
    "hyperbolic2": _hyperbolic2,
}
_CACHE: dict[str, CatalogEntry] = {}


def builtin(name: str) -> CatalogEntry:
    if name not in _BUILDERS:
        raise UnknownEntry(f"unknown catalog entry {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    if name not in _CACHE:
        _CACHE[name] = _BUILDERS[name]()
    return _CACHE[name]


def all_entries() -> list[CatalogEntry]:
    return [builtin(n) for n in BUILTIN_NAMES]
