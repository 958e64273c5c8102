"""Manifest loading, validation and export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema

from .catalog import CatalogEntry, Expected, FlowProbe, GeodesicProbe, builtin
from .expr import DomainError, ExprSyntaxError, UnknownIdentifier, parse
from .geometry import ChartManifold
from .operators import FieldSpec

__all__ = ["ManifestError", "RunConfig", "Manifest", "load_manifest", "manifest_from_entry", "manifest_hash", "SCHEMA"]

SCHEMA = json.loads(resources.files("fieldkind").joinpath("schemas/manifest.schema.json").read_text())

CHECK_NAMES = ("theorems", "flows")


class ManifestError(ValueError):
    pass


@dataclass
class RunConfig:
    grid: int = 33
    random_points: int = 200
    nodes: int = 64
    step: float = 1e-3
    tol: float = 1e-8
    flow_tol: float = 1e-6
    checks: tuple[str, ...] = ("theorems",)


@dataclass
class Manifest:
    entry: CatalogEntry
    run: RunConfig
    document: dict
    has_expected: bool = False
    source: str = "manifest"

    @property
    def digest(self) -> str:
        return manifest_hash(self.document)


def manifest_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _expression_error(where: str, exc: Exception) -> ManifestError:
    return ManifestError(f"{where}: {exc}")


def parse_manifest(doc: Any, source: str = "manifest") -> Manifest:
    """Validate ``doc`` against the schema and build the catalog entry it describes."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ManifestError(f"schema violation at {path}: {exc.message}") from None

    mb = doc["manifold"]
    n = mb["dim"]
    coords = mb["coords"]
    if len(coords) != n:
        raise ManifestError(f"manifold.dim is {n} but {len(coords)} coordinates are declared")
    for key in ("metric", "domain", "periodic", "margins", "quadrature_margins"):
        if key in mb and len(mb[key]) != n:
            raise ManifestError(f"manifold.{key} must have {n} entries")
    if any(len(row) != n for row in mb["metric"]):
        raise ManifestError(f"manifold.metric must be {n}x{n}")

    for i, row in enumerate(mb["metric"]):
        for j, src in enumerate(row):
            _check_expr(src, coords, f"manifold.metric[{i}][{j}]")
    for name, comps in doc["fields"].items():
        if len(comps) != n:
            raise ManifestError(f"fields.{name} has {len(comps)} components, expected {n}")
        for i, src in enumerate(comps):
            _check_expr(src, coords, f"fields.{name}[{i}]")
    for name in doc.get("expected", {}):
        if name not in doc["fields"]:
            raise ManifestError(f"expected.{name} refers to an undeclared field")

    try:
        m = ChartManifold.from_strings(
            mb["name"],
            coords,
            mb["metric"],
            mb["domain"],
            periodic=mb.get("periodic"),
            boundary_margin=mb.get("margins"),
            compact_chart=mb.get("compact", False),
            quadrature_margin=mb.get("quadrature_margins"),
        )
    except DomainError:
        raise
    except ValueError as exc:
        raise ManifestError(f"manifold: {exc}") from None

    fields = {name: FieldSpec.from_strings(name, comps, coords) for name, comps in doc["fields"].items()}
    expected = {}
    for name, e in doc.get("expected", {}).items():
        expected[name] = Expected(
            e.get("killing"), e.get("jacobi"), e.get("solenoidal"), e.get("provenance", "manifest")
        )
    rb = doc.get("run", {})
    for key in ("flows", "geodesics"):
        for k, item in enumerate(rb.get(key, [])):
            for vec in ("point", "pos", "vel"):
                if vec in item and len(item[vec]) != n:
                    raise ManifestError(f"run.{key}[{k}].{vec} must have {n} entries")
    unknown = [c for c in rb.get("checks", []) if c not in CHECK_NAMES]
    if unknown:
        raise ManifestError(f"run.checks: unknown check(s) {unknown}; known: {list(CHECK_NAMES)}")
    run = RunConfig(
        grid=rb.get("grid", 33),
        random_points=rb.get("random_points", 200),
        nodes=rb.get("nodes", 64),
        step=rb.get("step", 1e-3),
        tol=rb.get("tol", 1e-8),
        flow_tol=rb.get("flow_tol", 1e-6),
        checks=tuple(rb.get("checks", ["theorems"])),
    )
    entry = CatalogEntry(
        manifold=m,
        fields=fields,
        expected=expected,
        flow_probes=tuple(FlowProbe(tuple(f["point"]), f["t"]) for f in rb.get("flows", [])),
        geodesic_probes=tuple(
            GeodesicProbe(tuple(g["pos"]), tuple(g["vel"]), g["t_flow"], g["s_end"]) for g in rb.get("geodesics", [])
        ),
    )
    return Manifest(entry, run, doc, has_expected=bool(expected), source=source)


def _check_expr(src: str, coords, where: str) -> None:
    try:
        parse(src, coords)
    except (ExprSyntaxError, UnknownIdentifier) as exc:
        raise _expression_error(f"{where} {src!r}", exc) from None


def load_manifest(path: str) -> Manifest:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path!r} is not valid JSON: {exc}") from None
    return parse_manifest(doc, source=path)


def manifest_from_entry(entry: CatalogEntry) -> dict:
    """Export a catalog entry as a manifest document."""
    m = entry.manifold
    doc: dict = {
        "manifold": {
            "name": m.name,
            "dim": m.dim,
            "coords": list(m.coord_names),
            "metric": m.metric_strings(),
            "domain": [list(d) for d in m.domain],
            "periodic": list(m.periodic),
            "compact": m.compact_chart,
            "margins": list(m.boundary_margin),
            "quadrature_margins": list(m.quadrature_margin),
        },
        "fields": {name: f.strings() for name, f in entry.fields.items()},
    }
    if entry.expected:
        doc["expected"] = {
            name: {"killing": e.killing, "jacobi": e.jacobi, "solenoidal": e.solenoidal, "provenance": e.provenance}
            for name, e in entry.expected.items()
        }
    doc["run"] = {
        "flows": [{"point": list(p.point), "t": p.t} for p in entry.flow_probes],
        "geodesics": [
            {"pos": list(g.pos), "vel": list(g.vel), "t_flow": g.t_flow, "s_end": g.s_end} for g in entry.geodesic_probes
        ],
    }
    return doc


def builtin_manifest(name: str) -> Manifest:
    entry = builtin(name)
    doc = manifest_from_entry(entry)
    return Manifest(entry, RunConfig(), doc, has_expected=True, source=f"builtin:{name}")
