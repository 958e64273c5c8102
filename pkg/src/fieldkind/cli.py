"""Command line front end.

Exit status: 0 all expectations hold, 1 an expectation failed, 2 manifest
or usage error, 3 numerical domain error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .catalog import BUILTIN_NAMES, CatalogEntry, UnknownEntry
from .dynamics import GeodesicState, LeftChart, StepInvalid, dump_trajectory, integrate_flow, integrate_geodesic
from .expr import DomainError
from .manifest import Manifest, ManifestError, builtin_manifest, load_manifest
from .operators import Grid, Thresholds
from .quadrature import NotCompact, verify_integral_identity, quadrature_rule
from .suite import IDENTITY_REL, classify_all, expected_mismatches, flow_checks, theorem_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _add_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", metavar="NAME", choices=BUILTIN_NAMES)
    src.add_argument("--manifest", metavar="PATH")
    p.add_argument("--field", action="append", metavar="NAME", help="restrict to this field (repeatable)")
    p.add_argument("--out", metavar="PATH", help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldkind",
        description="Classify vector fields on chart-defined Riemannian manifolds as Killing, global Jacobi and/or solenoidal.",
    )
    parser.add_argument("--version", action="version", version=f"fieldkind {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="three-way classification of each field")
    _add_source(p)
    p.add_argument("--grid", type=int, metavar="N")
    p.add_argument("--tol", type=float, metavar="T")

    p = sub.add_parser("verify-identity", help="integral identity breakdown (compact charts only)")
    _add_source(p)
    p.add_argument("--nodes", type=int, metavar="N")

    p = sub.add_parser("check-flows", help="metric, volume and geodesic preservation along flows")
    _add_source(p)
    p.add_argument("--grid", type=int, metavar="N")
    p.add_argument("--tol", type=float, metavar="T")
    p.add_argument("--step", type=float, metavar="H")

    p = sub.add_parser("check-theorems", help="full theorem suite")
    _add_source(p)
    p.add_argument("--grid", type=int, metavar="N")
    p.add_argument("--tol", type=float, metavar="T")
    p.add_argument("--nodes", type=int, metavar="N")

    p = sub.add_parser("dump-trajectory", help="write a geodesic or flow trajectory as JSON lines")
    _add_source(p)
    p.add_argument("--pos", type=float, nargs="+", required=True)
    p.add_argument("--vel", type=float, nargs="+", help="initial velocity; integrates a geodesic")
    p.add_argument("--t", type=float, required=True, dest="t_end")
    p.add_argument("--step", type=float, metavar="H")

    p = sub.add_parser("export-manifest", help="print a built-in catalog entry as a manifest")
    p.add_argument("--builtin", metavar="NAME", choices=BUILTIN_NAMES, required=True)
    p.add_argument("--out", metavar="PATH")
    return parser


def _load(args) -> Manifest:
    man = builtin_manifest(args.builtin) if args.builtin else load_manifest(args.manifest)
    if args.field:
        missing = [f for f in args.field if f not in man.entry.fields]
        if missing:
            raise UsageError(f"unknown field(s) {missing}; available: {list(man.entry.fields)}")
        e = man.entry
        keep = {n: e.fields[n] for n in args.field}
        man.entry = CatalogEntry(
            manifold=e.manifold,
            fields=keep,
            expected={n: v for n, v in e.expected.items() if n in keep},
            flow_probes=e.flow_probes,
            geodesic_probes=e.geodesic_probes,
        )
    run = man.run
    for attr in ("grid", "tol", "nodes", "step"):
        val = getattr(args, attr, None)
        if val is not None:
            if val <= 0:
                raise UsageError(f"--{attr} must be positive")
            setattr(run, attr, val)
    return man


class _Timer:
    def __init__(self):
        self.timing: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timing[name] = time.perf_counter() - t0


def _report(command: str, man: Manifest) -> dict:
    return {
        "tool": "fieldkind",
        "version": __version__,
        "command": command,
        "source": man.source,
        "manifest_hash": man.digest,
        "manifold": man.entry.manifold.name,
        "fields": list(man.entry.fields),
    }


def _grid(man: Manifest) -> Grid:
    return Grid(per_dim=man.run.grid, random_points=man.run.random_points)


def _classification_check(man: Manifest, reports) -> dict:
    mism = expected_mismatches(man.entry, reports)
    return {"name": "expected_classification", "passed": not mism, "details": {"mismatches": mism}}


def cmd_classify(man: Manifest, timer: _Timer) -> dict:
    rep = _report("classify", man)
    with timer("classify"):
        reports = classify_all(man.entry, _grid(man), Thresholds.uniform(man.run.tol))
    rep["classification"] = {n: r.to_dict() for n, r in reports.items()}
    rep["checks"] = [_classification_check(man, reports)]
    return rep


def cmd_verify_identity(man: Manifest, timer: _Timer) -> dict:
    rep = _report("verify-identity", man)
    m = man.entry.manifold
    if not m.compact_chart:
        raise NotCompact(f"chart {m.name!r} is not flagged compact; verify-identity needs a compact chart")
    checks = []
    with timer("identity"):
        rule = quadrature_rule(m, man.run.nodes)
        for name, f in man.entry.fields.items():
            b = verify_integral_identity(m, f, rule)
            ok = abs(b.total) <= IDENTITY_REL * (1.0 + b.magnitude())
            checks.append({"name": f"identity:{name}", "passed": ok, "details": {**b.to_dict(), "rel_tol": IDENTITY_REL}})
    rep["nodes"] = man.run.nodes
    rep["checks"] = checks
    return rep


def cmd_check_flows(man: Manifest, timer: _Timer) -> dict:
    rep = _report("check-flows", man)
    with timer("classify"):
        reports = classify_all(man.entry, _grid(man), Thresholds.uniform(man.run.tol))
    with timer("flows"):
        checks = flow_checks(man.entry, reports, man.run.step, man.run.flow_tol)
    rep["classification"] = {n: r.booleans() for n, r in reports.items()}
    rep["checks"] = checks
    return rep


def cmd_check_theorems(man: Manifest, timer: _Timer) -> dict:
    rep = _report("check-theorems", man)
    with timer("classify"):
        reports = classify_all(man.entry, _grid(man), Thresholds.uniform(man.run.tol))
    checks = []
    if "theorems" in man.run.checks:
        with timer("theorems"):
            checks += theorem_suite(man.entry, _grid(man), Thresholds.uniform(man.run.tol), man.run.nodes, reports)
    else:
        checks.append(_classification_check(man, reports))
    if "flows" in man.run.checks:
        with timer("flows"):
            checks += flow_checks(man.entry, reports, man.run.step, man.run.flow_tol)
    rep["classification"] = {n: r.to_dict() for n, r in reports.items()}
    rep["checks"] = checks
    return rep


COMMANDS = {
    "classify": cmd_classify,
    "verify-identity": cmd_verify_identity,
    "check-flows": cmd_check_flows,
    "check-theorems": cmd_check_theorems,
}


def _summary(rep: dict) -> str:
    lines = [f"{rep['command']} on {rep['manifold']} ({rep['source']})"]
    for name, c in rep.get("classification", {}).items():
        b = c if "killing" in c else {"killing": c["is_killing"], "jacobi": c["is_global_jacobi"], "solenoidal": c["is_solenoidal"]}
        flags = ", ".join(f"{k}={'yes' if v else 'no'}" for k, v in b.items())
        lines.append(f"  {name}: {flags}")
    for chk in rep.get("checks", []):
        lines.append(f"  [{'PASS' if chk['passed'] else 'FAIL'}] {chk['name']}")
        if chk["name"].startswith("identity:"):
            d = chk["details"]
            lines.append(
                f"      jacobi={d['term_jacobi']:.12g} killing={d['term_killing']:.12g} "
                f"div={d['term_div']:.12g} total={d['total']:.3g}"
            )
    lines.append("OK" if rep["passed"] else "FAILED")
    return "\n".join(lines)


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(args, man: Manifest) -> int:
    m = man.entry.manifold
    pos = np.array(args.pos, dtype=float)
    if len(pos) != m.dim:
        raise UsageError(f"--pos needs {m.dim} values")
    step = man.run.step
    if args.vel is not None:
        if args.field:
            raise UsageError("give either --vel (geodesic) or --field (flow), not both")
        vel = np.array(args.vel, dtype=float)
        if len(vel) != m.dim:
            raise UsageError(f"--vel needs {m.dim} values")
        samples = integrate_geodesic(m, GeodesicState(pos, vel), args.t_end, step)
    else:
        if not args.field or len(args.field) != 1:
            raise UsageError("a flow trajectory needs exactly one --field")
        samples = integrate_flow(m, man.entry.fields[args.field[0]], pos, args.t_end, step)
    if args.out:
        with open(args.out, "w") as fh:
            n = dump_trajectory(samples, fh)
        print(f"wrote {n} samples to {args.out}")
    else:
        dump_trajectory(samples, sys.stdout)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-manifest":
            _write_json(builtin_manifest(args.builtin).document, args.out)
            return EXIT_OK
        man = _load(args)
        if args.command == "dump-trajectory":
            return _dump(args, man)
        timer = _Timer()
        rep = COMMANDS[args.command](man, timer)
        rep["passed"] = all(c["passed"] for c in rep["checks"])
        rep["timing"] = timer.timing
        print(_summary(rep))
        if args.out:
            _write_json(rep, args.out)
        if not rep["passed"]:
            failed = [c["name"] for c in rep["checks"] if not c["passed"]]
            print(f"failing checks: {', '.join(failed)}", file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK
    except (ManifestError, UnknownEntry, NotCompact, UsageError, StepInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        kind = "trajectory left chart" if isinstance(exc, LeftChart) else "domain error"
        print(f"numerical {kind}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
