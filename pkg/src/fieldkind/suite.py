"""Check batteries run by the command line front end.

Each check returns a plain dict ``{"name", "passed", "details"}`` so that
reports serialize directly to JSON.
"""

from __future__ import annotations

import numpy as np

from .catalog import CatalogEntry
from .dynamics import (
    geodesic_preservation_residual,
    jacobi_ode_residual,
    metric_preservation_residual,
    volume_preservation_residual,
)
from .operators import ClassificationReport, Grid, Thresholds, classify, random_interior_points, residual_fields
from .quadrature import quadrature_rule, verify_divergence_integral, verify_integral_identity, identity_integrands

SYMMETRY_TOL = 1e-9
LIE_TOL = 1e-9
IMPLICATION_HYPOTHESIS = 1e-9
IMPLICATION_CONCLUSION = 1e-8
RAISING_TOL = 1e-10
IDENTITY_REL = 1e-8
DIVERGENCE_REL = 1e-8


def _check(name: str, passed: bool, **details) -> dict:
    return {"name": name, "passed": bool(passed), "details": details}


def classify_all(entry: CatalogEntry, grid: Grid, thresholds: Thresholds) -> dict[str, ClassificationReport]:
    return {name: classify(entry.manifold, f, grid, thresholds) for name, f in entry.fields.items()}


def expected_mismatches(entry: CatalogEntry, reports: dict[str, ClassificationReport]) -> list[dict]:
    bad = []
    for name, exp in entry.expected.items():
        if name not in reports:
            continue
        got = reports[name].booleans()
        for key, want in exp.booleans().items():
            if want is not None and got[key] != want:
                bad.append({"field": name, "property": key, "expected": want, "got": got[key]})
    return bad


def pointwise_checks(entry: CatalogEntry, samples: int = 100, seed: int = 0) -> list[dict]:
    """Jacobi-operator symmetry, intrinsic vs coordinate formula, index raising."""
    m = entry.manifold
    pts = random_interior_points(m, samples, seed)
    sym, lie, rais = {}, {}, {}
    for name, f in entry.fields.items():
        res = residual_fields(m, f, pts)
        J = res["jacobi"]
        sym[name] = float(np.abs(J - np.swapaxes(J, -1, -2)).max())
        lie[name] = float(np.abs(J - res["lie_connection"]).max())
        geo, fj = res["geometry"], res["field"]
        direct = np.einsum("...jl,...lk->...jk", fj.nabla_x, geo.g_inv)
        via_lowered = np.einsum("...ml,...mj,...lk->...jk", fj.cov_diff_down, geo.g_inv, geo.g_inv)
        rais[name] = float(np.abs(direct - via_lowered).max())
    return [
        _check("jacobi_symmetry", max(sym.values(), default=0.0) <= SYMMETRY_TOL, tol=SYMMETRY_TOL, max_asymmetry=sym),
        _check("jacobi_equals_lie_connection", max(lie.values(), default=0.0) <= LIE_TOL, tol=LIE_TOL, max_difference=lie),
        _check("index_raising", max(rais.values(), default=0.0) <= RAISING_TOL, tol=RAISING_TOL, max_difference=rais),
    ]


def implication_checks(entry: CatalogEntry, reports: dict[str, ClassificationReport]) -> list[dict]:
    h, c = IMPLICATION_HYPOTHESIS, IMPLICATION_CONCLUSION
    kill_viol, const_viol, compact_viol = [], [], []
    for name, r in reports.items():
        if r.killing_residual <= h and (r.jacobi_residual > c or r.solenoidal_residual > c):
            kill_viol.append(name)
        if r.jacobi_residual <= h and r.div_constancy_residual > c:
            const_viol.append(name)
        if entry.manifold.compact_chart and r.jacobi_residual <= h and r.killing_residual > c:
            compact_viol.append(name)
    out = [
        _check(
            "killing_implies_jacobi_and_solenoidal",
            not kill_viol,
            violations=kill_viol,
            killing_fields=[n for n, r in reports.items() if r.killing_residual <= h],
        ),
        _check(
            "jacobi_implies_constant_divergence",
            not const_viol,
            violations=const_viol,
            constants={n: r.divergence_values["mean"] for n, r in reports.items() if r.jacobi_residual <= h},
        ),
    ]
    if entry.manifold.compact_chart:
        out.append(_check("compact_jacobi_implies_killing", not compact_viol, violations=compact_viol))
    else:
        out.append(_noncompact_witnesses(entry, reports))
    return out


def _noncompact_witnesses(entry: CatalogEntry, reports: dict[str, ClassificationReport]) -> dict:
    not_sol = [n for n, r in reports.items() if r.is_global_jacobi and not r.is_solenoidal]
    not_kill = [n for n, r in reports.items() if r.is_global_jacobi and r.is_solenoidal and not r.is_killing]
    declared = []
    for name, e in entry.expected.items():
        if e.jacobi and (e.solenoidal is False or (e.solenoidal and e.killing is False)):
            declared.append(name)
    missing = [n for n in declared if n not in not_sol + not_kill]
    return _check(
        "noncompact_counterexamples",
        not missing,
        jacobi_not_solenoidal=not_sol,
        jacobi_solenoidal_not_killing=not_kill,
        declared=declared,
        missing=missing,
    )


def compact_checks(entry: CatalogEntry, nodes: int) -> list[dict]:
    m = entry.manifold
    rule = quadrature_rule(m, nodes)
    volume = float(rule.weights.sum())
    div_int, ident, neg = {}, {}, {}
    div_ok = ident_ok = True
    for name, f in entry.fields.items():
        d = verify_divergence_integral(m, f, rule)
        div_int[name] = d
        div_ok &= abs(d) <= DIVERGENCE_REL * volume
        b = verify_integral_identity(m, f, rule)
        ident[name] = b.to_dict()
        ident_ok &= abs(b.total) <= IDENTITY_REL * (1.0 + b.magnitude())
        neg[name] = float(min(identity_integrands(m, f, rule.points)["killing"].min(), 0.0))
    return [
        _check("divergence_theorem", div_ok, volume=volume, integrals=div_int, rel_tol=DIVERGENCE_REL),
        _check("integral_identity", ident_ok, breakdowns=ident, rel_tol=IDENTITY_REL, nodes=nodes),
        _check("killing_integrand_nonnegative", all(v >= -1e-12 for v in neg.values()), most_negative=neg),
    ]


def theorem_suite(entry: CatalogEntry, grid: Grid, thresholds: Thresholds, nodes: int,
                  reports: dict[str, ClassificationReport] | None = None) -> list[dict]:
    reports = classify_all(entry, grid, thresholds) if reports is None else reports
    checks = pointwise_checks(entry)
    checks += implication_checks(entry, reports)
    if entry.manifold.compact_chart:
        checks += compact_checks(entry, nodes)
    mism = expected_mismatches(entry, reports)
    checks.append(_check("expected_classification", not mism, mismatches=mism))
    return checks


def flow_checks(entry: CatalogEntry, reports: dict[str, ClassificationReport], step: float, tol: float) -> list[dict]:
    """Flow-level residuals at the entry's probes, compared with the classification.

    For each property the largest residual over all probes must be at most
    ``tol`` exactly when the field is classified as having it.
    """
    m = entry.manifold
    out = []
    for name, f in entry.fields.items():
        r = reports[name]
        metric = [metric_preservation_residual(m, f, p.point, p.t, step) for p in entry.flow_probes]
        volume = [volume_preservation_residual(m, f, p.point, p.t, step) for p in entry.flow_probes]
        geod = [geodesic_preservation_residual(m, f, g.state(), g.t_flow, g.s_end, step) for g in entry.geodesic_probes]
        jode = [jacobi_ode_residual(m, f, g.state(), g.s_end, step) for g in entry.geodesic_probes]
        agree = {}
        if metric:
            agree["killing"] = (max(metric) <= tol) == r.is_killing
            agree["solenoidal"] = (max(volume) <= tol) == r.is_solenoidal
        if geod:
            agree["jacobi_geodesics"] = (max(geod) <= tol) == r.is_global_jacobi
            agree["jacobi_ode"] = (max(jode) <= tol) == r.is_global_jacobi
        out.append(
            _check(
                f"flows:{name}",
                all(agree.values()),
                metric_residuals=metric,
                volume_residuals=volume,
                geodesic_residuals=geod,
                jacobi_ode_residuals=jode,
                agreement=agree,
                tol=tol,
            )
        )
    return out
