"""Batch driver: run family/equation check matrices and identity fuzzers,
emit deterministic machine-readable reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._version import __version__
from .errors import EmptyLevelSetError, EvalDomainError, NoRootError, SingularPointError
from .families import (
    ExplicitField,
    equipotential_check,
    expected_checks,
    to_constraint,
)
from .implicit import FieldJet, GridPointResult, _axis_values, sample_grid
from .quadratic import det_identity_check
from .residuals import (
    PointRecord,
    ResidualReport,
    bateman_terms,
    complex_bateman_terms,
    example2_terms,
    first_order_system_explicit,
    first_order_system_terms,
    normalized,
    sum_bateman_terms,
    ufe_terms,
)
from .scenario import ScenarioConfig

__all__ = ["Report", "run_checks", "fuzz_identity", "random_jet", "EQUATION_NAMES"]

EQUATION_NAMES = (
    "bateman",
    "ufe",
    "sum_bateman",
    "complex_bateman",
    "example2",
    "first_order_system",
    "equipotential",
)

_JET_EQUATIONS = {
    "bateman": bateman_terms,
    "ufe": ufe_terms,
    "sum_bateman": sum_bateman_terms,
    "complex_bateman": complex_bateman_terms,
    "example2": example2_terms,
}

_DEFAULT_EQ_TOL = {
    "bateman": 1e-7,
    "ufe": 1e-7,
    "sum_bateman": 1e-6,
    "complex_bateman": 1e-10,
    "example2": 1e-7,
    "first_order_system": 1e-10,
    "equipotential": 1e-8,
}

COVERAGE_LIMIT = 0.10  # more than this fraction of failed points fails the scenario


@dataclass(frozen=True)
class Report:
    """A deterministic report document: same (scenario, seed, version) in,
    identical bytes out."""

    document: dict
    overall_pass: bool
    point_rows: tuple[tuple, ...] = ()
    csv_header: Optional[tuple[str, ...]] = None

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.document, sort_keys=True, indent=2).encode() + b"\n"

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if not self.point_rows:
            return buf.getvalue()
        if self.csv_header is not None:
            writer.writerow(list(self.csv_header))
            for row in self.point_rows:
                writer.writerow(["" if cell is None else _cell(cell) for cell in row])
            return buf.getvalue()
        n_coords = max(len(row[0]) for row in self.point_rows)
        writer.writerow(
            [f"x{i+1}" for i in range(n_coords)]
            + ["phi", "check", "raw", "scale", "normalized", "status"]
        )
        for coords, phi, check, raw, scale, norm, status in self.point_rows:
            coord_cells = [_cell(c) for c in coords] + [""] * (n_coords - len(coords))
            writer.writerow(
                coord_cells
                + [
                    "" if phi is None else _cell(phi),
                    check,
                    "" if raw is None else _cell(raw),
                    "" if scale is None else _cell(scale),
                    "" if norm is None else _cell(norm),
                    status,
                ]
            )
        return buf.getvalue()


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _report_rows(family_index: int, equation: str, rr: ResidualReport) -> list[tuple]:
    rows = []
    for rec in rr.records:
        rows.append((rec.x, rec.phi, f"family{family_index}:{equation}", rec.raw, rec.scale, rec.normalized, rec.status))
    return rows


def _summarize(rr: ResidualReport) -> dict:
    return {
        "equation": rr.equation,
        "tolerance": rr.tolerance,
        "n_points": len(rr.records),
        "n_ok": rr.n_ok,
        "n_failed": rr.n_failed,
        "max_normalized": rr.max_normalized,
        "mean_normalized": rr.mean_normalized,
        "pass": rr.passed,
        "failures": [
            {"x": list(rec.x), "error": rec.status}
            for rec in rr.records
            if rec.status != "ok"
        ],
    }


def _field_jets_on_grid(entry, cfg: ScenarioConfig):
    """Materialize one family and solve it on the scenario grid."""
    target = to_constraint(
        entry.spec,
        branch=entry.branch,
        root_tol=cfg.tolerances.root,
        singular_tol=cfg.tolerances.singular,
    )
    if isinstance(target, ExplicitField):
        results = []
        axes = [_axis_values(lo, hi, c) for (lo, hi), c in zip(cfg.box, cfg.counts)]
        for index in np.ndindex(*cfg.counts):
            x = np.array([axes[k][i] for k, i in enumerate(index)])
            try:
                jet = target.jet_at(x)
                results.append(GridPointResult(index, x, jet, None))
            except EvalDomainError as err:
                results.append(GridPointResult(index, x, None, type(err).__name__))
        return target, results
    return target, sample_grid(target, cfg.box, cfg.counts, cfg.seed)


def _equation_report(entry, equation: str, tolerance: float, results, cfg: ScenarioConfig) -> ResidualReport:
    spec = entry.spec
    if equation == "equipotential":
        try:
            spread = equipotential_check(spec, entry.phi0, int(np.prod(cfg.counts)), cfg.seed)
            rec = PointRecord((entry.phi0,), entry.phi0, spread, 1.0, spread, "ok")
        except EmptyLevelSetError as err:
            rec = PointRecord((entry.phi0,), None, None, None, None, type(err).__name__)
        return ResidualReport(equation, tolerance, (rec,))

    records = []
    for res in results:
        if res.jet is None:
            records.append(PointRecord(tuple(map(float, res.x)), None, None, None, None, res.error))
            continue
        try:
            if equation == "first_order_system":
                if spec.kind == "explicit_complex":
                    raws, scales = first_order_system_explicit(
                        spec.f, spec.g, to_constraint(spec).expr, res.x
                    )
                elif spec.kind == "chaundy":
                    raws, scales = first_order_system_terms(spec.F, spec.G, res.x, phi=res.jet.phi)
                else:
                    raise ValueError(f"first_order_system does not apply to kind {spec.kind!r}")
                norms = [normalized(r, s) for r, s in zip(raws, scales)]
                worst = int(np.argmax(np.abs(norms)))
                raw, scale = raws[worst], scales[worst]
            else:
                raw, scale = _JET_EQUATIONS[equation](res.jet)
        except (SingularPointError, NoRootError, EvalDomainError, ValueError) as err:
            records.append(
                PointRecord(tuple(map(float, res.x)), res.jet.phi, None, None, None, type(err).__name__)
            )
            continue
        records.append(
            PointRecord(
                tuple(map(float, res.x)), res.jet.phi, raw, scale, normalized(raw, scale), "ok"
            )
        )
    return ResidualReport(equation, tolerance, tuple(records))


def run_checks(cfg: ScenarioConfig) -> Report:
    """Execute every family/equation pair of the scenario and build the report."""
    families_doc = []
    rows: list[tuple] = []
    overall = True
    for fi, entry in enumerate(cfg.families):
        if cfg.checks is not None:
            checks = tuple(
                (eq, cfg.tolerances.residual or _DEFAULT_EQ_TOL[eq]) for eq in cfg.checks
            )
        else:
            checks = expected_checks(entry.spec)
            if cfg.tolerances.residual is not None:
                checks = tuple((eq, cfg.tolerances.residual) for eq, _ in checks)
        target, results = _field_jets_on_grid(entry, cfg)
        n_points = len(results)
        n_failed = sum(1 for r in results if not r.ok)
        coverage_ok = n_failed <= COVERAGE_LIMIT * n_points
        fam_doc = {
            "index": fi,
            "kind": entry.spec.kind,
            "n": entry.spec.n,
            "points": n_points,
            "failed_points": n_failed,
            "solver_coverage_ok": coverage_ok,
            "checks": [],
        }
        if not coverage_ok:
            fam_doc["error"] = "SolverCoverageError"
            overall = False
        for eq, tol in checks:
            rr = _equation_report(entry, eq, tol, results, cfg)
            fam_doc["checks"].append(_summarize(rr))
            rows.extend(_report_rows(fi, eq, rr))
            if not rr.passed:
                overall = False
        families_doc.append(fam_doc)
    document = {
        "version": __version__,
        "seed": cfg.seed,
        "scenario": cfg.echo(),
        "families": families_doc,
        "overall_pass": overall,
    }
    return Report(document, overall, tuple(rows))


# ---------------------------------------------------------------------------
# identity fuzzing

def random_jet(rng: np.random.Generator, n: int) -> FieldJet:
    """Random jet with gradient components bounded away from zero."""
    g = rng.uniform(0.5, 2.0, n) * rng.choice((-1.0, 1.0), n)
    h = rng.uniform(-1.0, 1.0, (n, n))
    h = 0.5 * (h + h.T)
    return FieldJet(x=np.zeros(n), phi=0.0, grad=g, hess=h)


def fuzz_identity(n_list, trials: int, seed: int, tolerance: float = 1e-9) -> Report:
    """Fuzz the bordered determinant identity over random jets.

    Records the worst |ratio - 1| and the empirical sign per dimension; the
    sign must be constant within each dimension.
    """
    doc_entries = {}
    overall = True
    for n in n_list:
        if not 2 <= n <= 6:
            raise ValueError(f"fuzz dimensions must lie in 2..6, got {n}")
        rng = np.random.default_rng([seed, n])
        worst = 0.0
        signs = set()
        performed = 0
        for _ in range(trials):
            for _ in range(50):
                j = random_jet(rng, n)
                res = det_identity_check(j)
                # reject ill-conditioned draws where the reference side is tiny
                if abs(res.rhs_core) > 1e-4 * float(np.prod(j.grad**2)):
                    break
            worst = max(worst, abs(res.ratio - 1.0))
            signs.add(res.sign)
            performed += 1
        ok = performed == 0 or (worst <= tolerance and len(signs) == 1)
        overall = overall and ok
        doc_entries[str(n)] = {
            "trials": performed,
            "worst_ratio_deviation": worst,
            "signs": sorted(signs),
            "pass": ok,
        }
    document = {
        "version": __version__,
        "seed": seed,
        "tolerance": tolerance,
        "fuzz_identity": doc_entries,
        "overall_pass": overall,
    }
    return Report(document, overall)


def sample_report(cfg: ScenarioConfig) -> Report:
    """Dump the solved field jets of every family on the scenario grid."""
    n = cfg.families[0].spec.n
    header = (
        ["family"]
        + [f"x{i+1}" for i in range(n)]
        + ["phi"]
        + [f"dphi_{i+1}" for i in range(n)]
        + [f"d2phi_{i+1}{j+1}" for i in range(n) for j in range(i, n)]
        + ["constraint_residual", "status"]
    )
    rows = []
    docs = []
    for fi, entry in enumerate(cfg.families):
        target, results = _field_jets_on_grid(entry, cfg)
        n_failed = sum(1 for r in results if not r.ok)
        docs.append(
            {
                "index": fi,
                "kind": entry.spec.kind,
                "points": len(results),
                "failed_points": n_failed,
            }
        )
        for res in results:
            base = [fi] + [float(v) for v in res.x]
            if res.jet is None:
                pad = 1 + n + n * (n + 1) // 2 + 1
                rows.append(tuple(base + [None] * pad + [res.error]))
            else:
                j = res.jet
                seconds = [float(j.hess[i, k]) for i in range(n) for k in range(i, n)]
                rows.append(
                    tuple(
                        base
                        + [j.phi]
                        + [float(v) for v in j.grad]
                        + seconds
                        + [j.constraint_residual, "ok"]
                    )
                )
    document = {
        "version": __version__,
        "seed": cfg.seed,
        "scenario": cfg.echo(),
        "families": docs,
        "overall_pass": True,
    }
    return Report(document, True, tuple(rows), csv_header=tuple(header))
