"""Scenario files: line-oriented key=value pairs grouped into sections.

A section header opens on its own line or inline with its first keys:

    [family] kind=bateman F=phi G=phi^2
    [sample] box=1,2;1,2 counts=8,8 seed=42
    [tolerances] root=1e-12 residual=1e-7 singular=1e-8
    [checks] equations=bateman
    [output] json=report.json csv=points.csv

`[family]` may repeat.  Lines starting with '#' are comments.  Values
contain no whitespace (the expression DSL is whitespace-free in files).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ArityError, ExprSyntaxError, ScenarioError
from .expr import Expr, parse as parse_expr
from .families import (
    FamilySpec,
    a_surface_family,
    bateman_family,
    chaundy_family,
    confocal_family,
    explicit_complex_family,
    explicit_field_family,
    linear_family,
    quadratic_family,
)
from .implicit import Bracket, Guess
from .quadratic import SymFuncMatrix

__all__ = ["ScenarioConfig", "FamilyEntry", "Tolerances", "load_scenario", "parse_scenario_text"]

DEFAULT_ROOT_TOL = 1e-12
DEFAULT_RESIDUAL_TOL = 1e-7
DEFAULT_SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class Tolerances:
    root: float = DEFAULT_ROOT_TOL
    residual: Optional[float] = None  # None: per-equation defaults apply
    singular: float = DEFAULT_SINGULAR_TOL


@dataclass(frozen=True)
class FamilyEntry:
    spec: FamilySpec
    branch: Optional[object] = None  # Bracket | Guess | None (kind default)
    phi0: float = 1.0  # level value for equipotential checks


@dataclass(frozen=True)
class ScenarioConfig:
    families: tuple[FamilyEntry, ...]
    box: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    checks: Optional[tuple[str, ...]] = None  # None: expected checks per family
    json_path: Optional[str] = None
    csv_path: Optional[str] = None

    def echo(self) -> dict:
        """Deterministic summary embedded in reports."""
        fams = []
        for entry in self.families:
            s = entry.spec
            fams.append(
                {
                    "kind": s.kind,
                    "n": s.n,
                    "exprs": sorted(
                        f"{k}={v}"
                        for k, v in (
                            ("F", s.F), ("G", s.G), ("f", s.f), ("g", s.g),
                            ("A", s.A), ("e", s.e),
                        )
                        if v is not None
                    )
                    + [f"F{i+1}={fi}" for i, fi in enumerate(s.Fs)]
                    + (
                        [
                            f"M{i+1}{j+1}={s.M.entry(i, j)}"
                            for i in range(s.M.n)
                            for j in range(i, s.M.n)
                        ]
                        if s.M is not None
                        else []
                    ),
                    "phi0": entry.phi0,
                }
            )
        return {
            "families": fams,
            "box": [list(b) for b in self.box],
            "counts": list(self.counts),
            "seed": self.seed,
            "tolerances": {
                "root": self.tolerances.root,
                "residual": self.tolerances.residual,
                "singular": self.tolerances.singular,
            },
            "checks": list(self.checks) if self.checks is not None else None,
        }


def _split_sections(text: str) -> list[tuple[str, int, list[tuple[str, str, int]]]]:
    sections = []
    current: Optional[tuple[str, int, list]] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0].startswith("["):
            name = tokens[0]
            if not name.endswith("]"):
                raise ScenarioError(f"malformed section header {name!r}", lineno)
            current = (name[1:-1], lineno, [])
            sections.append(current)
            tokens = tokens[1:]
        elif current is None:
            raise ScenarioError("key=value before any [section] header", lineno)
        for tok in tokens:
            if "=" not in tok:
                raise ScenarioError(f"expected key=value, got {tok!r}", lineno)
            key, value = tok.split("=", 1)
            if not key or not value:
                raise ScenarioError(f"expected key=value, got {tok!r}", lineno)
            current[2].append((key, value, lineno))
    return sections


def _to_float(value: str, key: str, lineno: int) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ScenarioError(f"field {key!r}: not a number: {value!r}", lineno) from None
    if not math.isfinite(v):
        raise ScenarioError(f"field {key!r}: non-finite value", lineno)
    return v


def _to_int(value: str, key: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioError(f"field {key!r}: not an integer: {value!r}", lineno) from None


def _to_expr(value: str, key: str, lineno: int) -> Expr:
    try:
        return parse_expr(value)
    except ExprSyntaxError as err:
        raise ScenarioError(f"field {key!r}: {err}", lineno) from None


def _build_family(pairs: list[tuple[str, str, int]], header_line: int) -> FamilyEntry:
    kv = {}
    lines = {}
    for key, value, lineno in pairs:
        kv[key] = value
        lines[key] = lineno
    kind = kv.pop("kind", None)
    if kind is None:
        raise ScenarioError("family section missing 'kind'", header_line)

    branch = None
    if "bracket" in kv and "guess" in kv:
        raise ScenarioError("family may set bracket or guess, not both", lines["guess"])
    if "bracket" in kv:
        parts = kv.pop("bracket").split(",")
        if len(parts) != 2:
            raise ScenarioError("field 'bracket': expected lo,hi", lines["bracket"])
        branch = Bracket(
            _to_float(parts[0], "bracket", lines["bracket"]),
            _to_float(parts[1], "bracket", lines["bracket"]),
        )
    if "guess" in kv:
        branch = Guess(_to_float(kv.pop("guess"), "guess", lines["guess"]))
    phi0 = _to_float(kv.pop("phi0"), "phi0", lines["phi0"]) if "phi0" in kv else 1.0

    def expr_field(key: str) -> Expr:
        if key not in kv:
            raise ScenarioError(f"{kind} family missing field {key!r}", header_line)
        return _to_expr(kv.pop(key), key, lines[key])

    try:
        if kind == "bateman":
            spec = bateman_family(expr_field("F"), expr_field("G"))
        elif kind == "linear":
            coeffs = []
            i = 1
            while f"F{i}" in kv:
                coeffs.append(expr_field(f"F{i}"))
                i += 1
            if not coeffs:
                raise ScenarioError("linear family needs F1, F2, ...", header_line)
            c = _to_float(kv.pop("c"), "c", lines["c"]) if "c" in kv else 1.0
            spec = linear_family(coeffs, c)
        elif kind == "quadratic":
            n = _to_int(kv.pop("n"), "n", lines.get("n", header_line)) if "n" in kv else None
            entries = {}
            for key in sorted(k for k in kv if k.startswith("M")):
                digits = key[1:]
                if len(digits) != 2 or not digits.isdigit():
                    raise ScenarioError(f"unrecognized matrix field {key!r}", lines[key])
                i, j = int(digits[0]) - 1, int(digits[1]) - 1
                entries[(min(i, j), max(i, j))] = expr_field(key)
            if n is None:
                n = 1 + max(max(i, j) for i, j in entries)
            spec = quadratic_family(SymFuncMatrix.from_upper(n, entries))
        elif kind == "chaundy":
            spec = chaundy_family(expr_field("F"), expr_field("G"))
        elif kind == "explicit_complex":
            spec = explicit_complex_family(expr_field("F"), expr_field("f"), expr_field("g"))
        elif kind == "confocal":
            a2 = _to_float(kv.pop("a2"), "a2", lines.get("a2", header_line)) if "a2" in kv else 1.0
            b2 = _to_float(kv.pop("b2"), "b2", lines.get("b2", header_line)) if "b2" in kv else 4.0
            c2 = _to_float(kv.pop("c2"), "c2", lines.get("c2", header_line)) if "c2" in kv else 9.0
            spec = confocal_family(a2, b2, c2)
        elif kind == "a_surface":
            n = _to_int(kv.pop("n"), "n", lines["n"]) if "n" in kv else 3
            spec = a_surface_family(expr_field("A"), n)
        elif kind == "explicit_expr":
            if "n" not in kv:
                raise ScenarioError("explicit_expr family needs field 'n'", header_line)
            n = _to_int(kv.pop("n"), "n", lines["n"])
            degree = _to_float(kv.pop("degree"), "degree", lines["degree"]) if "degree" in kv else 0.0
            spec = explicit_field_family(expr_field("e"), n, degree)
        else:
            raise ScenarioError(f"unknown family kind {kind!r}", header_line)
    except ArityError as err:
        raise ScenarioError(str(err), header_line) from None

    if kv:
        stray = sorted(kv)[0]
        raise ScenarioError(f"unrecognized field {stray!r} for kind {kind}", lines[stray])
    return FamilyEntry(spec=spec, branch=branch, phi0=phi0)


def parse_scenario_text(text: str) -> ScenarioConfig:
    sections = _split_sections(text)
    families: list[FamilyEntry] = []
    box: Optional[tuple] = None
    counts: Optional[tuple] = None
    seed = 0
    tol_kw: dict = {}
    checks: Optional[tuple[str, ...]] = None
    json_path = csv_path = None

    seen = set()
    for name, header_line, pairs in sections:
        if name == "family":
            families.append(_build_family(pairs, header_line))
            continue
        if name in seen:
            raise ScenarioError(f"duplicate section [{name}]", header_line)
        seen.add(name)
        kv = {key: (value, lineno) for key, value, lineno in pairs}
        if name == "sample":
            if "box" in kv:
                value, lineno = kv.pop("box")
                box = tuple(
                    tuple(_to_float(p, "box", lineno) for p in axis.split(","))
                    for axis in value.split(";")
                )
                for axis in box:
                    if len(axis) != 2 or axis[0] >= axis[1]:
                        raise ScenarioError("field 'box': each axis needs lo,hi with lo<hi", lineno)
            if "counts" in kv:
                value, lineno = kv.pop("counts")
                counts = tuple(_to_int(p, "counts", lineno) for p in value.split(","))
                if any(c < 1 for c in counts):
                    raise ScenarioError("field 'counts': counts must be >= 1", lineno)
            if "seed" in kv:
                value, lineno = kv.pop("seed")
                seed = _to_int(value, "seed", lineno)
        elif name == "tolerances":
            for key in ("root", "residual", "singular"):
                if key in kv:
                    value, lineno = kv.pop(key)
                    tol_kw[key] = _to_float(value, key, lineno)
        elif name == "checks":
            if "equations" in kv:
                value, lineno = kv.pop("equations")
                checks = tuple(p for p in value.split(",") if p)
                from .harness import EQUATION_NAMES

                for eq in checks:
                    if eq not in EQUATION_NAMES:
                        raise ScenarioError(f"unknown equation {eq!r}", lineno)
        elif name == "output":
            if "json" in kv:
                json_path = kv.pop("json")[0]
            if "csv" in kv:
                csv_path = kv.pop("csv")[0]
        else:
            raise ScenarioError(f"unknown section [{name}]", header_line)
        if kv:
            stray = sorted(kv)[0]
            raise ScenarioError(f"unrecognized field {stray!r} in [{name}]", kv[stray][1])

    if not families:
        raise ScenarioError("scenario declares no [family] section")
    if box is None or counts is None:
        raise ScenarioError("scenario needs [sample] with box and counts")
    dims = {entry.spec.n for entry in families}
    if len(dims) != 1:
        raise ScenarioError("all families in one scenario must share the dimension n")
    n_expected = dims.pop()
    if len(box) != n_expected or len(counts) != n_expected:
        raise ScenarioError(
            f"[sample] box/counts have {len(box)}/{len(counts)} axes; families need {n_expected}"
        )
    return ScenarioConfig(
        families=tuple(families),
        box=box,
        counts=counts,
        seed=seed,
        tolerances=Tolerances(**tol_kw),
        checks=checks,
        json_path=json_path,
        csv_path=csv_path,
    )


def load_scenario(path: str) -> ScenarioConfig:
    """Parse and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario file: {err}") from None
    return parse_scenario_text(text)
