"""Command-line driver.

Exit codes: 0 all checks pass, 1 any check fails, 2 configuration or parse
error.  Reports are byte-identical across runs for a fixed (scenario, seed,
version); tolerances live in scenario files only.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ImplipdeError, ScenarioError
from .harness import Report, fuzz_identity, run_checks, sample_report
from .scenario import load_scenario


def _write_outputs(report: Report, json_path, csv_path) -> None:
    if json_path:
        with open(json_path, "wb") as handle:
            handle.write(report.to_json_bytes())
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(report.to_csv_text())


def _print_check_summary(report: Report) -> None:
    for fam in report.document.get("families", []):
        label = f"family {fam['index']} ({fam['kind']}, n={fam['n']})" if "n" in fam else f"family {fam['index']}"
        if not fam.get("solver_coverage_ok", True):
            print(f"FAIL {label}: solver coverage ({fam['failed_points']}/{fam['points']} points failed)")
        for check in fam.get("checks", []):
            status = "PASS" if check["pass"] else "FAIL"
            worst = check["max_normalized"]
            worst_text = "n/a" if worst is None else f"{worst:.3e}"
            print(
                f"{status} {label} {check['equation']}: max normalized {worst_text}"
                f" (tolerance {check['tolerance']:.1e}, {check['n_ok']}/{check['n_points']} points)"
            )
    print("overall:", "PASS" if report.overall_pass else "FAIL")


def cmd_verify(args) -> int:
    cfg = load_scenario(args.scenario)
    report = run_checks(cfg)
    _write_outputs(report, args.json or cfg.json_path, args.csv or cfg.csv_path)
    _print_check_summary(report)
    return 0 if report.overall_pass else 1


def cmd_fuzz_identity(args) -> int:
    try:
        n_list = [int(part) for part in args.n.split(",") if part]
    except ValueError:
        raise ScenarioError(f"--n expects a comma-separated list of integers, got {args.n!r}") from None
    report = fuzz_identity(n_list, args.trials, args.seed)
    _write_outputs(report, args.json, None)
    for n, entry in sorted(report.document["fuzz_identity"].items()):
        status = "PASS" if entry["pass"] else "FAIL"
        print(
            f"{status} n={n}: worst |ratio-1| = {entry['worst_ratio_deviation']:.3e},"
            f" signs {entry['signs']} over {entry['trials']} trials"
        )
    print("overall:", "PASS" if report.overall_pass else "FAIL")
    return 0 if report.overall_pass else 1


def cmd_sample(args) -> int:
    cfg = load_scenario(args.scenario)
    report = sample_report(cfg)
    text = report.to_csv_text()
    if args.csv or cfg.csv_path:
        with open(args.csv or cfg.csv_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    cfg = load_scenario(args.scenario)
    report = run_checks(cfg)
    if args.format == "json":
        payload = report.to_json_bytes().decode()
    else:
        payload = report.to_csv_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            handle.write(payload)
    else:
        sys.stdout.write(payload)
    return 0 if report.overall_pass else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="implipde",
        description="Construct implicit PDE solution families and verify their equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run a scenario's check matrix")
    p.add_argument("scenario")
    p.add_argument("--json", help="write the JSON report here (overrides [output])")
    p.add_argument("--csv", help="write per-point residual CSV here (overrides [output])")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("fuzz-identity", help="fuzz the bordered determinant identity")
    p.add_argument("--n", default="2,3,4,5", help="comma-separated dimensions (2..6)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="write the JSON report here")
    p.set_defaults(fn=cmd_fuzz_identity)

    p = sub.add_parser("sample", help="dump solved field jets as CSV")
    p.add_argument("scenario")
    p.add_argument("--csv", help="write here instead of stdout")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("report", help="run a scenario and emit the report document")
    p.add_argument("scenario")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="write here instead of stdout")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ImplipdeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
