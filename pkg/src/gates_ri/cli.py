"""Command-line entry point: ``gates-ri {analyze,simulate,report}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 estimation or
simulation failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from . import __version__
from .data import DataValidationError, load_csv
from .learners import LassoLearner
from .ri import EstimationError, cross_fit_gates, heterogeneity_contrast
from .sim import SimulationAborted, SimulationConfig, SimulationReport, run_monte_carlo
from .ssri import ssri_gates

log = logging.getLogger("gates_ri")

CONFIG_HELP = """\
simulation config keys (YAML or JSON):
  dgp:               {kind: linear|polynomial|step|zero|constant, p: 10, noise_sd: 1.0, treat_prob: 0.5}
  sample_sizes:      list of n (default [100, 500, 2500])
  k_groups:          K (default 5)
  methods:           list of {kind: ri|ssri, n_splits, main_fraction, baseline, level_adjust, label}
                     (default: RI L=3, SSRI S=250 at 0.33 with and without baseline)
  n_replicates:      Monte Carlo replicates per sample size (default 200)
  truth_replicates:  datasets averaged for the reported truth (default 1000)
  truth_population:  population size for replicate-level truth (default 100000)
  alpha:             nominal level (default 0.05)
  seed:              master seed (default 0)
"""


class UsageError(Exception):
    """Invalid input; maps to exit code 2."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def manifest(command: str, seed: int, config: dict[str, Any], input_path: Optional[Path], started: str) -> dict:
    digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    return {
        "command": command,
        "config_digest": digest,
        "seed": seed,
        "software_version": __version__,
        "started": started,
        "finished": _now(),
        "input_digest": _sha256(input_path) if input_path else None,
    }


def _table(rows: list[tuple], header: tuple) -> str:
    cells = [header] + [tuple(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r) for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_analyze(args: argparse.Namespace) -> int:
    started = _now()
    path = Path(args.csv)
    if not path.is_file():
        raise UsageError(f"input not found: {path}")
    data = load_csv(path, args.outcome_col, args.treatment_col)
    learner = LassoLearner()
    if args.method == "ri":
        res = cross_fit_gates(data, args.l, args.k, learner, args.alpha, args.seed)
        contrast = heterogeneity_contrast(res)
        payload = res.to_dict()
        payload["contrast"] = contrast.to_dict()
        rows = [
            (k + 1, float(res.gamma_hat[k]), float(res.ci_lower[k]), float(res.ci_upper[k]), float(res.variance[k]))
            for k in range(args.k)
        ]
        text = _table(rows, ("group", "estimate", "ci_lower", "ci_upper", "variance"))
        text += (
            f"\n\ncontrast group {contrast.first} - group {contrast.second}: {contrast.estimate:.4f}"
            f"  [{contrast.ci_lower:.4f}, {contrast.ci_upper:.4f}]"
        )
        config = {"method": "ri", "k": args.k, "l": args.l, "alpha": args.alpha}
    else:
        res = ssri_gates(
            data, args.splits, args.main_fraction, args.k, learner, args.alpha, args.baseline, args.seed,
            args.level_adjust,
        )
        payload = res.to_dict()
        rows = [
            (k + 1, float(res.point_median[k]), float(res.point_mean[k]), float(res.ci_lower[k]), float(res.ci_upper[k]))
            for k in range(args.k)
        ]
        text = _table(rows, ("group", "median", "mean", "ci_lower", "ci_upper"))
        config = {
            "method": "ssri", "k": args.k, "splits": args.splits, "main_fraction": args.main_fraction,
            "alpha": args.alpha, "baseline": args.baseline, "level_adjust": args.level_adjust,
        }
    payload["manifest"] = manifest("analyze", args.seed, config, path, started)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def load_config(path: Path) -> SimulationConfig:
    if not path.is_file():
        raise UsageError(f"config not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ValueError("config must be a mapping")
        return SimulationConfig.from_dict(raw)
    except (yaml.YAMLError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc


REPORT_FILES = ("report.json", "report.csv", "timing.json", "manifest.json")


def write_report(report: SimulationReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    rows = report.to_csv_rows()
    with (out_dir / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    (out_dir / "timing.json").write_text(json.dumps(report.timing_dict(), indent=2) + "\n", encoding="utf-8")


def read_report(path: Path) -> SimulationReport:
    """Load ``report.json`` (or a directory holding one), merging a sibling ``timing.json``."""
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    d = json.loads(path.read_text(encoding="utf-8"))
    timing_path = path.with_name("timing.json")
    timing = json.loads(timing_path.read_text(encoding="utf-8")) if timing_path.is_file() else None
    return SimulationReport.from_dict(d, timing)


def cmd_simulate(args: argparse.Namespace) -> int:
    started = _now()
    config_path = Path(args.config)
    config = load_config(config_path)
    out_dir = Path(args.out_dir)
    try:
        report = run_monte_carlo(config, n_jobs=args.threads)
        write_report(report, out_dir)
        man = manifest("simulate", config.seed, config.to_dict(), config_path, started)
        (out_dir / "manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")
    except BaseException:
        for name in REPORT_FILES:
            (out_dir / name).unlink(missing_ok=True)
        raise
    for m in report.methods:
        print(f"{m.method:32s} n={m.n:<6d} valid={m.n_valid:<5d} cpu/replicate={m.mean_cpu_seconds:.3f}s")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .plots import write_figures

    if not args.reports:
        raise UsageError("no report files given")
    reports = []
    for p in args.reports:
        try:
            reports.append(read_report(Path(p)))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed report {p}: {exc}") from exc
    out_dir = Path(args.out_dir)
    paths = write_figures(reports, out_dir)
    rows = []
    for rep in reports:
        dgp = rep.config.get("dgp", {}).get("kind", "")
        for c in rep.cells:
            rows.append({"dgp": dgp, **c.__dict__})
    with (out_dir / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gates-ri", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate GATES on a CSV dataset")
    a.add_argument("csv")
    a.add_argument("--method", choices=("ri", "ssri"), default="ri")
    a.add_argument("--k", type=int, default=5, help="number of sorted groups")
    a.add_argument("--l", type=int, default=3, help="cross-fitting folds (RI)")
    a.add_argument("--splits", type=int, default=250, help="repeated splits (SSRI)")
    a.add_argument("--main-fraction", type=float, default=0.33, help="main-sample share (SSRI)")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--baseline", action=argparse.BooleanOptionalAction, default=True,
                   help="SSRI baseline adjustment")
    a.add_argument("--level-adjust", choices=("halved", "nominal"), default="halved")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--outcome-col", default="y")
    a.add_argument("--treatment-col", default="d")
    a.add_argument("--out", default="result.json")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser(
        "simulate", help="run the Monte Carlo comparison", epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    s.add_argument("config")
    s.add_argument("--out-dir", default="sim_out")
    s.add_argument("--threads", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="render coverage/length SVGs and a summary CSV")
    r.add_argument("reports", nargs="*")
    r.add_argument("--out-dir", default="figures")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, SimulationAborted) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
