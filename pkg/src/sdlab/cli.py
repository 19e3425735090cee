"""Command line: ``sdlab <experiment> --config FILE [--out DIR] [--seed N] [--refine K]`` and ``sdlab compare``.

Exit status: 0 when every check passes, 2 when a check fails (reports are still
written), 1 on configuration or usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, load_config
from .errors import SchemaMismatch, SDLabError
from .experiments import Report, run_experiment

log = logging.getLogger("sdlab")

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_csv(rep: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rep.columns)
    for row in rep.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_report(rep: Report, out: Path, config: dict) -> tuple[Path, Path]:
    stem = rep.experiment.replace("-", "_")
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    _atomic_write(csv_path, report_csv(rep))
    summary = {"experiment": rep.experiment, "config": config, "checks": rep.checks,
               "all_pass": rep.all_pass, "info": rep.info, "csv": csv_path.name}
    _atomic_write(json_path, json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return csv_path, json_path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} has no header row")
    return rows[0], rows[1:]


def compare(path_a, path_b) -> dict:
    """Per-column max absolute and relative differences of two reports with one schema."""
    head_a, rows_a = read_csv(path_a)
    head_b, rows_b = read_csv(path_b)
    if head_a != head_b:
        raise SchemaMismatch(f"columns differ: {head_a} vs {head_b}")
    if len(rows_a) != len(rows_b):
        raise SchemaMismatch(f"row counts differ: {len(rows_a)} vs {len(rows_b)}")
    out = {}
    for j, col in enumerate(head_a):
        try:
            a = np.array([float(r[j]) for r in rows_a])
            b = np.array([float(r[j]) for r in rows_b])
        except ValueError:
            same = all(ra[j] == rb[j] for ra, rb in zip(rows_a, rows_b))
            out[col] = {"equal": same}
            continue
        diff = np.abs(a - b)
        scale = np.maximum(np.abs(a), np.abs(b))
        rel = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
        out[col] = {"max_abs": float(diff.max(initial=0.0)), "max_rel": float(rel.max(initial=0.0))}
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdlab", description="Structured-deformation energy experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help="output directory (default: config 'output')")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--refine", type=int, default=None, help="halve quadrature spacing this many times")
    c = sub.add_parser("compare", help="diff two CSV reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--tol", type=float, default=None, help="exit 2 if any max_abs exceeds this")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "compare":
            diff = compare(args.report_a, args.report_b)
            print(json.dumps(diff, indent=2, sort_keys=True))
            if args.tol is not None:
                worst = max((d.get("max_abs", 0.0) for d in diff.values()), default=0.0)
                return EXIT_OK if worst <= args.tol else EXIT_FAILED
            return EXIT_OK
        cfg = load_config(args.config, seed=args.seed, refine=args.refine)
        if cfg.experiment != args.command:
            raise SDLabError(f"config is for '{cfg.experiment}', not '{args.command}'")
        rep = run_experiment(cfg)
        out = Path(args.out or cfg.output)
        csv_path, json_path = write_report(rep, out, cfg.to_dict())
        for name, chk in rep.checks.items():
            print(f"{'PASS' if chk['pass'] else 'FAIL'} {name}: {chk['value']:.3e} (tol {chk['tol']:.1e})")
        log.info("wrote %s and %s", csv_path, json_path)
        return EXIT_OK if rep.all_pass else EXIT_FAILED
    except SDLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
