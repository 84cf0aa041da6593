"""Command-line front end: ``run``, ``compare`` and ``validate``."""

from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

from .common import ConfigError
from .engine import EventCapExceeded
from .metrics import CSV_COLUMNS, csv_rows, to_csv
from .network import simulate
from .ptdma import derive_coordinator_pattern
from .scenario import MACS, Scenario, ScenarioError, ScenarioSyntaxError, load_scenario, validate

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_EVENT_CAP = 0, 1, 2, 3

SUMMARY_FIELDS = ("pdr", "lat_mean_us", "lat_p95_us", "energy_mj_total", "coord_sleep_ratio")


class SweepError(RuntimeError):
    def __init__(self, mac: str, seed: int, cause: BaseException):
        super().__init__(f"run failed for mac={mac} seed={seed}: {cause}")
        self.mac = mac
        self.seed = seed
        self.cause = cause


def parse_seeds(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = (int(x) for x in text.split("..", 1))
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def parse_macs(text: str) -> list[str]:
    macs = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in macs if m not in MACS]
    if unknown or not macs:
        raise ScenarioError("scenario", f"unknown MAC(s) {unknown}; expected one of {', '.join(MACS)}")
    return macs


def _one(sc: Scenario, mac: str, seed: int):
    try:
        return simulate(validate(sc.replace(mac=mac)), seed).report
    except EventCapExceeded:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrapped with the failing run
        raise SweepError(mac, seed, exc) from exc


def compare(sc: Scenario, macs: list[str], seeds: list[int], jobs: int = 1) -> list:
    """Reports for every (mac, seed) pair, in that order regardless of completion order."""
    grid = [(m, s) for m in macs for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_one, sc, m, s) for m, s in grid]
            return [f.result() for f in futures]
    return [_one(sc, m, s) for m, s in grid]


def comparison_csv(reports: list) -> str:
    """One ``all``-class row per run, a blank line, then per-MAC mean/std rows."""
    out = to_csv(reports, classes=["all"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([])
    w.writerow(["mac", "runs"] + [f"{f}_{agg}" for f in SUMMARY_FIELDS for agg in ("mean", "std")])
    macs = list(dict.fromkeys(r.mac for r in reports))
    for mac in macs:
        runs = [r for r in reports if r.mac == mac]
        row = [mac, str(len(runs))]
        for f in SUMMARY_FIELDS:
            vals = [_field(r, f) for r in runs]
            vals = [v for v in vals if v is not None]
            mean = statistics.fmean(vals) if vals else None
            std = statistics.pstdev(vals) if vals else None
            row += ["" if mean is None else f"{mean:.6f}", "" if std is None else f"{std:.6f}"]
        w.writerow(row)
    return out + buf.getvalue()


def _field(report, name: str):
    if name == "energy_mj_total":
        return report.energy_mj_total
    if name == "coord_sleep_ratio":
        return report.coord_sleep_ratio
    return getattr(report.classes["all"], name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsnmac", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario with one seed")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=None, help="defaults to the first seed in the scenario")
    run.add_argument("--mac", default=None, help="override the scenario's MAC")
    run.add_argument("--out", choices=("json", "csv"), default="json")
    run.add_argument("--trace", default=None, metavar="FILE", help="write the processed-event trace here")

    cmp_ = sub.add_parser("compare", help="run the mac x seed cross product")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--macs", required=True, help="comma-separated MAC names")
    cmp_.add_argument("--seeds", default=None, help="N..M or a comma list; defaults to the scenario seeds")
    cmp_.add_argument("--out", default="-", metavar="FILE", help="CSV destination ('-' for stdout)")
    cmp_.add_argument("--jobs", type=int, default=1)

    val = sub.add_parser("validate", help="parse and check a scenario")
    val.add_argument("--scenario", required=True)
    return p


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if getattr(args, "mac", None):
            sc = validate(sc.replace(mac=parse_macs(args.mac)[0]))
        macs = parse_macs(args.macs) if args.command == "compare" else []
        seeds = (parse_seeds(args.seeds) if args.seeds else list(sc.seeds)) if args.command == "compare" else []
    except (ScenarioSyntaxError, ScenarioError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == "validate":
        summary = f"ok: {sc.name} mac={sc.mac} nodes={len(sc.nodes)} duration_us={sc.duration_us}"
        if sc.nodes and all(n.pattern for n in sc.nodes):
            summary += f" coordinator_pattern={derive_coordinator_pattern(sc.wakeup_table())}"
        print(summary)
        return EXIT_OK
    try:
        if args.command == "run":
            net = simulate(sc, args.seed, trace=bool(args.trace))
            if args.trace:
                _write(args.trace, "\n".join(net.engine.trace_lines()) + "\n")
            _write("-", net.report.to_json() + "\n" if args.out == "json" else to_csv([net.report]))
        else:
            _write(args.out, comparison_csv(compare(sc, macs, seeds, args.jobs)))
        return EXIT_OK
    except EventCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVENT_CAP
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc.cause, ConfigError) else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


__all__ = ["CSV_COLUMNS", "compare", "comparison_csv", "csv_rows", "main", "parse_seeds"]
