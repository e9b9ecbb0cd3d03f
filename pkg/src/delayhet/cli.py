"""Command-line entry point: run experiments, report time-to-target, synthesize traces."""

from __future__ import annotations

import argparse
import csv
import logging
import re
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import datagen, delays, engine
from .config import ConfigError, ExperimentConfig, SelectorSpec, load_config
from .core import ClientRoster, RoundRecord

logger = logging.getLogger("delayhet")

ROUND_COLUMNS = ("round", "wallclock_s", "round_delay_s", "selected_clients", "train_loss", "test_metric")
SUMMARY_COLUMNS = (
    "selector", "seed", "status", "rounds", "time_to_target_s", "final_train_loss", "final_test_metric",
    "selection_cpu_s", "message",
)
RUN_FILE = re.compile(r"^(?P<name>.+)__seed(?P<seed>\d+)\.csv$")
NOT_REACHED = "N/A"

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _fmt(x: float) -> str:
    return repr(float(x))


def run_file_name(selector: str, seed: int) -> str:
    return f"{selector}__seed{seed}.csv"


def write_rounds(path: Path, records: Sequence[RoundRecord], roster: ClientRoster) -> None:
    """Round CSV; selected ids are the 1-based original client ids, sorted, repeats kept."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(ROUND_COLUMNS)
        for rec in records:
            ids = sorted(int(roster.order[i]) + 1 for i in rec.selected)
            out.writerow([
                rec.round, _fmt(rec.cumulative_time), _fmt(rec.round_delay),
                ";".join(map(str, ids)), _fmt(rec.train_loss), _fmt(rec.test_metric),
            ])


@dataclass(frozen=True)
class RunOutcome:
    selector: str
    seed: int
    status: str  # ok | diverged | failed
    rounds: int
    time_to_target: float | None
    final_train_loss: float | None
    final_test_metric: float | None
    selection_seconds: float
    message: str = ""

    def row(self) -> list[str]:
        def opt(x: float | None) -> str:
            return NOT_REACHED if x is None else _fmt(x)

        return [
            self.selector, str(self.seed), self.status, str(self.rounds), opt(self.time_to_target),
            opt(self.final_train_loss), opt(self.final_test_metric), f"{self.selection_seconds:.3f}", self.message,
        ]


def run_single(cfg: ExperimentConfig, spec: SelectorSpec, seed: int, out_dir: Path) -> RunOutcome:
    """One (selector, seed) run; writes its round CSV and never raises on divergence."""
    ds = cfg.dataset
    prob = datagen.generate_quadratic(ds.m, ds.n, ds.d, ds.eig_range, ds.noise_std, seed)
    roster, model = cfg.delay.build(ds.m, seed)
    prob = prob.permuted(roster.order)
    path = out_dir / run_file_name(spec.name, seed)
    try:
        res = engine.run(prob, roster, model, spec.build(), cfg.engine_config(seed))
    except (engine.DivergenceError, engine.SelectionError) as exc:
        status = "diverged" if isinstance(exc, engine.DivergenceError) else "failed"
        write_rounds(path, exc.records, roster)
        logger.error("%s seed %d: %s", spec.name, seed, exc)
        return RunOutcome(spec.name, seed, status, len(exc.records) - 1, None, None, None, 0.0, str(exc))
    except ValueError as exc:
        # e.g. a fixed eta above 1/L of this seed's problem
        logger.error("%s seed %d: %s", spec.name, seed, exc)
        return RunOutcome(spec.name, seed, "failed", 0, None, None, None, 0.0, str(exc))
    write_rounds(path, res.records, roster)
    last = res.records[-1]
    logger.info("%s seed %d: %d rounds, time to target %s", spec.name, seed, last.round, res.time_to_target)
    return RunOutcome(
        spec.name, seed, "ok", last.round, res.time_to_target, last.train_loss, last.test_metric,
        sum(res.selection_seconds),
    )


def _run_job(args: tuple[ExperimentConfig, SelectorSpec, int, Path]) -> RunOutcome:
    return run_single(*args)


def run_experiment(config_path: str | Path, out_dir: str | Path, jobs: int = 1) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, spec, seed, out) for spec in cfg.selectors for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_job, tasks))
    else:
        outcomes = [_run_job(t) for t in tasks]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for o in outcomes:
            w.writerow(o.row())
    bad = [o for o in outcomes if o.status != "ok"]
    for o in bad:
        print(f"{o.selector} seed {o.seed}: {o.status}: {o.message}", file=sys.stderr)
    return EXIT_RUNTIME if bad else EXIT_OK


def time_to_target(path: str | Path, target: float, metric: str = "test_metric") -> float | None:
    """Wall-clock of the first round whose metric is at or below target (no interpolation)."""
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if float(row[metric]) <= target:
                return float(row["wallclock_s"])
    return None


def median_time(times: Sequence[float | None]) -> float | None:
    """Median with unreached runs counted as slower than any reached one."""
    vals = sorted(times, key=lambda t: (t is None, t or 0.0))
    if not vals:
        return None
    k = len(vals)
    mid = vals[(k - 1) // 2 : k // 2 + 1]
    if any(v is None for v in mid):
        return None
    return statistics.fmean(mid)


def collect_runs(runs_dir: Path) -> dict[str, dict[int, Path]]:
    runs: dict[str, dict[int, Path]] = {}
    for p in sorted(runs_dir.glob("*.csv")):
        m = RUN_FILE.match(p.name)
        if m:
            runs.setdefault(m["name"], {})[int(m["seed"])] = p
    return runs


def report(runs_dir: str | Path, target: float, metric: str = "test_metric", out: str | Path | None = None) -> int:
    runs_dir = Path(runs_dir)
    if not runs_dir.is_dir():
        print(f"runs directory {runs_dir} does not exist", file=sys.stderr)
        return EXIT_USAGE
    runs = collect_runs(runs_dir)
    if not runs:
        print(f"no run CSVs found in {runs_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    table = {
        name: {seed: time_to_target(path, target, metric) for seed, path in sorted(seeds.items())}
        for name, seeds in runs.items()
    }

    def cell(t: float | None) -> str:
        return NOT_REACHED if t is None else _fmt(t)

    out_path = Path(out) if out is not None else runs_dir / "report.csv"
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("selector", "seed", "time_to_target_s"))
        for name, per_seed in table.items():
            for seed, t in per_seed.items():
                w.writerow((name, seed, cell(t)))
            w.writerow((name, "median", cell(median_time(list(per_seed.values())))))

    seeds = sorted({s for per_seed in table.values() for s in per_seed})
    header = ["selector", "median", *(f"seed{s}" for s in seeds)]
    rows = [header]
    for name, per_seed in table.items():
        med = median_time(list(per_seed.values()))
        rows.append([
            name, NOT_REACHED if med is None else f"{med:.1f}",
            *("-" if s not in per_seed else NOT_REACHED if per_seed[s] is None else f"{per_seed[s]:.1f}" for s in seeds),
        ])
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    print(f"time to {metric} <= {target:g} (seconds)")
    for r in rows:
        print("  ".join(v.ljust(wd) if c == 0 else v.rjust(wd) for c, (v, wd) in enumerate(zip(r, widths))))
    return EXIT_OK


def synth_trace(m: int, out: str | Path, seed: int, median: float, spread: float, sigma: float | None) -> int:
    if m < 1:
        print("--m must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    means = delays.synth_long_tail_means(m, seed, median, spread)
    delays.write_trace(out, means, None if sigma is None else [sigma] * m)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delayhet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every (selector, seed) pair of a config")
    p_run.add_argument("--config", required=True, help="YAML experiment config")
    p_run.add_argument("--out", required=True, help="output directory for round CSVs and summary.csv")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_rep = sub.add_parser("report", help="time-to-target table from a runs directory")
    p_rep.add_argument("--runs", required=True)
    p_rep.add_argument("--target", type=float, required=True)
    p_rep.add_argument("--metric", choices=engine.TARGET_METRICS, default="test_metric")
    p_rep.add_argument("--out", default=None, help="report CSV path (default: <runs>/report.csv)")

    p_tr = sub.add_parser("traces", help="delay trace utilities")
    tsub = p_tr.add_subparsers(dest="trace_command", required=True)
    p_syn = tsub.add_parser("synth", help="write a long-tail log-normal mean-delay trace")
    p_syn.add_argument("--m", type=int, required=True)
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--median", type=float, default=100.0, help="median mean delay in seconds")
    p_syn.add_argument("--spread", type=float, default=1.5, help="log-normal shape of the mean delays")
    p_syn.add_argument("--sigma", type=float, default=None, help="also write a per-client jitter column")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "run":
        if args.jobs < 1:
            print("--jobs must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        return run_experiment(args.config, args.out, args.jobs)
    if args.command == "report":
        return report(args.runs, args.target, args.metric, args.out)
    try:
        return synth_trace(args.m, args.out, args.seed, args.median, args.spread, args.sigma)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
