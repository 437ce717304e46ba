"""Command line entry point: ``bcsa run | verify | catalog``."""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .csma import csma_sweep
from .floor import build_catalog, catalog_to_text, de_threshold, floor_prediction, optimize_distribution
from .model import PhyParams, packet_duration_ns, slot_count, slot_duration_ns
from .sim import BcsaScenario, run_bcsa_sweep

CSV_HEADER = "protocol,n,m,g,dist,receiver_k,trials,unresolved_mean,plr,ci95_lo,ci95_hi,seed"

EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_FAILED = 1


@dataclass(frozen=True)
class Row:
    protocol: str
    n: int
    m: int | None = None
    g: float | None = None
    dist: str = ""
    receiver_k: int | None = None
    trials: int | None = None
    unresolved_mean: float | None = None
    plr: float | None = None
    ci95: tuple | None = None
    seed: int | None = None

    def sort_key(self):
        return (self.protocol, -math.inf if self.g is None else self.g,
                -1 if self.receiver_k is None else self.receiver_k)

    def to_csv(self) -> str:
        def sci(x):
            return "" if x is None else f"{x:.5e}"

        def opt(x):
            return "" if x is None else str(x)

        lo, hi = self.ci95 if self.ci95 is not None else (None, None)
        fields = [self.protocol, str(self.n), opt(self.m),
                  "" if self.g is None else f"{self.g:.6g}", self.dist, opt(self.receiver_k),
                  opt(self.trials), sci(self.unresolved_mean), sci(self.plr), sci(lo), sci(hi),
                  opt(self.seed)]
        return ",".join(fields)


def _bcsa_rows(cfg: ExperimentConfig, threads: int, notes: list) -> list:
    rows = []
    for k in cfg.receiver_k:
        scenarios = [BcsaScenario(cfg.n, cfg.users(g), cfg.dist, receiver_k=k, trials=cfg.trials,
                                  seed=cfg.seed, min_errors=cfg.min_errors,
                                  max_trials=cfg.max_trials) for g in cfg.loads]
        for g, est in zip(cfg.loads, run_bcsa_sweep(scenarios, threads)):
            if est.unresolved_total < cfg.min_errors:
                notes.append(f"bcsa g={g:g} k={k}: {est.unresolved_total} errors after "
                             f"{est.trials} trials (cap {cfg.max_trials})")
            rows.append(Row("bcsa", cfg.n, est.m, g, str(cfg.dist), k, est.trials,
                            est.unresolved_mean, est.plr_mean, est.ci95, cfg.seed))
    return rows


def _csma_rows(cfg: ExperimentConfig, threads: int) -> list:
    rows = []
    points = csma_sweep(cfg.phy, cfg.loads, windows=cfg.csma_windows, runs=cfg.csma_runs,
                        seed=cfg.seed, threads=threads, n=cfg.n)
    for p in points:
        o = p.outcome
        # the window exponent rides in the dist column; rows of equal g keep sweep order
        rows.append(Row("csma", cfg.n, o.m, p.g, f"u={p.u}", None, o.runs,
                        o.losses / o.runs, o.plr, o.ci95, cfg.seed))
    return rows


def _catalog(cfg: ExperimentConfig):
    return build_catalog(cfg.catalog_users, cfg.catalog_degrees)


def _floor_rows(cfg: ExperimentConfig) -> list:
    catalog = _catalog(cfg)
    forced = [k for k in cfg.receiver_k if k is not None]
    rows = []
    for g in cfg.loads:
        m = cfg.users(g)
        pred = floor_prediction(cfg.dist, cfg.n, m, catalog, extra_k=forced)
        for k in cfg.receiver_k:
            plr = pred.averaged if k is None else pred.per_k[k]
            # analytic prediction: the interval collapses to the point value
            rows.append(Row("floor", cfg.n, m, g, str(cfg.dist), k, 0, plr * (m - 1), plr,
                            (plr, plr), cfg.seed))
    return rows


def _threshold_rows(cfg: ExperimentConfig) -> list:
    return [Row("threshold", cfg.n, None, de_threshold(cfg.dist), str(cfg.dist), seed=cfg.seed)]


def _optimize_rows(cfg: ExperimentConfig) -> list:
    m = round(cfg.opt_load * cfg.n)
    dist, value = optimize_distribution(cfg.opt_degrees, cfg.opt_step, cfg.opt_load, cfg.n, m,
                                        _catalog(cfg), min_threshold=cfg.min_threshold)
    return [Row("optimize", cfg.n, m, cfg.opt_load, str(dist), None, 0, value * (m - 1), value,
                (value, value), cfg.seed)]


def table1_lines(payloads) -> list:
    lines = []
    for payload in payloads:
        phy = PhyParams.table1(payload)
        lines.append(f"payload {payload} B: t_pack = {packet_duration_ns(phy) / 1000:g} us, "
                     f"t_slot = {slot_duration_ns(phy) / 1000:g} us, n = {slot_count(phy)}")
    return lines


def _table1_rows(cfg: ExperimentConfig) -> list:
    return [Row("table1", slot_count(PhyParams.table1(p)), dist=f"payload={p}B") for p in cfg.payloads]


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple:
    """Execute every protocol of ``cfg``; returns (rows sorted for output, budget notes)."""
    rows: list = []
    notes: list = []
    for protocol in cfg.protocols:
        if protocol == "bcsa":
            rows += _bcsa_rows(cfg, threads, notes)
        elif protocol == "csma":
            rows += _csma_rows(cfg, threads)
        elif protocol == "floor":
            rows += _floor_rows(cfg)
        elif protocol == "threshold":
            rows += _threshold_rows(cfg)
        elif protocol == "optimize":
            rows += _optimize_rows(cfg)
        elif protocol == "table1":
            rows += _table1_rows(cfg)
    rows.sort(key=Row.sort_key)
    return rows, notes


def format_csv(cfg: ExperimentConfig, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# bcsa {__version__}\n")
    buf.write(f"# config {cfg.name} sha256={cfg.digest()}\n")
    buf.write(f"# seed {cfg.seed}\n")
    buf.write(CSV_HEADER + "\n")
    for row in rows:
        buf.write(row.to_csv() + "\n")
    return buf.getvalue()


def _summary(rows) -> str:
    out = []
    for r in rows:
        parts = [f"{r.protocol:>9}"]
        if r.g is not None:
            parts.append(f"g={r.g:.4g}")
        if r.receiver_k is not None:
            parts.append(f"k={r.receiver_k}")
        if r.dist:
            parts.append(r.dist)
        if r.plr is not None:
            parts.append(f"plr={r.plr:.3e}")
        out.append("  ".join(parts))
    return "\n".join(out)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if "table1" in cfg.protocols:
        print("\n".join(table1_lines(cfg.payloads)))
    rows, notes = run_experiment(cfg, args.threads)
    text = format_csv(cfg, rows)
    out = args.out or cfg.output
    if out:
        Path(out).write_text(text)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        sys.stdout.write(text)
    summary = _summary([r for r in rows if r.protocol != "table1"])
    if summary:
        print(summary, file=sys.stdout if out else sys.stderr)
    if notes:
        for note in notes:
            print(f"error budget exhausted: {note}", file=sys.stderr)
        return EXIT_BUDGET
    return 0


def cmd_verify(args) -> int:
    from .acceptance import run_suite

    seed = 20240601 if args.seed is None else args.seed
    only = set(args.only) if args.only else None
    lines = []
    failed = 0

    def emit(res):
        nonlocal failed
        line = json.dumps(res.as_dict(), sort_keys=True)
        lines.append(line)
        print(line, flush=True)
        failed += not res.passed

    run_suite(seed=seed, quick=args.quick, tol_scale=args.tol_scale, threads=args.threads,
              only=only, callback=emit)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_FAILED if failed else 0


def cmd_catalog(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        users, degrees = cfg.catalog_users, cfg.catalog_degrees
    else:
        users, degrees = args.max_users, tuple(args.degrees)
    text = catalog_to_text(build_catalog(users, degrees))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcsa", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bcsa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required,
                       help="config file path or bundled config name (e.g. fig5_n172)")
        p.add_argument("--out", help="output file (default: config output or stdout)")
        p.add_argument("--seed", type=_u64, help="master seed, overrides the config")
        p.add_argument("--threads", type=_positive, default=1, help="worker threads")

    p_run = sub.add_parser("run", help="run an experiment config and write CSV")
    common(p_run, True)
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    common(p_ver, False)
    p_ver.add_argument("--quick", action="store_true", help="reduced Monte-Carlo budgets")
    p_ver.add_argument("--tol-scale", type=float, default=1.0,
                       help="multiply every tolerance by this factor")
    p_ver.add_argument("--only", nargs="+", type=int, metavar="N", help="criterion numbers to run")
    p_ver.set_defaults(func=cmd_verify)

    p_cat = sub.add_parser("catalog", help="dump the stopping-set catalog")
    common(p_cat, False)
    p_cat.add_argument("--max-users", type=_positive, default=4)
    p_cat.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3])
    p_cat.set_defaults(func=cmd_catalog)
    return parser


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"bcsa: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
