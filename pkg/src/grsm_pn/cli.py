"""Command-line front end.

Subcommands: ``ber-sweep`` (Monte Carlo sweep from a config file),
``pool-design`` (pool/mapping table CSV), ``overlap-table`` (angular overlap
metrics per pool), ``pn-variance`` (combined-rotation variance law table).
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_sim_config, schema_help
from .constellation import (build_mqam, build_pools, overlap_probability,
                            overlap_probability_numeric)
from .mapping import build_mapping_table
from .phase_noise import combined_pn_variance
from .sim import (config_hash, plot_report, run_sweep, write_manifest,
                  write_report)

OUT_DIR_ENV = "GRSM_PN_OUT_DIR"


def _output_dir(arg: str | None) -> Path:
    if arg is not None:
        return Path(arg)
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _pool_rows(order: int, n_branches: int) -> list[list[str]]:
    c = build_mqam(order)
    pools = build_pools(c)
    table = build_mapping_table(order, n_branches, pools)
    rows = []
    for entry in table.entries:
        pool = entry.pool
        rows.append([
            str(pool.index),
            "".join(str(b) for b in entry.bit_prefix),
            _fmt_symbol(pool.symbols[0]),
            _fmt_symbol(pool.symbols[1]),
            pool.sensitivity.value,
            ";".join(str(j) for j in entry.allowed_j),
        ])
    return rows


def _fmt_symbol(z: complex) -> str:
    re, im = int(z.real), int(z.imag)
    return f"{re}{im:+d}j"


def cmd_ber_sweep(args) -> int:
    try:
        cfg = load_sim_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.trials_override is not None:
        cfg = replace(cfg, trials_per_point=args.trials_override)
    out_dir = _output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "ber_sweep.csv"
    manifest_path = out_dir / "run_manifest.json"
    cfg_hash = config_hash(cfg)

    records = []

    def flush():
        write_report(records, csv_path, cfg_hash)

    def on_record(rec):
        records.append(rec)
        flush()
        print(f"snr={rec.snr_db:g} dB  trials={rec.trials}  "
              f"ber={rec.ber_overall:.3e}", file=sys.stderr)

    try:
        _, stats = run_sweep(cfg, threads=args.threads, on_record=on_record)
    except KeyboardInterrupt:
        flush()
        print("interrupted; partial results flushed", file=sys.stderr)
        return 2
    flush()
    write_manifest(manifest_path, cfg, stats, csv_path=csv_path)
    if args.plot:
        plot_report(records, out_dir / "ber_sweep.svg",
                    title=f"{cfg.modulation}QAM {cfg.mapping_mode}")
    return 0


def cmd_pool_design(args) -> int:
    try:
        rows = _pool_rows(args.modulation, args.na)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lines = ["pool_index,bit_prefix,symbol_1,symbol_2,sensitivity,allowed_J_list"]
    lines += [",".join(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_overlap_table(args) -> int:
    if args.sigma2 <= 0:
        print("error: sigma2 must be positive", file=sys.stderr)
        return 1
    try:
        pools = build_pools(build_mqam(args.modulation))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lines = ["pool_index,delta_theta,euclidean_distance,"
             "overlap_closed_form,overlap_quadrature"]
    for pool in pools:
        t0 = math.atan2(pool.symbols[0].imag, pool.symbols[0].real)
        t1 = math.atan2(pool.symbols[1].imag, pool.symbols[1].real)
        closed = overlap_probability(t0, t1, args.sigma2)
        numeric = overlap_probability_numeric(t0, t1, args.sigma2)
        lines.append(",".join([
            str(pool.index), repr(pool.phase_separation),
            repr(pool.euclidean_distance), repr(closed), repr(numeric)]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_pn_variance(args) -> int:
    if args.max_branches < 1:
        print("error: max-branches must be >= 1", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    sigma = math.sqrt(args.sigma2)
    rows = [("n_active", "analytic", "monte_carlo", "relative_gap")]
    for n in range(1, args.max_branches + 1):
        analytic = combined_pn_variance(n, args.sigma2)
        if args.sigma2 == 0.0:
            estimate, gap = 0.0, 0.0
        else:
            phases = sigma * rng.standard_normal((args.trials, n))
            rx = sigma * rng.standard_normal(args.trials)
            theta = rx + np.angle(np.mean(np.exp(1j * phases), axis=1))
            estimate = float(np.var(theta))
            gap = abs(estimate - analytic) / analytic
        rows.append((str(n), repr(analytic), repr(estimate), repr(gap)))
    text = "\n".join(",".join(r) for r in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grsm-pn",
        description="Link-level simulator for receiver spatial modulation "
                    "under oscillator phase noise",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser(
        "ber-sweep", help="run a Monte Carlo BER sweep from a config file",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=schema_help())
    sweep.add_argument("--config", required=True, help="INI config file")
    sweep.add_argument("--out", default=None,
                       help=f"output directory (or ${OUT_DIR_ENV}, or cwd)")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    sweep.add_argument("--trials-override", type=int, default=None,
                       help="override trials per SNR point")
    sweep.add_argument("--plot", action="store_true",
                       help="also write an SVG BER plot")
    sweep.set_defaults(func=cmd_ber_sweep)

    pool = sub.add_parser("pool-design",
                          help="emit the pool/mapping table as CSV")
    pool.add_argument("--modulation", type=int, required=True)
    pool.add_argument("--na", type=int, required=True,
                      help="active branch count")
    pool.add_argument("--out", default=None, help="output CSV (default stdout)")
    pool.set_defaults(func=cmd_pool_design)

    overlap = sub.add_parser("overlap-table",
                             help="per-pool angular overlap metrics")
    overlap.add_argument("--modulation", type=int, required=True)
    overlap.add_argument("--sigma2", type=float, default=0.1,
                         help="phase-noise variance in rad^2")
    overlap.add_argument("--out", default=None)
    overlap.set_defaults(func=cmd_overlap_table)

    pnvar = sub.add_parser("pn-variance",
                           help="combined-rotation variance law table")
    pnvar.add_argument("--sigma2", type=float, default=0.1)
    pnvar.add_argument("--max-branches", type=int, default=4)
    pnvar.add_argument("--trials", type=int, default=100_000)
    pnvar.add_argument("--seed", type=int, default=0)
    pnvar.add_argument("--out", default=None)
    pnvar.set_defaults(func=cmd_pn_variance)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surfaced with context, nonzero status
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
