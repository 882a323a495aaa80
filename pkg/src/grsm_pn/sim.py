"""Monte Carlo BER sweep harness.

A sweep point is split into blocks of ``channel_redraw_period`` trials. Each
block owns a spawn-keyed random stream derived from (master seed, SNR index,
block index), draws one channel realization plus all per-trial randomness,
and runs the batch kernel. Block results merge by block index, so counts are
identical for any thread count; optional error-target stopping is evaluated
on the contiguous block prefix and is therefore deterministic too.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import channel as channel_mod
from . import kernels
from .channel import ChannelConfig, ChannelRealization
from .constellation import Constellation, build_mqam, build_pools
from .mapping import (MappingTable, build_mapping_table, classical_demap,
                      classical_map, pn_aware_demap, pn_aware_map)
from .phase_noise import PnConfig, sample_pn
from .transceiver import (Compensation, _cached_threshold, combine,
                          detect_spatial, double_stage_compensate, ml_detect,
                          single_stage_compensate, transmit)

__all__ = [
    "MappingMode",
    "SimConfig",
    "BerRecord",
    "TrialCounts",
    "run_trial",
    "run_sweep",
    "write_report",
    "read_report",
    "write_manifest",
    "config_hash",
]

CSV_HEADER = ["snr_db", "ber_overall", "ber_spatial", "ber_mqam",
              "trials", "bits_total", "errors_total", "config_hash"]

# Blocks dispatched per executor task; fixed so the work partition (and hence
# any adaptive stopping point) is independent of the thread count.
BLOCKS_PER_TASK = 32


class MappingMode:
    CLASSICAL = "classical"
    PN_AWARE = "pn-aware"

    ALL = (CLASSICAL, PN_AWARE)


@dataclass(frozen=True)
class SimConfig:
    modulation: int
    mapping_mode: str
    n_tx: int = 32
    n_rx: int = 8
    spectral_efficiency: int = 8
    n_branches: int | None = None
    snr_grid_db: tuple[float, ...] = tuple(float(s) for s in range(0, 45, 5))
    pn: PnConfig = field(default_factory=lambda: PnConfig(variance=0.1))
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    compensation: Compensation = Compensation.NONE
    trials_per_point: int = 10_000
    min_errors: int = 100
    master_seed: int = 0
    channel_redraw_period: int = 100
    active_prior: float = 0.5

    def __post_init__(self):
        if self.mapping_mode not in MappingMode.ALL:
            raise ValueError(f"mapping_mode must be one of {MappingMode.ALL}")
        m = self.modulation.bit_length() - 1
        if self.n_branches is None:
            derived = self.spectral_efficiency - m
            object.__setattr__(self, "n_branches", derived)
        if self.n_branches < 1:
            raise ValueError("need at least one active branch")
        if self.n_branches > self.n_rx:
            raise ValueError("branch count cannot exceed receive antennas")
        if (self.mapping_mode == MappingMode.CLASSICAL
                and self.compensation is not Compensation.NONE):
            raise ValueError(
                "phase compensation requires the pool-based pn-aware mapping")
        if self.trials_per_point < 0 or self.min_errors < 0:
            raise ValueError("trial counts must be non-negative")
        if self.channel_redraw_period < 1:
            raise ValueError("channel_redraw_period must be >= 1")
        if (self.channel.n_tx, self.channel.n_rx) != (self.n_tx, self.n_rx):
            object.__setattr__(self, "channel",
                               replace(self.channel, n_tx=self.n_tx, n_rx=self.n_rx))

    @property
    def bits_per_symbol(self) -> int:
        return self.modulation.bit_length() - 1

    @property
    def bits_per_trial(self) -> int:
        return self.n_branches + self.bits_per_symbol

    def noise_variance(self, snr_db: float, symbol_energy: float) -> float:
        snr = 10.0 ** (snr_db / 10.0)
        return symbol_energy / (snr * self.bits_per_symbol)

    def to_dict(self) -> dict:
        return {
            "modulation": self.modulation,
            "mapping_mode": self.mapping_mode,
            "n_tx": self.n_tx,
            "n_rx": self.n_rx,
            "spectral_efficiency": self.spectral_efficiency,
            "n_branches": self.n_branches,
            "snr_grid_db": list(self.snr_grid_db),
            "pn": {"variance": self.pn.variance, "mode": self.pn.mode.value,
                   "correlation": self.pn.rho},
            "channel": {
                "model": self.channel.model.value,
                "n_clusters": self.channel.n_clusters,
                "n_rays": self.channel.n_rays,
                "angular_spread_deg": self.channel.angular_spread_deg,
                "los_present": self.channel.los_present,
                "alpha_realizations": self.channel.alpha_realizations,
            },
            "compensation": self.compensation.value,
            "trials_per_point": self.trials_per_point,
            "min_errors": self.min_errors,
            "master_seed": self.master_seed,
            "channel_redraw_period": self.channel_redraw_period,
            "active_prior": self.active_prior,
        }


def config_hash(cfg: SimConfig) -> str:
    payload = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class BerRecord:
    snr_db: float
    bits_total: int
    bit_errors: int
    spatial_bits: int
    spatial_errors: int
    mqam_bits: int
    mqam_errors: int
    trials: int
    wall_time: float = field(default=0.0, compare=False)

    @staticmethod
    def _ratio(errors: int, bits: int) -> float:
        return errors / bits if bits > 0 else float("nan")

    @property
    def ber_overall(self) -> float:
        return self._ratio(self.bit_errors, self.bits_total)

    @property
    def ber_spatial(self) -> float:
        return self._ratio(self.spatial_errors, self.spatial_bits)

    @property
    def ber_mqam(self) -> float:
        return self._ratio(self.mqam_errors, self.mqam_bits)


@dataclass(frozen=True)
class TrialCounts:
    spatial_bits: int
    spatial_errors: int
    mqam_bits: int
    mqam_errors: int

    @property
    def bit_errors(self) -> int:
        return self.spatial_errors + self.mqam_errors

    @property
    def bits_total(self) -> int:
        return self.spatial_bits + self.mqam_bits


@lru_cache(maxsize=64)
def _cached_alpha(channel_cfg: ChannelConfig, n_branches: int) -> float:
    return channel_mod.estimate_alpha(channel_cfg, n_branches)


class _LinkContext:
    """Static per-configuration material shared by every block."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.constellation: Constellation = build_mqam(cfg.modulation)
        if cfg.mapping_mode == MappingMode.PN_AWARE:
            pools = build_pools(self.constellation)
            self.table: MappingTable | None = build_mapping_table(
                cfg.modulation, cfg.n_branches, pools)
        else:
            self.table = None
        self.tables = kernels.build_link_tables(
            self.constellation, self.table, cfg.n_branches,
            cfg.mapping_mode == MappingMode.PN_AWARE, cfg.compensation)
        self.alpha = _cached_alpha(cfg.channel, cfg.n_branches)
        self.sqrt_alpha = math.sqrt(self.alpha)

    def threshold(self, noise_variance: float) -> float:
        return _cached_threshold(noise_variance, self.cfg.modulation,
                                 self.alpha, self.cfg.active_prior)


def _block_generators(master_seed: int, snr_index: int, block_index: int
                      ) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (channel, trials) streams for one block of one SNR point."""
    base = np.random.SeedSequence(entropy=master_seed,
                                  spawn_key=(snr_index, block_index))
    ch_ss, trial_ss = base.spawn(2)
    return np.random.default_rng(ch_ss), np.random.default_rng(trial_ss)


def _run_block(ctx: _LinkContext, snr_index: int, block_index: int,
               n_trials: int, noise_variance: float, gamma: float,
               backend: str | None) -> tuple[int, int, int]:
    cfg = ctx.cfg
    ch_rng, trial_rng = _block_generators(cfg.master_seed, snr_index, block_index)
    ch = channel_mod.realize_link(cfg.channel, cfg.n_branches, ctx.alpha, ch_rng)
    E, T = kernels.effective_matrices(ch)
    draws = kernels.draw_chunk(trial_rng, n_trials, ctx.tables, cfg.pn,
                               cfg.n_tx, noise_variance)
    sp, mq = kernels.run_chunk(ctx.tables, E, T, draws, ctx.sqrt_alpha,
                               noise_variance, gamma, backend=backend)
    return sp, mq, ch.rejections


def run_sweep(cfg: SimConfig, threads: int = 1, backend: str | None = None,
              on_record=None) -> tuple[list[BerRecord], dict]:
    """Run every SNR point; returns records plus run statistics.

    ``on_record`` is invoked with each finished :class:`BerRecord`, letting
    callers flush partial output. The returned stats carry the cached power
    normalization and the channel rejection counter.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    ctx = _LinkContext(cfg)
    na, m = cfg.n_branches, cfg.bits_per_symbol
    records: list[BerRecord] = []
    rejections = 0
    for snr_index, snr_db in enumerate(cfg.snr_grid_db):
        t0 = time.perf_counter()
        sigma2 = cfg.noise_variance(snr_db, ctx.constellation.symbol_energy)
        gamma = ctx.threshold(sigma2)
        n_blocks = math.ceil(cfg.trials_per_point / cfg.channel_redraw_period)
        sizes = [min(cfg.channel_redraw_period,
                     cfg.trials_per_point - b * cfg.channel_redraw_period)
                 for b in range(n_blocks)]

        def task(task_index: int) -> list[tuple[int, int, int]]:
            out = []
            start = task_index * BLOCKS_PER_TASK
            for b in range(start, min(start + BLOCKS_PER_TASK, n_blocks)):
                out.append(_run_block(ctx, snr_index, b, sizes[b], sigma2,
                                      gamma, backend))
            return out

        n_tasks = math.ceil(n_blocks / BLOCKS_PER_TASK)
        if threads == 1:
            task_results = map(task, range(n_tasks))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                task_results = list(pool.map(task, range(n_tasks)))

        sp_total = mq_total = trials_done = 0
        stop = False
        for task_index, block_results in enumerate(task_results):
            for offset, (sp, mq, rej) in enumerate(block_results):
                b = task_index * BLOCKS_PER_TASK + offset
                sp_total += sp
                mq_total += mq
                trials_done += sizes[b]
                rejections += rej
            if cfg.min_errors > 0 and sp_total + mq_total >= cfg.min_errors:
                stop = True
            if stop:
                break
        rec = BerRecord(
            snr_db=float(snr_db),
            bits_total=trials_done * (na + m),
            bit_errors=sp_total + mq_total,
            spatial_bits=trials_done * na,
            spatial_errors=sp_total,
            mqam_bits=trials_done * m,
            mqam_errors=mq_total,
            trials=trials_done,
            wall_time=time.perf_counter() - t0,
        )
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    stats = {"alpha": ctx.alpha, "channel_rejections": rejections,
             "config_hash": config_hash(cfg)}
    return records, stats


def run_trial(cfg: SimConfig, ch: ChannelRealization, snr_db: float,
              trial_seed) -> TrialCounts:
    """Reference single-trial pipeline built from the scalar operations.

    Deterministic for a fixed (configuration, channel, seed); used by tests
    to cross-check the batch kernels and by callers that want one fully
    traced symbol slot.
    """
    ctx_rng = np.random.default_rng(trial_seed)
    constellation = build_mqam(cfg.modulation)
    sigma2 = cfg.noise_variance(snr_db, constellation.symbol_energy)
    gamma = _cached_threshold(sigma2, cfg.modulation, ch.alpha, cfg.active_prior)
    na, m = cfg.n_branches, cfg.bits_per_symbol

    if cfg.mapping_mode == MappingMode.CLASSICAL:
        spatial_word = int(ctx_rng.integers(1, 1 << na))
        label = int(ctx_rng.integers(0, cfg.modulation))
        bits = (tuple((spatial_word >> (na - 1 - k)) & 1 for k in range(na))
                + tuple((label >> (m - 1 - k)) & 1 for k in range(m)))
        pattern, symbol = classical_map(bits, constellation, na)
        sent_bits = bits
        table = None
    else:
        pools = build_pools(constellation)
        table = build_mapping_table(cfg.modulation, na, pools)
        label = int(ctx_rng.integers(0, cfg.modulation))
        sym_bits = tuple((label >> (m - 1 - k)) & 1 for k in range(m))
        pattern, symbol = pn_aware_map(sym_bits, table, ctx_rng)
        sent_bits = pattern.bits + sym_bits

    pn = sample_pn(cfg.pn, cfg.n_tx, ctx_rng)
    rv = transmit(pattern, symbol, ch, pn, sigma2, ctx_rng)
    pattern_hat = detect_spatial(rv, gamma)
    y_c = combine(rv, pattern_hat, pn.rx_phase, ch.alpha)

    if cfg.mapping_mode == MappingMode.CLASSICAL:
        _, label_hat = ml_detect(y_c, constellation.point_by_label)
        detected_bits = classical_demap(pattern_hat, label_hat, constellation)
    else:
        if cfg.compensation is Compensation.DOUBLE_STAGE:
            def detector(yc: complex, pool) -> int:
                sym = double_stage_compensate(rv, pattern_hat, pool,
                                              pn.rx_phase, ch.alpha)
                return pool.symbols.index(sym)
        elif cfg.compensation is Compensation.SINGLE_STAGE:
            def detector(yc: complex, pool) -> int:
                return pool.symbols.index(single_stage_compensate(yc, pool))
        else:
            def detector(yc: complex, pool) -> int:
                return ml_detect(yc, pool.symbols)[1]
        mqam_bits_hat = pn_aware_demap(pattern_hat, y_c, table, detector)
        detected_bits = pattern_hat.bits + mqam_bits_hat

    spatial_errors = sum(a != b for a, b in zip(sent_bits[:na], detected_bits[:na]))
    mqam_errors = sum(a != b for a, b in zip(sent_bits[na:], detected_bits[na:]))
    return TrialCounts(spatial_bits=na, spatial_errors=spatial_errors,
                       mqam_bits=m, mqam_errors=mqam_errors)


def write_report(records: list[BerRecord], path, cfg_hash: str) -> None:
    """Write the sweep CSV (fixed column order, shortest-roundtrip floats)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([repr(r.snr_db), repr(r.ber_overall),
                             repr(r.ber_spatial), repr(r.ber_mqam),
                             r.trials, r.bits_total, r.bit_errors, cfg_hash])


def read_report(path, n_branches: int, bits_per_symbol: int
                ) -> tuple[list[BerRecord], list[str]]:
    """Parse a sweep CSV back into records; returns (records, hashes)."""
    records, hashes = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for row in reader:
            snr_db = float(row[0])
            trials = int(row[4])
            bits_total = int(row[5])
            errors_total = int(row[6])
            spatial_bits = trials * n_branches
            mqam_bits = trials * bits_per_symbol
            ber_spatial = float(row[2])
            spatial_errors = (int(round(ber_spatial * spatial_bits))
                              if spatial_bits else 0)
            records.append(BerRecord(
                snr_db=snr_db, bits_total=bits_total, bit_errors=errors_total,
                spatial_bits=spatial_bits, spatial_errors=spatial_errors,
                mqam_bits=mqam_bits, mqam_errors=errors_total - spatial_errors,
                trials=trials))
            hashes.append(row[7])
    return records, hashes


def write_manifest(path, cfg: SimConfig, stats: dict, csv_path=None) -> None:
    """Run manifest: config echo, normalization, rejections, content hash."""
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": stats["config_hash"],
        "alpha": stats["alpha"],
        "channel_rejections": stats["channel_rejections"],
    }
    if csv_path is not None:
        with open(csv_path, "rb") as fh:
            manifest["results_sha256"] = hashlib.sha256(fh.read()).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_report(records: list[BerRecord], path, title: str = "BER sweep") -> None:
    """Vector-graphic BER-versus-SNR plot of the three bit streams."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    snr = [r.snr_db for r in records]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, values in [("overall", [r.ber_overall for r in records]),
                          ("spatial", [r.ber_spatial for r in records]),
                          ("mqam", [r.ber_mqam for r in records])]:
        ax.semilogy(snr, values, marker="o", label=label)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("BER")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
