"""Batch trial kernels: numba-compiled hot loop with a pure-numpy fallback.

The same per-trial pipeline (effective channel application, branch energy
detection, combining, within-pool or full-constellation decision, error
counting) exists twice: a scalar loop compiled with ``numba.njit`` and a
vectorized numpy implementation. Both consume identical pre-drawn random
arrays and make identical decisions; the suite cross-checks them against the
reference operations in :mod:`grsm_pn.transceiver`.

Backend selection: the ``GRSM_PN_BACKEND`` environment variable (``auto``,
``numba``, ``numpy``) fixes the default at import time; every entry point
also takes an explicit ``backend=`` override. ``auto`` means numba when it
imports, numpy otherwise.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .constellation import Constellation
from .mapping import MappingTable
from .phase_noise import PnConfig, PnMode
from .transceiver import Compensation

__all__ = [
    "LinkTables",
    "ChunkDraws",
    "build_link_tables",
    "effective_matrices",
    "draw_chunk",
    "run_chunk",
    "selected_backend",
    "available_backends",
]

_HALF_PI = math.pi / 2.0

_ENV_BACKEND = os.environ.get("GRSM_PN_BACKEND", "auto").strip().lower()
if _ENV_BACKEND not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"GRSM_PN_BACKEND must be auto|numba|numpy, got {_ENV_BACKEND!r}")

if _ENV_BACKEND == "numpy":
    _HAVE_NUMBA = False
else:
    try:
        from numba import njit
        _HAVE_NUMBA = True
    except ImportError:
        if _ENV_BACKEND == "numba":
            raise
        _HAVE_NUMBA = False


def selected_backend(backend: str | None = None) -> str:
    """Resolve ``backend`` (or the environment default) to numba/numpy."""
    choice = _ENV_BACKEND if backend is None else backend
    if choice == "auto":
        return "numba" if _HAVE_NUMBA else "numpy"
    if choice == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}")
    return choice


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _HAVE_NUMBA else ("numpy",)


COMPENSATION_CODE = {
    Compensation.NONE: 0,
    Compensation.SINGLE_STAGE: 1,
    Compensation.DOUBLE_STAGE: 2,
}


@dataclass(frozen=True)
class LinkTables:
    """Constellation/mapping constants packed for the kernels."""

    order: int
    n_branches: int
    m_bits: int
    pn_aware: bool
    compensation: int
    points_by_label: np.ndarray   # complex128 (M,)
    pool_symbols: np.ndarray      # complex128 (P, 2)
    j_to_pool: np.ndarray         # int64 (2**n_branches,)
    allowed_flat: np.ndarray      # int64, concatenated allowed index sets
    allowed_offsets: np.ndarray   # int64 (P+1,)


def build_link_tables(c: Constellation, table: MappingTable | None,
                      n_branches: int, pn_aware: bool,
                      compensation: Compensation) -> LinkTables:
    """Pack lookup arrays; ``table`` may be None for classical mapping only
    when no pool machinery is needed (compensation must then be NONE)."""
    if pn_aware or compensation is not Compensation.NONE:
        if table is None:
            raise ValueError("pool mapping table required for this configuration")
    if table is not None:
        pool_symbols = np.array([e.pool.symbols for e in table.entries],
                                dtype=np.complex128)
        allowed_flat = np.concatenate(
            [np.asarray(e.allowed_j, dtype=np.int64) for e in table.entries])
        counts = [len(e.allowed_j) for e in table.entries]
        allowed_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        j_to_pool = np.empty(1 << n_branches, dtype=np.int64)
        for j in range(1, 1 << n_branches):
            j_to_pool[j] = table.pool_for_index(j).pool.index
        j_to_pool[0] = 0
    else:
        pool_symbols = np.zeros((1, 2), dtype=np.complex128)
        allowed_flat = np.zeros(1, dtype=np.int64)
        allowed_offsets = np.zeros(2, dtype=np.int64)
        j_to_pool = np.zeros(1 << n_branches, dtype=np.int64)
    return LinkTables(
        order=c.order,
        n_branches=n_branches,
        m_bits=c.bits_per_symbol,
        pn_aware=pn_aware,
        compensation=COMPENSATION_CODE[compensation],
        points_by_label=np.ascontiguousarray(c.point_by_label),
        pool_symbols=pool_symbols,
        j_to_pool=j_to_pool,
        allowed_flat=allowed_flat,
        allowed_offsets=allowed_offsets,
    )


def effective_matrices(ch: ChannelRealization) -> tuple[np.ndarray, np.ndarray]:
    """Scaled effective channel pieces for the kernels.

    ``E[l, k] = sqrt(alpha) * (H_a B)[l, k]`` serves the common-rotation fast
    path; ``T[l, k, t] = sqrt(alpha) * H_a[l, t] * B[t, k]`` contracts against
    per-chain rotations.
    """
    sqrt_alpha = math.sqrt(ch.alpha)
    T = sqrt_alpha * np.einsum("lt,tk->lkt", ch.H_a, ch.B)
    E = T.sum(axis=2)
    return np.ascontiguousarray(E), np.ascontiguousarray(T)


@dataclass(frozen=True)
class ChunkDraws:
    """Pre-drawn randomness for one batch of trials (fixed draw order)."""

    mqam_words: np.ndarray     # int64 (n,)
    spatial_j: np.ndarray      # int64 (n,), final pattern index per trial
    phases_common: bool
    tx_common: np.ndarray      # float64 (n,) when phases_common else (0,)
    tx_phases: np.ndarray      # float64 (n, n_tx) when not phases_common else (n, 0)
    rx_phase: np.ndarray       # float64 (n,)
    noise: np.ndarray          # complex128 (n, n_branches)

    @property
    def n_trials(self) -> int:
        return self.mqam_words.shape[0]


def draw_chunk(rng: np.random.Generator, n: int, link: LinkTables,
               pn: PnConfig, n_tx: int, noise_variance: float) -> ChunkDraws:
    """Draw all randomness for ``n`` trials in the documented order.

    Order: MQAM words, spatial words (or pool-index selectors), transmit
    phases, receive phase, real noise, imaginary noise. The layout depends
    only on the configuration, never on drawn values, so streams are
    reproducible and splittable.
    """
    na = link.n_branches
    mqam_words = rng.integers(0, link.order, size=n, dtype=np.int64)
    if link.pn_aware:
        u = rng.random(n)
        pools = mqam_words >> 1
        counts = np.diff(link.allowed_offsets)[pools]
        pick = np.minimum((u * counts).astype(np.int64), counts - 1)
        spatial_j = link.allowed_flat[link.allowed_offsets[pools] + pick]
    else:
        spatial_j = rng.integers(1, 1 << na, size=n, dtype=np.int64)

    sigma_pn = pn.sigma
    phases_common = pn.mode is PnMode.CLO or sigma_pn == 0.0
    if phases_common:
        tx_common = sigma_pn * rng.standard_normal(n)
        tx_phases = np.zeros((n, 0))
    elif pn.mode is PnMode.INDEPENDENT:
        tx_common = np.zeros(0)
        tx_phases = sigma_pn * rng.standard_normal((n, n_tx))
    else:
        rho = pn.rho
        z0 = rng.standard_normal(n)
        zk = rng.standard_normal((n, n_tx))
        tx_common = np.zeros(0)
        tx_phases = sigma_pn * (math.sqrt(rho) * z0[:, None]
                                + math.sqrt(1.0 - rho) * zk)
    rx_phase = sigma_pn * rng.standard_normal(n)
    scale = math.sqrt(noise_variance / 2.0)
    noise_re = scale * rng.standard_normal((n, na))
    noise_im = scale * rng.standard_normal((n, na))
    return ChunkDraws(mqam_words=mqam_words, spatial_j=spatial_j,
                      phases_common=phases_common, tx_common=tx_common,
                      tx_phases=tx_phases, rx_phase=rx_phase,
                      noise=noise_re + 1j * noise_im)


def run_chunk(link: LinkTables, E: np.ndarray, T: np.ndarray,
              draws: ChunkDraws, sqrt_alpha: float, noise_variance: float,
              gamma: float, backend: str | None = None) -> tuple[int, int]:
    """Run a batch of trials; returns (spatial bit errors, MQAM bit errors)."""
    impl = selected_backend(backend)
    args = (link.points_by_label, link.pool_symbols, link.j_to_pool,
            E, T, draws.phases_common, draws.tx_common, draws.tx_phases,
            draws.rx_phase, draws.noise, draws.mqam_words, draws.spatial_j,
            sqrt_alpha, noise_variance, gamma,
            link.n_branches, int(link.pn_aware), link.compensation)
    if impl == "numba":
        sp, mq = _run_chunk_numba(*args)
    else:
        sp, mq = _run_chunk_numpy(*args)
    return int(sp), int(mq)


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------

def _dist2(a, b):
    """Squared distance via explicit parts, matching the compiled loop."""
    dre = a.real - b.real
    dim = a.imag - b.imag
    return dre * dre + dim * dim


def _single_stage_index_vec(y_c, c0, c1):
    """Vectorized tentative/derotate/re-detect; ties resolve to symbol 0."""
    tent = np.where(_dist2(y_c, c0) <= _dist2(y_c, c1), c0, c1)
    dphi = np.angle(y_c) - np.angle(tent)
    dphw = (dphi + _HALF_PI) % math.pi - _HALF_PI
    y2 = y_c * (np.cos(-dphw) + 1j * np.sin(-dphw))
    return (_dist2(y2, c0) > _dist2(y2, c1)).astype(np.int64)


def _popcount_vec(x):
    x = x.copy()
    out = np.zeros_like(x)
    while x.any():
        out += x & 1
        x >>= 1
    return out


def _run_chunk_numpy(points, pool_symbols, j_to_pool, E, T, phases_common,
                     tx_common, tx_phases, rx_phase, noise, mqam_words,
                     spatial_j, sqrt_alpha, sigma2, gamma, na, pn_aware,
                     compensation):
    n = mqam_words.shape[0]
    shifts = np.arange(na - 1, -1, -1)
    s_bits = ((spatial_j[:, None] >> shifts) & 1).astype(np.float64)
    if pn_aware:
        x = pool_symbols[mqam_words >> 1, mqam_words & 1]
    else:
        x = points[mqam_words]

    if phases_common:
        rot = np.cos(tx_common) + 1j * np.sin(tx_common)
        y = (s_bits * (x * rot)[:, None].astype(np.complex128)) @ E.T
    else:
        chain_rot = np.cos(tx_phases) + 1j * np.sin(tx_phases)
        eff = np.einsum("lkt,nt->nlk", T, chain_rot)
        y = np.einsum("nlk,nk->nl", eff, s_bits * x[:, None])
    y = y + noise

    z = 2.0 * (y.real ** 2 + y.imag ** 2) / sigma2
    active = z >= gamma
    dead = ~active.any(axis=1)
    if dead.any():
        active[dead, np.argmax(z[dead], axis=1)] = True
    j_hat = (active.astype(np.int64) << shifts).sum(axis=1)
    spatial_errors = int(_popcount_vec(spatial_j ^ j_hat).sum())

    w_hat = active.sum(axis=1)
    rx_rot = np.cos(rx_phase) + 1j * np.sin(rx_phase)
    y_c = rx_rot * (y * active).sum(axis=1) / (w_hat * sqrt_alpha)

    if not pn_aware:
        d = _dist2(y_c[:, None], points[None, :])
        label_hat = np.argmin(d, axis=1)
        mqam_errors = int(_popcount_vec(mqam_words ^ label_hat).sum())
        return spatial_errors, mqam_errors

    pool_hat = j_to_pool[j_hat]
    c0 = pool_symbols[pool_hat, 0]
    c1 = pool_symbols[pool_hat, 1]
    if compensation == 2:
        yk = y / sqrt_alpha
        tent = np.where(_dist2(yk, c0[:, None]) <= _dist2(yk, c1[:, None]),
                        c0[:, None], c1[:, None])
        dphi = np.angle(yk) - np.angle(tent)
        dphw = (dphi + _HALF_PI) % math.pi - _HALF_PI
        y_corr = y * (np.cos(-dphw) + 1j * np.sin(-dphw))
        y_c = rx_rot * (y_corr * active).sum(axis=1) / (w_hat * sqrt_alpha)
        b_hat = _single_stage_index_vec(y_c, c0, c1)
    elif compensation == 1:
        b_hat = _single_stage_index_vec(y_c, c0, c1)
    else:
        b_hat = (_dist2(y_c, c0) > _dist2(y_c, c1)).astype(np.int64)
    prefix_errors = _popcount_vec((mqam_words >> 1) ^ pool_hat)
    mqam_errors = int((prefix_errors + ((mqam_words & 1) != b_hat)).sum())
    return spatial_errors, mqam_errors


# ---------------------------------------------------------------------------
# numba hot loop
# ---------------------------------------------------------------------------

def _kernel_body(points, pool_symbols, j_to_pool, E, T, phases_common,
                 tx_common, tx_phases, rx_phase, noise, mqam_words,
                 spatial_j, sqrt_alpha, sigma2, gamma, na, pn_aware,
                 compensation):
    n = mqam_words.shape[0]
    n_tx = T.shape[2]
    n_points = points.shape[0]
    y = np.empty(na, np.complex128)
    act = np.empty(na, np.int64)
    sp_err = 0
    mq_err = 0
    for i in range(n):
        w = mqam_words[i]
        j_true = spatial_j[i]
        if pn_aware:
            x = pool_symbols[w >> 1, w & 1]
        else:
            x = points[w]

        n_act = 0
        for k in range(na):
            if (j_true >> (na - 1 - k)) & 1:
                act[n_act] = k
                n_act += 1

        if phases_common:
            ph = tx_common[i]
            rot = complex(math.cos(ph), math.sin(ph))
            for l in range(na):
                acc = 0j
                for a in range(n_act):
                    acc += E[l, act[a]]
                y[l] = acc * rot * x + noise[i, l]
        else:
            for l in range(na):
                acc = 0j
                for t in range(n_tx):
                    s = 0j
                    for a in range(n_act):
                        s += T[l, act[a], t]
                    ph = tx_phases[i, t]
                    acc += s * complex(math.cos(ph), math.sin(ph))
                y[l] = acc * x + noise[i, l]

        z_max = -1.0
        k_max = 0
        j_hat = 0
        for k in range(na):
            zk = 2.0 * (y[k].real * y[k].real + y[k].imag * y[k].imag) / sigma2
            if zk > z_max:
                z_max = zk
                k_max = k
            if zk >= gamma:
                j_hat |= 1 << (na - 1 - k)
        if j_hat == 0:
            j_hat = 1 << (na - 1 - k_max)

        diff = j_true ^ j_hat
        while diff:
            diff &= diff - 1
            sp_err += 1

        w_hat = 0
        y_sum = 0j
        for k in range(na):
            if (j_hat >> (na - 1 - k)) & 1:
                w_hat += 1
                y_sum += y[k]
        rp = rx_phase[i]
        rx_rot = complex(math.cos(rp), math.sin(rp))
        y_c = rx_rot * y_sum / (w_hat * sqrt_alpha)

        if not pn_aware:
            best = 0
            best_d = 1e300
            for j in range(n_points):
                dre = y_c.real - points[j].real
                dim = y_c.imag - points[j].imag
                d = dre * dre + dim * dim
                if d < best_d:
                    best_d = d
                    best = j
            diff = w ^ best
            while diff:
                diff &= diff - 1
                mq_err += 1
            continue

        pool_hat = j_to_pool[j_hat]
        c0 = pool_symbols[pool_hat, 0]
        c1 = pool_symbols[pool_hat, 1]
        if compensation == 2:
            y_sum = 0j
            for k in range(na):
                if (j_hat >> (na - 1 - k)) & 1:
                    yk = y[k] / sqrt_alpha
                    d0 = _d2(yk, c0)
                    d1 = _d2(yk, c1)
                    ref = c0 if d0 <= d1 else c1
                    dphi = math.atan2(yk.imag, yk.real) - math.atan2(ref.imag, ref.real)
                    dphw = (dphi + _HALF_PI) % math.pi - _HALF_PI
                    y_sum += y[k] * complex(math.cos(-dphw), math.sin(-dphw))
            y_c = rx_rot * y_sum / (w_hat * sqrt_alpha)
            b_hat = _single_index(y_c, c0, c1)
        elif compensation == 1:
            b_hat = _single_index(y_c, c0, c1)
        else:
            b_hat = 0 if _d2(y_c, c0) <= _d2(y_c, c1) else 1
        diff = (w >> 1) ^ pool_hat
        while diff:
            diff &= diff - 1
            mq_err += 1
        if (w & 1) != b_hat:
            mq_err += 1
    return sp_err, mq_err


def _d2_py(a, b):
    dre = a.real - b.real
    dim = a.imag - b.imag
    return dre * dre + dim * dim


def _single_index_py(y_c, c0, c1):
    d0 = _d2(y_c, c0)
    d1 = _d2(y_c, c1)
    ref = c0 if d0 <= d1 else c1
    dphi = math.atan2(y_c.imag, y_c.real) - math.atan2(ref.imag, ref.real)
    dphw = (dphi + _HALF_PI) % math.pi - _HALF_PI
    y2 = y_c * complex(math.cos(-dphw), math.sin(-dphw))
    return 0 if _d2(y2, c0) <= _d2(y2, c1) else 1


if _HAVE_NUMBA:
    _d2 = njit(cache=True, nogil=True)(_d2_py)
    _single_index = njit(cache=True, nogil=True)(_single_index_py)
    _run_chunk_numba = njit(cache=True, nogil=True)(_kernel_body)
else:
    _d2 = _d2_py
    _single_index = _single_index_py
    _run_chunk_numba = None
