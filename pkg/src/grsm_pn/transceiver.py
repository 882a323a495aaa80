"""One symbol slot: transmit, energy-based spatial detection, combining,
and maximum-likelihood symbol detection with optional phase compensation.

These are the reference implementations, written for clarity and used by the
test suite; the batch kernels in :mod:`grsm_pn.kernels` replay the same
decisions over packed arrays and are cross-checked against this module.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import chi2, ncx2

from .channel import ChannelRealization
from .constellation import Constellation, Pool
from .mapping import SpatialPattern
from .phase_noise import PnRealization

__all__ = [
    "Compensation",
    "DetectorConfig",
    "ReceivedVector",
    "transmit",
    "transmit_signal",
    "energy_threshold",
    "detect_spatial",
    "combine",
    "ml_detect",
    "wrap_phase",
    "single_stage_compensate",
    "double_stage_compensate",
]

_HALF_PI = math.pi / 2.0


class Compensation(Enum):
    NONE = "none"
    SINGLE_STAGE = "single"
    DOUBLE_STAGE = "double"


@dataclass(frozen=True)
class DetectorConfig:
    """Energy threshold on normalized branch energy plus the detection flavor."""

    threshold: float
    compensation: Compensation = Compensation.NONE

    def __post_init__(self):
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class ReceivedVector:
    y: np.ndarray            # complex128, shape (n_branches,)
    noise_variance: float    # total complex noise variance per branch


def transmit_signal(pattern: SpatialPattern, symbol: complex,
                    ch: ChannelRealization, pn: PnRealization) -> np.ndarray:
    """Noiseless received vector: sqrt(alpha) * H_a * diag(e^{j phi}) * B * s * x."""
    s = np.asarray(pattern.bits, dtype=np.float64)
    rotated_b = np.exp(1j * pn.tx_phases)[:, None] * ch.B
    return math.sqrt(ch.alpha) * (ch.H_a @ (rotated_b @ (s * symbol)))


def transmit(pattern: SpatialPattern, symbol: complex, ch: ChannelRealization,
             pn: PnRealization, noise_variance: float,
             rng: np.random.Generator) -> ReceivedVector:
    """Apply the exact transmit chain and add complex AWGN per branch.

    ``noise_variance`` is the total complex variance per branch, split evenly
    between the real and imaginary parts. Real noise is drawn before
    imaginary noise so the stream layout is reproducible.
    """
    if noise_variance < 0.0:
        raise ValueError("noise variance must be non-negative")
    clean = transmit_signal(pattern, symbol, ch, pn)
    n = pattern.width
    scale = math.sqrt(noise_variance / 2.0)
    noise = scale * rng.standard_normal(n) + 1j * (scale * rng.standard_normal(n))
    return ReceivedVector(y=clean + noise, noise_variance=noise_variance)


def _energy_error(gamma: float, lambdas: np.ndarray, prior_active: float) -> float:
    """Prior-weighted spatial decision error at threshold ``gamma``.

    False alarms come from the central chi-square branch statistic, misses
    from the noncentral one averaged over the constellation points.
    """
    false_alarm = chi2.sf(gamma, 2)
    miss = float(np.mean(ncx2.cdf(gamma, 2, lambdas)))
    return (1.0 - prior_active) * false_alarm + prior_active * miss


def energy_threshold(noise_variance: float, c: Constellation, alpha: float,
                     prior_active: float = 0.5) -> float:
    """Threshold on z = 2|y|^2 / sigma^2 minimizing the prior-weighted error.

    The objective is unimodal in the threshold (monotone likelihood ratio of
    the two branch statistics), so a golden-section search on the logarithm
    converges to the global minimum; relative tolerance 1e-6.
    """
    if noise_variance <= 0.0:
        raise ValueError("noise variance must be positive")
    if not 0.0 < prior_active < 1.0:
        raise ValueError("prior must be in (0, 1)")
    lambdas = 2.0 * alpha * np.abs(c.points) ** 2 / noise_variance
    lo = math.log(1e-6)
    hi = math.log(2.0 * float(lambdas.max()) + 50.0)
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1 = _energy_error(math.exp(x1), lambdas, prior_active)
    f2 = _energy_error(math.exp(x2), lambdas, prior_active)
    while (b - a) > 1e-6:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = _energy_error(math.exp(x1), lambdas, prior_active)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = _energy_error(math.exp(x2), lambdas, prior_active)
    return math.exp((a + b) / 2.0)


@lru_cache(maxsize=256)
def _cached_threshold(noise_variance: float, order: int, alpha: float,
                      prior_active: float) -> float:
    from .constellation import build_mqam

    return energy_threshold(noise_variance, build_mqam(order), alpha, prior_active)


def detect_spatial(y: ReceivedVector, gamma: float) -> SpatialPattern:
    """Per-branch 1-bit energy decision with an all-zero fallback.

    A branch is declared active when 2|y_k|^2 / sigma^2 reaches the
    threshold. If no branch fires, the single branch with the largest
    normalized energy is activated (the all-zero pattern is not a codeword).
    """
    if gamma <= 0.0:
        raise ValueError("threshold must be positive")
    if y.noise_variance <= 0.0:
        raise ValueError("spatial detection needs a positive noise variance")
    z = 2.0 * np.abs(y.y) ** 2 / y.noise_variance
    bits = (z >= gamma).astype(int)
    if not bits.any():
        bits[int(np.argmax(z))] = 1
    return SpatialPattern.from_bits(bits)


def combine(y: ReceivedVector, pattern_hat: SpatialPattern, rx_phase: float,
            alpha: float) -> complex:
    """Average the active branches onto constellation scale.

    The receive-oscillator rotation rides on the combined sample; dividing by
    the active count and sqrt(alpha) puts the result next to the bare
    constellation points used by the detectors.
    """
    active = np.asarray(pattern_hat.bits, dtype=bool)
    total = complex(y.y[active].sum())
    return cmath.exp(1j * rx_phase) * total / (pattern_hat.weight * math.sqrt(alpha))


def ml_detect(y_c: complex, candidates: Sequence[complex]) -> tuple[complex, int]:
    """Nearest candidate in Euclidean distance; ties go to the lowest index."""
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    best_idx = 0
    best_d = abs(y_c - candidates[0]) ** 2
    for i in range(1, len(candidates)):
        d = abs(y_c - candidates[i]) ** 2
        if d < best_d:
            best_d, best_idx = d, i
    return complex(candidates[best_idx]), best_idx


def wrap_phase(delta: float) -> float:
    """Fold a phase difference into [-pi/2, pi/2)."""
    return (delta + _HALF_PI) % math.pi - _HALF_PI


def _single_stage_index(y_c: complex, pool: Pool) -> int:
    """Tentative decision, wrapped derotation, then re-detection. Returns 0/1."""
    _, tentative = ml_detect(y_c, pool.symbols)
    dphi = cmath.phase(y_c) - cmath.phase(pool.symbols[tentative])
    corrected = y_c * cmath.exp(-1j * wrap_phase(dphi))
    _, winner = ml_detect(corrected, pool.symbols)
    return winner


def single_stage_compensate(y_c: complex, pool_hat: Pool) -> complex:
    """Symbol-assisted derotation of the combined sample, decided in the pool.

    The angular mismatch to the tentative in-pool decision is wrapped into
    [-pi/2, pi/2) before derotation; the pi separation inside every pool
    makes that interval the unambiguous correction range.
    """
    return pool_hat.symbols[_single_stage_index(y_c, pool_hat)]


def double_stage_compensate(y: ReceivedVector, pattern_hat: SpatialPattern,
                            pool_hat: Pool, rx_phase: float,
                            alpha: float) -> complex:
    """Per-branch derotation before combining, then a combined-stage pass.

    Stage one estimates and removes each active branch's rotation against the
    pool pair (on constellation scale); stage two combines the corrected
    branches, picks up the receive-oscillator rotation, and applies the
    single-stage correction to the residual common phase.
    """
    sqrt_alpha = math.sqrt(alpha)
    corrected = np.array(y.y, copy=True)
    for k, bit in enumerate(pattern_hat.bits):
        if not bit:
            continue
        branch = complex(y.y[k]) / sqrt_alpha
        _, tentative = ml_detect(branch, pool_hat.symbols)
        dphi = cmath.phase(branch) - cmath.phase(pool_hat.symbols[tentative])
        corrected[k] = y.y[k] * cmath.exp(-1j * wrap_phase(dphi))
    y_c = combine(ReceivedVector(y=corrected, noise_variance=y.noise_variance),
                  pattern_hat, rx_phase, alpha)
    return single_stage_compensate(y_c, pool_hat)
