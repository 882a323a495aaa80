"""Oscillator phase-noise sampling and combined-rotation statistics.

Per-symbol phase noise is zero-mean Gaussian with an equicorrelated
covariance across transmit chains. A shared local oscillator corresponds to
correlation 1 (every chain sees the same sample); fully independent chains
correspond to correlation 0. The receiver contributes one additional
independent sample per symbol.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "PnMode",
    "PnConfig",
    "PnRealization",
    "build_covariance",
    "sample_pn",
    "combined_pn_term",
    "combined_pn_variance",
]


class PnMode(Enum):
    CLO = "clo"                  # common local oscillator, correlation 1
    INDEPENDENT = "independent"  # correlation 0
    GENERAL = "general"          # explicit correlation in [0, 1]


@dataclass(frozen=True)
class PnConfig:
    """Phase-noise variance (rad^2), correlation mode, and coefficient."""

    variance: float
    mode: PnMode = PnMode.CLO
    correlation: float | None = None

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError("phase-noise variance must be non-negative")
        if self.mode is PnMode.GENERAL:
            if self.correlation is None or not 0.0 <= self.correlation <= 1.0:
                raise ValueError("GENERAL mode needs a correlation in [0, 1]")
        elif self.correlation is not None and self.correlation != self.rho:
            raise ValueError(f"mode {self.mode.value} fixes correlation at {self.rho}")

    @property
    def rho(self) -> float:
        if self.mode is PnMode.CLO:
            return 1.0
        if self.mode is PnMode.INDEPENDENT:
            return 0.0
        return float(self.correlation)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class PnRealization:
    """One symbol slot of phase noise: per-chain transmit phases + receive phase."""

    tx_phases: np.ndarray  # float64, shape (n_chains,)
    rx_phase: float


def build_covariance(n_chains: int, cfg: PnConfig) -> np.ndarray:
    """Equicorrelated covariance: variance on the diagonal, rho*variance off it.

    Eigenvalues are variance*(1-rho) with multiplicity n-1 and
    variance*(1+(n-1)*rho), so the matrix is positive semidefinite for any
    rho in [0, 1].
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    rho = cfg.rho
    cov = np.full((n_chains, n_chains), rho * cfg.variance)
    np.fill_diagonal(cov, cfg.variance)
    return cov


def sample_pn(cfg: PnConfig, n_chains: int, rng: np.random.Generator) -> PnRealization:
    """Draw one phase-noise realization.

    The equicorrelated Gaussian is sampled as
    ``sigma * (sqrt(rho) * z0 + sqrt(1 - rho) * z_k)`` with independent
    standard normals, which reproduces the covariance exactly and makes the
    correlation-1 case a single scalar draw replicated bit-identically across
    chains. Transmit phases are drawn before the receive phase.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    sigma = cfg.sigma
    if cfg.mode is PnMode.CLO:
        common = sigma * rng.standard_normal()
        tx = np.full(n_chains, common)
    elif cfg.mode is PnMode.INDEPENDENT:
        tx = sigma * rng.standard_normal(n_chains)
    else:
        rho = cfg.rho
        z0 = rng.standard_normal()
        zk = rng.standard_normal(n_chains)
        tx = sigma * (math.sqrt(rho) * z0 + math.sqrt(1.0 - rho) * zk)
    rx = sigma * rng.standard_normal()
    return PnRealization(tx_phases=tx, rx_phase=float(rx))


def combined_pn_term(pn: PnRealization, active_flags: np.ndarray,
                     branch_to_chain: np.ndarray | None = None) -> complex:
    """Average transmit rotation over active branches, times the receive rotation.

    ``active_flags`` is the detected activation bit vector; branch ``k`` uses
    the transmit phase of chain ``branch_to_chain[k]`` (identity by default).
    With no active branch the guarded denominator yields exactly 0.
    """
    flags = np.asarray(active_flags)
    idx = np.arange(flags.size) if branch_to_chain is None else np.asarray(branch_to_chain)
    acc = 0j
    n_active = 0
    for k in range(flags.size):
        if flags[k]:
            acc += cmath.exp(1j * pn.tx_phases[idx[k]])
            n_active += 1
    return cmath.exp(1j * pn.rx_phase) * acc / max(n_active, 1)


def combined_pn_variance(n_active: int, variance: float) -> float:
    """First-order variance of the combined rotation angle: (1 + 1/n) * variance."""
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    return (1.0 + 1.0 / n_active) * variance
