"""MQAM constellations, phase-noise sensitivity metrics, and symbol pools.

Symbols live on the unnormalized integer lattice ({-1,+1} per axis for 4QAM,
{-3,-1,+1,+3} for 16QAM) so that mean symbol energies are 2 and 10. A pool is
a two-symbol subset whose members sit on the same line through the origin
(phase difference of pi) and share the same phase-noise sensitivity class,
shrinking the within-pool detection search to a binary choice.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad

__all__ = [
    "Sensitivity",
    "Constellation",
    "Pool",
    "SensitivityReport",
    "build_mqam",
    "pn_sensitivity",
    "classify_symbols",
    "overlap_probability",
    "overlap_probability_numeric",
    "build_pools",
    "PoolConstructionError",
]

# Default probe phase (rad) used when reporting sensitivity tables.
SENSITIVITY_PROBE_PHASE = 0.1


class Sensitivity(Enum):
    ROBUST = "R"
    SENSITIVE = "S"
    UNIFORM = "U"


class PoolConstructionError(ValueError):
    """Raised when no pool partition satisfies the pairing criteria."""


@dataclass(frozen=True)
class Constellation:
    """Square MQAM constellation with Gray bit labels.

    ``points[i]`` carries the label ``labels[i]``; ``point_by_label[b]`` is the
    symbol whose Gray label has integer value ``b``.
    """

    order: int
    points: np.ndarray          # complex128, shape (M,)
    labels: np.ndarray          # int64, shape (M,), each m-bit label once
    symbol_energy: float

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    @property
    def point_by_label(self) -> np.ndarray:
        out = np.empty(self.order, dtype=np.complex128)
        out[self.labels] = self.points
        return out


@dataclass(frozen=True)
class Pool:
    """Ordered pair of pi-separated, equally-sensitive constellation symbols."""

    index: int                  # 0-based pool index; bit prefix = binary(index)
    symbols: tuple[complex, complex]
    sensitivity: Sensitivity

    @property
    def phase_separation(self) -> float:
        d = cmath.phase(self.symbols[0]) - cmath.phase(self.symbols[1])
        return abs((d + math.pi) % (2 * math.pi) - math.pi)

    @property
    def euclidean_distance(self) -> float:
        return abs(self.symbols[0] - self.symbols[1])


@dataclass(frozen=True)
class SensitivityReport:
    """Percent perturbation magnitudes of the real/imaginary components."""

    eps_re: float
    eps_im: float


def _gray_axis(levels: int) -> list[int]:
    """Gray codes for PAM levels ordered from most negative to most positive."""
    return [g ^ (g >> 1) for g in range(levels)]


def build_mqam(order: int) -> Constellation:
    """Build a square MQAM constellation on the odd-integer lattice.

    Gray labeling: the first half of each label addresses the real axis, the
    second half the imaginary axis, each axis independently Gray-coded.
    """
    if order < 4 or (order & (order - 1)) != 0 or int(math.isqrt(order)) ** 2 != order:
        raise ValueError(f"unsupported MQAM order {order}: need a square power of two")
    side = math.isqrt(order)
    bits_axis = side.bit_length() - 1
    amplitudes = np.arange(-(side - 1), side, 2)
    gray = _gray_axis(side)
    points = []
    labels = []
    for i, re in enumerate(amplitudes):
        for q, im in enumerate(amplitudes):
            points.append(complex(re, im))
            labels.append((gray[i] << bits_axis) | gray[q])
    pts = np.asarray(points, dtype=np.complex128)
    es = float(np.mean(np.abs(pts) ** 2))
    return Constellation(order=order, points=pts,
                         labels=np.asarray(labels, dtype=np.int64),
                         symbol_energy=es)


def pn_sensitivity(x: complex, phi: float) -> SensitivityReport:
    """First-order relative perturbation of a rotated symbol, in percent.

    A small common rotation ``phi`` changes the components of ``x`` by
    ``-phi*Im(x)`` and ``+phi*Re(x)``; the report carries the magnitudes of
    those changes relative to the unperturbed components.
    """
    if x.real == 0.0 or x.imag == 0.0:
        raise ValueError("sensitivity undefined for symbols on a coordinate axis")
    eps_re = -(phi * x.imag) / x.real * 100.0
    eps_im = (phi * x.real) / x.imag * 100.0
    return SensitivityReport(eps_re=abs(eps_re), eps_im=abs(eps_im))


def classify_symbols(c: Constellation) -> dict[complex, Sensitivity]:
    """Tag each symbol ROBUST (|Re| == |Im|) or SENSITIVE; 4QAM is UNIFORM."""
    if c.order == 4:
        return {complex(p): Sensitivity.UNIFORM for p in c.points}
    out = {}
    for p in c.points:
        p = complex(p)
        out[p] = Sensitivity.ROBUST if abs(p.real) == abs(p.imag) else Sensitivity.SENSITIVE
    return out


def _wrap_separation(theta1: float, theta2: float) -> float:
    """Absolute angular separation wrapped into [0, pi]."""
    d = abs((theta1 - theta2 + math.pi) % (2 * math.pi) - math.pi)
    return d


def overlap_probability(theta1: float, theta2: float, variance: float) -> float:
    """Closed-form overlap of two Gaussian phase densities with common variance.

    Equals ``exp(-d^2 / (4 s^2)) / (2 sqrt(pi) s)`` where ``d`` is the wrapped
    angular separation and ``s^2`` the phase variance.
    """
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    d = _wrap_separation(theta1, theta2)
    s = math.sqrt(variance)
    return math.exp(-(d * d) / (4.0 * variance)) / (2.0 * math.sqrt(math.pi) * s)


def overlap_probability_numeric(theta1: float, theta2: float, variance: float,
                                tol: float = 1e-12) -> float:
    """Quadrature of the product of the two phase densities.

    Integrates over +-12 standard deviations around the midpoint; raises if
    the integrator cannot reach the requested accuracy.
    """
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    s = math.sqrt(variance)
    d = _wrap_separation(theta1, theta2)
    mid = d / 2.0
    norm = 1.0 / (2.0 * math.pi * variance)

    def integrand(p: float) -> float:
        return norm * math.exp(-(p * p + (p - d) * (p - d)) / (2.0 * variance))

    val, abserr = quad(integrand, mid - 12.0 * s, mid + 12.0 * s,
                       epsabs=tol, epsrel=1e-12, limit=400)
    if abserr > max(tol, 1e-9 * abs(val)):
        raise RuntimeError(f"overlap quadrature did not converge: err={abserr:g}")
    return val


def _line_key(p: complex) -> tuple[int, int]:
    """Canonical key of the origin line through lattice point ``p``."""
    re, im = int(round(p.real)), int(round(p.imag))
    g = math.gcd(abs(re), abs(im))
    re, im = re // g, im // g
    if re < 0 or (re == 0 and im < 0):
        re, im = -re, -im
    return re, im


def _pair_symbols(c: Constellation) -> list[tuple[complex, complex, Sensitivity]]:
    """Pair symbols into pi-separated, sensitivity-homogeneous couples.

    Within each origin line and sensitivity class, the sorted negative-side
    points are matched to the sorted positive-side points one-for-one, which
    maximizes the minimum within-pair distance among pi-separated matchings.
    """
    tags = classify_symbols(c)
    groups: dict[tuple[tuple[int, int], Sensitivity], list[complex]] = {}
    for p in c.points:
        p = complex(p)
        groups.setdefault((_line_key(p), tags[p]), []).append(p)
    pairs = []
    for (line, tag), pts in groups.items():
        direction = complex(*line)
        direction /= abs(direction)
        proj = sorted(pts, key=lambda q: (q / direction).real)
        neg = [q for q in proj if (q / direction).real < 0]
        pos = [q for q in proj if (q / direction).real > 0]
        if len(neg) != len(pos) or len(neg) + len(pos) != len(pts):
            raise PoolConstructionError(
                f"symbols on line {line} cannot be paired across the origin")
        for a, b in zip(neg, pos):
            pairs.append((a, b, tag))
    return pairs


# Printed pool layouts (pool order and within-pool symbol order) for the two
# supported paper configurations; the generic pairing fixes only the pair
# *sets*, not their presentation order.
_POOL_LAYOUT: dict[int, list[tuple[complex, complex]]] = {
    4: [(-1 + 1j, 1 - 1j), (1 + 1j, -1 - 1j)],
    16: [
        (3 + 3j, -1 - 1j),
        (-3 - 3j, 1 + 1j),
        (-3 + 3j, 1 - 1j),
        (-1 + 1j, 3 - 3j),
        (-1 + 3j, 1 - 3j),
        (1 + 3j, -1 - 3j),
        (3 + 1j, -3 - 1j),
        (-3 + 1j, 3 - 1j),
    ],
}


def build_pools(c: Constellation) -> list[Pool]:
    """Partition the constellation into pi-separated symbol pools.

    Pool and symbol ordering follows the canonical layout for 4QAM/16QAM;
    other square orders fall back to a deterministic geometric ordering
    (robust pools first, then by line angle, larger-magnitude symbol first).
    """
    pairs = _pair_symbols(c)
    tags = classify_symbols(c)
    layout = _POOL_LAYOUT.get(c.order)
    if layout is not None:
        constructed = {frozenset((a, b)) for a, b, _ in pairs}
        wanted = [frozenset(pair) for pair in layout]
        if constructed != set(wanted):
            raise PoolConstructionError("geometric pairing does not match canonical layout")
        ordered = [(pair[0], pair[1], tags[pair[0]]) for pair in layout]
    else:
        def sort_key(item):
            a, b, tag = item
            rank = 0 if tag in (Sensitivity.ROBUST, Sensitivity.UNIFORM) else 1
            ang = cmath.phase(a if abs(a) >= abs(b) else b) % math.pi
            return (rank, ang, -max(abs(a), abs(b)))

        ordered = []
        for a, b, tag in pairs:
            first, second = (a, b) if abs(a) >= abs(b) else (b, a)
            ordered.append((first, second, tag))
        ordered.sort(key=sort_key)

    pools = []
    for idx, (a, b, tag) in enumerate(ordered):
        pool = Pool(index=idx, symbols=(a, b), sensitivity=tag)
        if abs(pool.phase_separation - math.pi) > 1e-12:
            raise PoolConstructionError(f"pool {idx} is not pi-separated")
        pools.append(pool)
    return pools
