"""Bit-to-signal mappings for spatial modulation frames.

Two mappers are provided. The classical mapper splits the incoming bits into
an activation-pattern word and an independently Gray-mapped MQAM word. The
PN-aware mapper drives the spatial pattern from the MQAM bits instead: the
leading bits pick a symbol pool, the trailing bit picks the symbol inside the
pool, and the activation pattern is drawn at random from the pool's allowed
index set, constrained only by Hamming weight so that sensitive pools ride on
high-diversity patterns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .constellation import Constellation, Pool, Sensitivity

__all__ = [
    "SpatialPattern",
    "PoolMapping",
    "MappingTable",
    "build_mapping_table",
    "classical_map",
    "classical_demap",
    "pn_aware_map",
    "pn_aware_demap",
    "hamming_weight",
    "spatial_bit_error_count",
]

# Bit-order convention: bit 1 of the pattern is the most significant bit of
# the decimal index J, so pattern 1101 <-> J=13 with weight 3.


def hamming_weight(j: int, width: int) -> int:
    """Popcount of the width-bit representation of ``j``."""
    if not 0 <= j < (1 << width):
        raise ValueError(f"index {j} out of range for width {width}")
    return bin(j).count("1")


@dataclass(frozen=True)
class SpatialPattern:
    """Receive-branch activation pattern with its decimal index and weight."""

    bits: tuple[int, ...]
    decimal: int
    weight: int

    @classmethod
    def from_index(cls, j: int, width: int) -> "SpatialPattern":
        if not 1 <= j < (1 << width):
            raise ValueError(f"pattern index {j} must be in [1, {(1 << width) - 1}]")
        bits = tuple((j >> (width - 1 - k)) & 1 for k in range(width))
        return cls(bits=bits, decimal=j, weight=sum(bits))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "SpatialPattern":
        bits = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("pattern bits must be 0/1")
        j = 0
        for b in bits:
            j = (j << 1) | b
        if j == 0:
            raise ValueError("the all-zeros pattern is excluded")
        return cls(bits=bits, decimal=j, weight=sum(bits))

    @property
    def width(self) -> int:
        return len(self.bits)


def spatial_bit_error_count(sent: SpatialPattern, detected: SpatialPattern) -> int:
    """Hamming distance between two activation patterns of equal width."""
    if sent.width != detected.width:
        raise ValueError("pattern widths differ")
    return bin(sent.decimal ^ detected.decimal).count("1")


@dataclass(frozen=True)
class PoolMapping:
    """Per-pool record: prefix bits, symbol pair, and allowed pattern indices."""

    pool: Pool
    bit_prefix: tuple[int, ...]
    allowed_j: tuple[int, ...]


@dataclass(frozen=True)
class MappingTable:
    order: int
    n_branches: int
    entries: tuple[PoolMapping, ...]

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    def pool_for_index(self, j: int) -> PoolMapping:
        """Entry whose allowed set contains ``j``; nearest-by-Hamming fallback.

        Every nonzero index is covered for the two reference configurations;
        the fallback only matters for generic tables whose allowed sets do not
        exhaust the index space (ties resolve to the smaller index, then the
        lower pool).
        """
        entry = self._index_lookup().get(j)
        if entry is not None:
            return entry
        best = None
        for e in self.entries:
            for cand in e.allowed_j:
                d = bin(cand ^ j).count("1")
                key = (d, cand, e.pool.index)
                if best is None or key < best[0]:
                    best = (key, e)
        return best[1]

    def _index_lookup(self) -> dict[int, PoolMapping]:
        lookup = getattr(self, "_lookup_cache", None)
        if lookup is None:
            lookup = {}
            for e in self.entries:
                for j in e.allowed_j:
                    lookup[j] = e
            object.__setattr__(self, "_lookup_cache", lookup)
        return lookup


# Allowed-index assignment for the 16QAM/4-branch reference configuration.
# The weight rules (low weight on robust pools, high weight on sensitive
# ones) do not pin down the split between pools of equal weight; this is the
# published assignment.
_ALLOWED_16QAM_4 = [(1, 2), (4, 8), (3, 5, 6), (9, 10, 12),
                    (7, 13), (11,), (14,), (15,)]


def _weight_split(pools: Sequence[Pool], n_branches: int) -> list[tuple[int, ...]]:
    """Rule-based allowed-index sets: low weights to robust pools, high to sensitive.

    Nonzero indices are split at half the maximum weight; each side is dealt
    to its pools as contiguous chunks of the (weight, value)-sorted list with
    sizes as equal as possible.
    """
    low_pools = [p for p in pools
                 if p.sensitivity in (Sensitivity.ROBUST, Sensitivity.UNIFORM)]
    high_pools = [p for p in pools if p.sensitivity is Sensitivity.SENSITIVE]
    if not high_pools:
        # Uniform sensitivity: first half of the pool list takes low weights.
        half = len(pools) // 2
        low_pools, high_pools = list(pools[:half]), list(pools[half:])
    w_split = n_branches // 2
    all_j = sorted(range(1, 1 << n_branches),
                   key=lambda j: (hamming_weight(j, n_branches), j))
    low = [j for j in all_j if hamming_weight(j, n_branches) <= w_split]
    high = [j for j in all_j if hamming_weight(j, n_branches) > w_split]
    if len(low) < len(low_pools) or len(high) < len(high_pools):
        raise ValueError(
            f"cannot satisfy the weight rule with {n_branches} branches "
            f"and {len(pools)} pools")

    def deal(values: list[int], count: int) -> list[tuple[int, ...]]:
        base, extra = divmod(len(values), count)
        out, pos = [], 0
        for i in range(count):
            size = base + (1 if i < extra else 0)
            out.append(tuple(values[pos:pos + size]))
            pos += size
        return out

    assigned: dict[int, tuple[int, ...]] = {}
    for pool, chunk in zip(low_pools, deal(low, len(low_pools))):
        assigned[pool.index] = chunk
    for pool, chunk in zip(high_pools, deal(high, len(high_pools))):
        assigned[pool.index] = chunk
    return [assigned[p.index] for p in pools]


def build_mapping_table(order: int, n_branches: int, pools: Sequence[Pool]) -> MappingTable:
    """Associate each pool with a prefix and a weight-constrained index set."""
    n_pools = len(pools)
    if n_pools != order // 2:
        raise ValueError(f"{order}QAM needs {order // 2} pools, got {n_pools}")
    if (1 << n_branches) - 1 < n_pools:
        raise ValueError(
            f"{n_branches} branches give only {(1 << n_branches) - 1} nonzero "
            f"patterns for {n_pools} pools")
    prefix_bits = (order.bit_length() - 1) - 1
    if (order, n_branches) == (16, 4):
        allowed = [tuple(a) for a in _ALLOWED_16QAM_4]
    else:
        allowed = _weight_split(pools, n_branches)
    entries = []
    for pool, js in zip(pools, allowed):
        prefix = tuple((pool.index >> (prefix_bits - 1 - b)) & 1
                       for b in range(prefix_bits))
        entries.append(PoolMapping(pool=pool, bit_prefix=prefix, allowed_j=js))
    return MappingTable(order=order, n_branches=n_branches, entries=tuple(entries))


def _bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def classical_map(bits: Sequence[int], c: Constellation,
                  n_branches: int) -> tuple[SpatialPattern, complex]:
    """Split the frame into pattern bits (first) and a Gray-labeled symbol (last)."""
    m = c.bits_per_symbol
    if len(bits) != n_branches + m:
        raise ValueError(f"expected {n_branches + m} bits, got {len(bits)}")
    pattern = SpatialPattern.from_bits(bits[:n_branches])
    label = _bits_to_int(bits[n_branches:])
    return pattern, complex(c.point_by_label[label])


def classical_demap(pattern_hat: SpatialPattern, label_hat: int,
                    c: Constellation) -> tuple[int, ...]:
    """Inverse of :func:`classical_map` given the detected pattern and label."""
    m = c.bits_per_symbol
    sym_bits = tuple((label_hat >> (m - 1 - b)) & 1 for b in range(m))
    return pattern_hat.bits + sym_bits


def pn_aware_map(bits: Sequence[int], table: MappingTable,
                 rng: np.random.Generator) -> tuple[SpatialPattern, complex]:
    """Map m MQAM bits to (random weight-constrained pattern, pool symbol).

    The leading m-1 bits select the pool, the last bit selects the symbol
    within it, and the pattern index is drawn uniformly from the pool's
    allowed set.
    """
    m = table.bits_per_symbol
    if len(bits) != m:
        raise ValueError(f"expected {m} bits, got {len(bits)}")
    entry = table.entries[_bits_to_int(bits[:-1])]
    j = entry.allowed_j[int(rng.integers(0, len(entry.allowed_j)))]
    symbol = entry.pool.symbols[int(bits[-1])]
    return SpatialPattern.from_index(j, table.n_branches), complex(symbol)


def pn_aware_demap(pattern_hat: SpatialPattern, y_c: complex, table: MappingTable,
                   detector: Callable[[complex, Pool], int]) -> tuple[int, ...]:
    """Recover the m MQAM bits from the detected pattern and combined sample.

    The pool is identified from the detected pattern index, which directly
    yields the prefix bits; ``detector(y_c, pool)`` returns the within-pool
    winner (0 or 1) and supplies the final bit.
    """
    entry = table.pool_for_index(pattern_hat.decimal)
    winner = detector(y_c, entry.pool)
    if winner not in (0, 1):
        raise ValueError("within-pool detector must return 0 or 1")
    return entry.bit_prefix + (winner,)
