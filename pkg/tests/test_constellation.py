import cmath
import math

import numpy as np
import pytest

from grsm_pn.constellation import (Constellation, PoolConstructionError,
                                   Sensitivity, build_mqam, build_pools,
                                   classify_symbols, overlap_probability,
                                   overlap_probability_numeric,
                                   pn_sensitivity)


class TestBuildMqam:
    def test_4qam_points_and_energy(self):
        c = build_mqam(4)
        assert sorted(map(complex, c.points), key=lambda z: (z.real, z.imag)) == \
            [-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]
        assert c.symbol_energy == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(np.abs(c.points), math.sqrt(2.0))

    def test_16qam_points_and_energy(self):
        c = build_mqam(16)
        lattice = {complex(re, im) for re in (-3, -1, 1, 3) for im in (-3, -1, 1, 3)}
        assert set(map(complex, c.points)) == lattice
        assert c.symbol_energy == pytest.approx(10.0, abs=1e-12)

    def test_labels_are_a_bijection(self):
        for order in (4, 16):
            c = build_mqam(order)
            assert sorted(c.labels) == list(range(order))

    def test_gray_labels_differ_by_one_bit_between_neighbors(self):
        c = build_mqam(16)
        by_point = {complex(p): int(l) for p, l in zip(c.points, c.labels)}
        for p, label in by_point.items():
            for dre, dim in ((2, 0), (0, 2)):
                q = p + complex(dre, dim)
                if q in by_point:
                    assert bin(label ^ by_point[q]).count("1") == 1

    @pytest.mark.parametrize("order", [2, 8, 32, 5])
    def test_unsupported_orders(self, order):
        with pytest.raises(ValueError):
            build_mqam(order)


class TestSensitivity:
    def test_balanced_symbol(self):
        rep = pn_sensitivity(3 - 3j, 0.1)
        assert rep.eps_re == pytest.approx(10.0, abs=1e-12)
        assert rep.eps_im == pytest.approx(10.0, abs=1e-12)

    def test_unbalanced_symbol(self):
        rep = pn_sensitivity(-3 - 1j, 0.1)
        assert rep.eps_re == pytest.approx(10.0 / 3.0, abs=1e-12)
        assert rep.eps_im == pytest.approx(30.0, abs=1e-12)

    def test_zero_phase(self):
        rep = pn_sensitivity(1 + 3j, 0.0)
        assert rep.eps_re == 0.0 and rep.eps_im == 0.0

    def test_axis_symbol_rejected(self):
        with pytest.raises(ValueError):
            pn_sensitivity(1 + 0j, 0.1)

    def test_classification(self):
        c16 = build_mqam(16)
        tags = classify_symbols(c16)
        robust = {p for p, t in tags.items() if t is Sensitivity.ROBUST}
        assert robust == {complex(re, im) for re in (-3, -1, 1, 3)
                          for im in (-3, -1, 1, 3) if abs(re) == abs(im)}
        assert len(robust) == 8
        assert tags[3 + 1j] is Sensitivity.SENSITIVE
        assert all(t is Sensitivity.UNIFORM
                   for t in classify_symbols(build_mqam(4)).values())

    def test_first_order_model_remainder_bound(self):
        # |x e^{j phi} - x (1 + j phi)| <= |x| phi^2 / 2 for the probe range
        c = build_mqam(16)
        for x in map(complex, c.points):
            for phi in np.linspace(-0.3, 0.3, 61):
                approx = x * (1.0 + 1j * phi)
                err = abs(x * cmath.exp(1j * phi) - approx)
                assert err <= abs(x) * phi * phi / 2.0 + 1e-12


class TestOverlap:
    def test_zero_separation_supremum(self):
        val = overlap_probability(0.3, 0.3, 0.1)
        assert val == pytest.approx(1.0 / (2.0 * math.sqrt(math.pi * 0.1)), rel=1e-12)
        for d in (0.1, 1.0, math.pi):
            assert overlap_probability(0.0, d, 0.1) < val

    def test_strictly_decreasing_in_separation(self):
        grid = np.linspace(1e-3, math.pi, 50)
        vals = [overlap_probability(0.0, d, 0.1) for d in grid]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            overlap_probability(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            overlap_probability_numeric(0.0, 1.0, 0.0)

    @pytest.mark.parametrize("dtheta", [0.0, math.pi / 4, math.pi / 2, math.pi])
    @pytest.mark.parametrize("variance", [0.01, 0.1])
    def test_closed_form_matches_quadrature(self, dtheta, variance):
        closed = overlap_probability(0.0, dtheta, variance)
        numeric = overlap_probability_numeric(0.0, dtheta, variance)
        assert numeric == pytest.approx(closed, rel=1e-9)

    def test_wrapping_of_separation(self):
        assert overlap_probability(0.0, 2 * math.pi - 0.2, 0.1) == \
            pytest.approx(overlap_probability(0.0, 0.2, 0.1), rel=1e-12)


class TestPools:
    def test_16qam_matches_published_layout(self):
        pools = build_pools(build_mqam(16))
        expected = [
            ((3 + 3j, -1 - 1j), Sensitivity.ROBUST),
            ((-3 - 3j, 1 + 1j), Sensitivity.ROBUST),
            ((-3 + 3j, 1 - 1j), Sensitivity.ROBUST),
            ((-1 + 1j, 3 - 3j), Sensitivity.ROBUST),
            ((-1 + 3j, 1 - 3j), Sensitivity.SENSITIVE),
            ((1 + 3j, -1 - 3j), Sensitivity.SENSITIVE),
            ((3 + 1j, -3 - 1j), Sensitivity.SENSITIVE),
            ((-3 + 1j, 3 - 1j), Sensitivity.SENSITIVE),
        ]
        assert [(p.symbols, p.sensitivity) for p in pools] == expected
        assert [p.index for p in pools] == list(range(8))

    def test_4qam_matches_published_layout(self):
        pools = build_pools(build_mqam(4))
        assert [p.symbols for p in pools] == [(-1 + 1j, 1 - 1j), (1 + 1j, -1 - 1j)]

    @pytest.mark.parametrize("order", [4, 16])
    def test_partition_and_pi_separation(self, order):
        c = build_mqam(order)
        pools = build_pools(c)
        seen = [s for p in pools for s in p.symbols]
        assert len(seen) == len(set(seen)) == order
        assert set(seen) == set(map(complex, c.points))
        tags = classify_symbols(c)
        for p in pools:
            assert abs(p.phase_separation - math.pi) <= 1e-12
            assert tags[p.symbols[0]] == tags[p.symbols[1]] == p.sensitivity

    def test_unpairable_symbols_rejected(self):
        fake = Constellation(order=4,
                             points=np.array([1 + 1j, 2 + 2j, -1 + 1j, 1 - 1j]),
                             labels=np.arange(4, dtype=np.int64),
                             symbol_energy=1.0)
        with pytest.raises(PoolConstructionError):
            build_pools(fake)
