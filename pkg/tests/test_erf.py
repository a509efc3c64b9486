import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pelk.arch import preset
from pelk.erf import (
    ContributionMap,
    area_ratio,
    build_probe,
    contribution_map,
    ratio_table,
    single_layer_net,
    square_side,
)

from oracles import central_difference


def support_box(cmap):
    ys, xs = np.nonzero(cmap.support())
    return ys.min(), ys.max(), xs.min(), xs.max()


class TestContributionMap:
    def test_single_3x3(self):
        cmap = contribution_map(single_layer_net("dense", 3, seed=1), side=32)
        assert support_box(cmap) == (15, 17, 15, 17)

    def test_two_3x3(self):
        cmap = contribution_map(single_layer_net("dense", 3, seed=2, depth=2), side=32)
        assert support_box(cmap) == (14, 18, 14, 18)

    def test_peripheral_contains_dense(self):
        side = 64
        peri = contribution_map(single_layer_net("peripheral", 51, seed=0), side=side).support()
        dense = contribution_map(single_layer_net("dense", 7, seed=0), side=side).support()
        assert np.all(peri[dense])
        assert peri.sum() > dense.sum()
        assert peri.sum() == 51 * 51

    def test_stripe_support_is_cross(self):
        cmap = contribution_map(single_layer_net("stripe", 9, seed=0), side=32)
        assert cmap.support().sum() == 2 * 9 * 5 - 25

    def test_input_grad_matches_finite_differences(self):
        net = build_probe(preset("pelk-t"), channels=2, seed=0, depth_scale=0.34)
        x = np.random.default_rng(0).standard_normal((2, 32, 32))

        def central():
            y, _ = net.forward(x)
            return float(y[:, y.shape[1] // 2, y.shape[2] // 2].sum())

        grad = net.input_grad(x)
        rng = np.random.default_rng(1)
        idx = [tuple(rng.integers(0, s) for s in x.shape) for _ in range(20)]
        idx.append(tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(grad)), grad.shape)))
        fd = np.array([central_difference(central, x, i, eps=1e-5) for i in idx])
        an = np.array([grad[i] for i in idx])
        assert np.max(np.abs(fd - an)) <= 1e-6 * np.max(np.abs(an))

    def test_deterministic(self):
        a = contribution_map(preset("pelk-t"), seed=3, n_samples=2, side=32, channels=2)
        b = contribution_map(preset("pelk-t"), seed=3, n_samples=2, side=32, channels=2)
        assert a.scores.tobytes() == b.scores.tobytes()

    def test_pelk_wider_than_convnext(self):
        pk = contribution_map(preset("pelk-t"), seed=0, side=64, channels=2)
        cn = contribution_map(preset("convnext-t"), seed=0, side=64, channels=2)
        assert pk.support().sum() >= cn.support().sum()
        assert area_ratio(pk, 0.99) >= area_ratio(cn, 0.99) * 0.5

    @pytest.mark.parametrize("side", [30, 16, 0])
    def test_invalid_side(self, side):
        with pytest.raises(ValueError):
            contribution_map(preset("pelk-t"), side=side)

    def test_map_validation(self):
        with pytest.raises(ValueError):
            ContributionMap(-np.ones((4, 4)))
        with pytest.raises(ValueError):
            ContributionMap(np.ones((4, 5)))


class TestAreaRatio:
    @pytest.mark.parametrize("t", [0.2, 0.25, 0.3, 0.5])
    def test_uniform(self, t):
        side = 1024
        cmap = ContributionMap(np.ones((side, side)))
        R = square_side(cmap, t)
        # smallest odd R with R^2 >= t side^2
        R_oracle = math.ceil(math.sqrt(t) * side)
        R_oracle += (R_oracle % 2 == 0)
        assert R == R_oracle
        ring = (4 * R - 4) / side ** 2
        assert abs(area_ratio(cmap, t) - t) <= ring

    def test_center_delta(self):
        s = np.zeros((64, 64))
        s[32, 32] = 5.0
        for t in (0.01, 0.5, 1.0):
            assert area_ratio(ContributionMap(s), t) == (1 / 64) ** 2

    def test_indicator_half_mass(self):
        side = 1024
        s = np.zeros((side, side))
        s[256:768, 256:768] = 1
        cmap = ContributionMap(s)
        R = square_side(cmap, 0.5)
        # ring-sum oracle: square of side R holds R^2 ones while R <= 512
        target = 0.5 * 512 ** 2
        R_oracle = next(r for r in range(1, 513, 2) if r * r >= target)
        assert R == R_oracle == 363
        assert area_ratio(cmap, 0.5) <= 0.126

    def test_full_mass_covers_support(self):
        s = np.zeros((33, 33))
        s[10:20, 14:17] = 1.0
        R = square_side(ContributionMap(s), 1.0)
        assert R == 2 * 16 - 2 * 10 + 1  # reaches row 10 from center 16

    def test_whole_map(self):
        assert area_ratio(ContributionMap(np.ones((16, 16))), 1.0) == 1.0

    @pytest.mark.parametrize("t", [0, -0.1, 1.5])
    def test_invalid_t(self, t):
        with pytest.raises(ValueError):
            area_ratio(ContributionMap(np.ones((8, 8))), t)

    def test_zero_mass(self):
        with pytest.raises(ValueError):
            area_ratio(ContributionMap(np.zeros((8, 8))), 0.5)

    def test_table(self):
        rows = ratio_table(ContributionMap(np.ones((101, 101))), [0.2, 0.3, 0.5])
        assert [r[0] for r in rows] == [0.2, 0.3, 0.5]
        assert rows[0][2] <= rows[1][2] <= rows[2][2]

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**16), side=st.integers(3, 40),
           ts=st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
    def test_monotone_in_t(self, seed, side, ts):
        cmap = ContributionMap(np.random.default_rng(seed).random((side, side)))
        ts = sorted(ts)
        rs = [area_ratio(cmap, t) for t in ts]
        assert all(a <= b for a, b in zip(rs, rs[1:]))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**16), scale=st.floats(1e-3, 1e3),
           t=st.floats(0.01, 1.0))
    def test_scale_invariant(self, seed, scale, t):
        s = np.random.default_rng(seed).random((24, 24))
        assert area_ratio(ContributionMap(s), t) == area_ratio(ContributionMap(s * scale), t)

    @pytest.mark.parametrize("t", [1 / 16, 9 / 16, 0.5])
    def test_scale_invariant_on_exact_ties(self, t):
        s = np.ones((4, 4))
        for scale in (3.0, 0.1, 7.7):
            assert area_ratio(ContributionMap(s), t) == area_ratio(ContributionMap(s * scale), t)
