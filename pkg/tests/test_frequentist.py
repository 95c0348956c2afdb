from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from breakbayes.errors import DivergingArgmaxError, DomainError
from breakbayes.frequentist import (LsEstimate, break_ci_wstar, ilr_set, ls_at_break, ls_fit,
                                    lr_profile, slope_ci)
from breakbayes.intervals import IntervalKind
from breakbayes.model import BreakGrid, Dataset, SsrProfile, ssr_profile
from breakbayes.simulation import DgpSpec, generate

from conftest import make_dataset


def _toy():
    return Dataset(np.array([0, 0, 0, 1, 1, 1.0]), np.ones(6))


def _mean_shift(T=100, delta=1.0, rep=0, seed=3):
    return generate(DgpSpec(T, 0.5, (delta,), seed=seed), rep)


class TestLsFit:
    def test_noiseless_toy(self):
        ls = ls_fit(_toy(), BreakGrid(6, np.arange(1, 6)))
        assert ls.break_index == 3 and ls.tau_hat == 0.5
        assert ls.delta_hat[0] == pytest.approx(1.0, abs=1e-12)
        assert ls.ssr < 1e-25

    def test_fields(self, ds40):
        g = BreakGrid.trimmed(40)
        ls = ls_fit(ds40, g)
        prof = ssr_profile(ds40, g)
        assert ls.break_index == prof.indices[np.nanargmin(prof.values)]
        assert ls.ssr == pytest.approx(prof.min(), rel=1e-10)
        assert ls.sigma2_hat == pytest.approx(ls.ssr / (40 - ds40.p))
        np.testing.assert_allclose(ls.V_hat, ls.V_hat.T)
        assert np.linalg.eigvalsh(ls.V_hat).min() > 0

    def test_mae_large_jump(self):
        """delta0=2, T=1000: MAE of the break fraction rounds to 0.01 on the x10 scale."""
        g = BreakGrid.trimmed(1000)
        err = [abs(ls_fit(_mean_shift(1000, 2.0, r), g).break_index - 499) / 1000 for r in range(150)]
        assert round(10 * np.mean(err), 2) == 0.01

    def test_ls_at_break(self, ds40):
        ls = ls_at_break(ds40, 11)
        assert ls.break_index == 11 and ls.profile.indices.tolist() == [11]


class TestSlopeCi:
    def _ls(self, T=100):
        return LsEstimate(0.5, 50, np.array([0.3, 1.0]), 1.0, np.eye(2), 1.0, T, 1,
                          SsrProfile(np.array([50]), np.array([1.0])))

    def test_half_width(self):
        ci = slope_ci(self._ls(), 0.95, 1)
        assert ci.kind is IntervalKind.SLOPE_CI
        assert (ci.upper - ci.lower) / 2 == pytest.approx(1.959964 / 10, rel=1e-6)
        assert ci.contains(ci.point)

    def test_all_components(self):
        cis = slope_ci(self._ls(), 0.9)
        assert len(cis) == 2 and cis[0].point == 0.3

    def test_bad_level(self):
        with pytest.raises(DomainError):
            slope_ci(self._ls(), 1.0)

    def test_root_T_shrinkage(self):
        def mean_half(T):
            g = BreakGrid.trimmed(T)
            return np.mean([slope_ci(ls_fit(_mean_shift(T, 1.0, r), g), 0.95, 1).length / 2
                            for r in range(200)])

        ratio = mean_half(400) / mean_half(200)
        assert ratio == pytest.approx(1 / math.sqrt(2), rel=0.10)

    def test_length_matches_known_break_formula(self):
        """Mean-shift at k0: length = 2 z sqrt(s2 (1/k0 + 1/(T-k0))) exactly."""
        ds = _mean_shift(100, 1.0)
        ls = ls_at_break(ds, 49)
        want = 2 * 1.959964 * math.sqrt(ls.sigma2_hat * (1 / 49 + 1 / 51))
        assert slope_ci(ls, 0.95, 1).length == pytest.approx(want, rel=1e-6)


class TestBreakCiWstar:
    def test_huge_jump_degenerates(self):
        ds = _mean_shift(100, 20.0)
        ls = ls_fit(ds, BreakGrid.trimmed(100))
        emp = break_ci_wstar(ls, ds, 0.95, 2000, seed=1, z_draw="empirical")
        assert emp.lower == emp.upper == ls.tau_hat
        gau = break_ci_wstar(ls, ds, 0.95, 2000, seed=1)
        assert gau.contains(ls.tau_hat) and gau.length <= 3 / 100 + 1e-12

    def test_contains_point_and_clipped(self):
        ds = _mean_shift(100, 0.6)
        ls = ls_fit(ds, BreakGrid.trimmed(100))
        ci = break_ci_wstar(ls, ds, 0.95, 1000, seed=2)
        assert 0.0 <= ci.lower <= ci.point <= ci.upper <= 1.0

    def test_monotone_in_jump(self):
        ds = _mean_shift(100, 1.0)
        ls = ls_fit(ds, BreakGrid.trimmed(100))
        lengths = []
        for d in (0.5, 1.0, 2.0, 4.0):
            l2 = replace(ls, gamma_hat=np.array([ls.gamma_hat[0], d]))
            lengths.append(break_ci_wstar(l2, ds, 0.95, 4000, m_range=800, seed=7).length)
        assert all(a >= b for a, b in zip(lengths, lengths[1:])), lengths

    def test_diverging(self):
        ds = _mean_shift(100, 1.0)
        ls = ls_fit(ds, BreakGrid.trimmed(100))
        tiny = replace(ls, gamma_hat=np.array([ls.gamma_hat[0], 1e-5]))
        with pytest.raises(DivergingArgmaxError):
            break_ci_wstar(tiny, ds, 0.95, 1000)

    def test_min_sims(self):
        ds = _mean_shift(100, 1.0)
        with pytest.raises(DomainError):
            break_ci_wstar(ls_fit(ds, BreakGrid.trimmed(100)), ds, 0.95, 500)


class TestIlrSet:
    def test_contains_ls_and_nested(self):
        ds = _mean_shift(100, 0.7)
        g = BreakGrid.trimmed(100)
        ls = ls_fit(ds, g)
        assert lr_profile(ls)[g.position(ls.break_index)] == 0.0
        sets = [set(ilr_set(ds, g, ls, lv, 199, seed=4).indices) for lv in (0.5, 0.9, 0.99)]
        assert ls.break_index in sets[0]
        assert sets[0] <= sets[1] <= sets[2]

    def test_union_of_runs(self):
        ds = _mean_shift(100, 0.5, rep=2)
        g = BreakGrid.trimmed(100)
        s = ilr_set(ds, g, ls_fit(ds, g), 0.95, 199, seed=1)
        assert s.length == pytest.approx(len(s.indices) / 100)
        for (a, b), (c, d) in zip(s.intervals, s.intervals[1:]):
            assert b < c
        for a, b in s.intervals:
            assert a <= b

    def test_exact_fit(self):
        ds = _toy()
        g = BreakGrid(6, np.arange(1, 6))
        s = ilr_set(ds, g, ls_fit(ds, g), 0.95, 199)
        assert s.indices == (3,)

    def test_min_boot(self, ds40):
        g = BreakGrid.trimmed(40)
        with pytest.raises(DomainError):
            ilr_set(ds40, g, ls_fit(ds40, g), 0.95, 50)

    def test_skips_singular(self):
        X = np.column_stack([np.ones(40), np.r_[np.zeros(8), np.linspace(1, 3, 32)]])
        rng = np.random.default_rng(0)
        ds = Dataset(X @ [0.0, 1.0] + (np.arange(40) >= 20) * X[:, 1] + rng.standard_normal(40),
                     X, np.array([[0.0], [1.0]]))
        g = BreakGrid(40, np.arange(2, 38))
        ls = ls_fit(ds, g, on_singular="skip")
        s = ilr_set(ds, g, ls, 0.9, 199, seed=1)
        assert s.info["n_skipped"] > 0
        assert all(k > 8 for k in s.indices)
