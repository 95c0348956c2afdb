from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from breakbayes import _pykernels, kernels
from breakbayes.errors import DomainError, SingularDesignError
from breakbayes.model import (
    BreakGrid,
    Dataset,
    break_sweep,
    build_design,
    no_break_ssr,
    ols_at_break,
    ssr_profile,
    strict_floor,
)

from conftest import make_dataset


class TestStrictFloor:
    @pytest.mark.parametrize("a,k", [(50.0, 49), (0.3 * 100, 29), (49.5, 49), (0.5 * 20, 9), (1e-3, 0)])
    def test_values(self, a, k):
        assert strict_floor(a) == k

    def test_break_index_T100(self):
        assert strict_floor(0.5 * 100) == 49


class TestBreakGrid:
    def test_trimmed_T100(self):
        g = BreakGrid.trimmed(100)
        assert g.indices[0] == 6 and g.indices[-1] == 94 and len(g) == 89

    def test_trimmed_T20(self):
        g = BreakGrid.trimmed(20)
        assert list(g.indices) == list(range(2, 19))

    def test_fractions_strictly_inside(self):
        g = BreakGrid.trimmed(1000, 0.1)
        assert np.all(g.fractions > 0.1) and np.all(g.fractions < 0.9)

    def test_position_and_nearest(self):
        g = BreakGrid.trimmed(100)
        assert g.position(6) == 0
        assert g.nearest(2) == 6 and g.nearest(99) == 94
        with pytest.raises(DomainError):
            g.position(3)

    @pytest.mark.parametrize("bad", [[], [5, 5], [0, 3], [3, 100]])
    def test_invalid(self, bad):
        with pytest.raises(DomainError):
            BreakGrid(100, np.array(bad, dtype=int))

    def test_bad_trim(self):
        with pytest.raises(DomainError):
            BreakGrid.trimmed(100, 0.5)


class TestDataset:
    def test_defaults_and_readonly(self):
        ds = Dataset(np.arange(6.0), np.ones(6))
        assert ds.R.shape == (1, 1) and ds.p == 2
        with pytest.raises(ValueError):
            ds.y[0] = 1.0

    def test_rank_deficient_R(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros(10), np.ones((10, 2)) + np.eye(10, 2), R=np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_rank_deficient_X(self):
        X = np.column_stack([np.ones(10), np.ones(10)])
        with pytest.raises(SingularDesignError):
            Dataset(np.zeros(10), X)

    def test_nonfinite(self):
        with pytest.raises(DomainError):
            Dataset(np.array([0.0, np.nan, 1, 2, 3]), np.ones(5))

    def test_too_short(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros(3), np.ones(3))


class TestDesignAndOls:
    def test_build_design(self):
        ds = make_dataset(T=10, dx=2, shift=(1,))
        D = build_design(ds, 4)
        assert D.shape == (10, 3)
        assert np.all(D[:4, 2] == 0.0)
        np.testing.assert_array_equal(D[4:, 2], ds.X[4:, 1])

    def test_noiseless_mean_shift(self):
        ds = Dataset(np.array([0, 0, 0, 1, 1, 1.0]), np.ones(6))
        fit = ols_at_break(ds, 3)
        np.testing.assert_allclose(fit.gamma_hat, [0.0, 1.0], atol=1e-12)
        assert fit.ssr < 1e-25

    def test_matches_lstsq(self, ds40):
        for k in (5, 20, 33):
            D = build_design(ds40, k)
            g, *_ = np.linalg.lstsq(D, ds40.y, rcond=None)
            np.testing.assert_allclose(ols_at_break(ds40, k).gamma_hat, g, rtol=1e-10)

    def test_singular_regime(self):
        X = np.column_stack([np.ones(12), np.r_[np.zeros(6), np.arange(1.0, 7.0)]])
        ds = Dataset(np.arange(12.0), X, R=np.array([[0.0], [1.0]]))
        with pytest.raises(SingularDesignError) as exc:
            ols_at_break(ds, 3)
        assert exc.value.break_index == 3

    def test_index_range(self, ds40):
        with pytest.raises(DomainError):
            build_design(ds40, 40)


class TestSsrProfile:
    def test_matches_direct(self, ds40):
        g = BreakGrid.trimmed(40)
        prof = ssr_profile(ds40, g)
        direct = [ols_at_break(ds40, k).ssr for k in g.indices]
        np.testing.assert_allclose(prof.values, direct, rtol=1e-9)

    def test_argmin_tie_smallest(self):
        ds = Dataset(np.zeros(10) + np.r_[np.zeros(5), np.ones(5)] * 0.0, np.column_stack(
            [np.ones(10), np.linspace(0, 1, 10)]), R=np.array([[1.0], [0.0]]))
        prof = ssr_profile(ds, BreakGrid.trimmed(10, 0.1))
        assert prof.argmin() == prof.indices[0]

    def test_skip_singular(self):
        X = np.column_stack([np.ones(12), np.r_[np.zeros(6), np.arange(1.0, 7.0)]])
        ds = Dataset(np.arange(12.0) ** 1.5, X, R=np.array([[0.0], [1.0]]))
        g = BreakGrid(12, np.arange(2, 11))
        with pytest.raises(SingularDesignError):
            ssr_profile(ds, g)
        prof = ssr_profile(ds, g, on_singular="skip")
        # x2 is zero for t <= 6, so Z_2k duplicates x2 for every k <= 6
        assert prof.n_skipped == 5
        assert np.isnan(prof.values[:5]).all() and np.isfinite(prof.values[5:]).all()
        assert prof.argmin() >= 7

    def test_identity_ssr_equals_restricted_minus_reduction(self, rng):
        """S(k) = S_bar - V(k), with V(k) the projection of y onto M_X Z_2k."""
        for seed in range(50):
            ds = make_dataset(T=30, dx=3, shift=(0, 2), seed=seed)
            g = BreakGrid.trimmed(30, 0.15)
            prof = ssr_profile(ds, g)
            S_bar = no_break_ssr(ds)
            Mx = np.eye(30) - ds.X @ np.linalg.pinv(ds.X)
            for k, s in zip(g.indices, prof.values):
                W = Mx @ build_design(ds, k)[:, ds.dx:]
                v = Mx @ ds.y
                V = v @ W @ np.linalg.solve(W.T @ W, W.T @ v)
                assert abs(s - (S_bar - V)) <= 1e-10 * max(1.0, S_bar)


class TestSweepKernels:
    def _inputs(self, ds, ks, prior=False):
        return break_sweep(ds, ks, H0=(0.3 * np.eye(ds.p) if prior else None))

    @pytest.mark.parametrize("prior", [False, True])
    def test_python_and_compiled_agree(self, prior):
        if kernels.BACKEND != "cython":
            pytest.skip("compiled extension not built")
        from breakbayes import _ckernels

        ds = make_dataset(T=60, dx=3, shift=(0, 1), seed=4)
        ks = BreakGrid.trimmed(60).indices
        H0 = 0.3 * np.eye(ds.p) if prior else None
        import breakbayes.kernels as K

        orig = K._impl
        try:
            K._impl = _pykernels
            a = break_sweep(ds, ks, H0=H0)
            K._impl = _ckernels
            b = break_sweep(ds, ks, H0=H0)
        finally:
            K._impl = orig
        for f in ("ssr", "logdet", "coef", "hinv"):
            np.testing.assert_allclose(getattr(a, f), getattr(b, f), rtol=1e-10, atol=1e-12)

    def test_hinv_and_logdet(self):
        ds = make_dataset(T=30, dx=2, shift=(0, 1), seed=2)
        H0 = np.diag([0.2, 0.5, 1.0, 0.1])
        sw = break_sweep(ds, [7, 15], H0=H0, mu0=np.array([1.0, -1, 0.5, 0]))
        for j, k in enumerate((7, 15)):
            D = build_design(ds, k)
            H = H0 + D.T @ D
            np.testing.assert_allclose(sw.hinv[j], np.linalg.inv(H), rtol=1e-10)
            assert sw.logdet[j] == pytest.approx(np.linalg.slogdet(H)[1], rel=1e-12)

    @pytest.mark.parametrize("impl", ["python", "compiled"])
    def test_walk_argmax(self, impl, rng):
        mod = _pykernels
        if impl == "compiled":
            if kernels.BACKEND != "cython":
                pytest.skip("compiled extension not built")
            from breakbayes import _ckernels as mod
        incr = rng.standard_normal((50, 30))
        best, arg = kernels.walk_argmax(incr, impl=mod)
        path = np.cumsum(incr, axis=1)
        np.testing.assert_allclose(best, path.max(axis=1))
        np.testing.assert_array_equal(arg, path.argmax(axis=1) + 1)

    def test_walk_argmax_first_on_ties(self):
        best, arg = kernels.walk_argmax(np.array([[1.0, 0.0, 0.0, -1.0]]))
        assert arg[0] == 1 and best[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100.0))
def test_argmin_scale_invariance(seed, c):
    ds = make_dataset(T=30, seed=seed)
    g = BreakGrid.trimmed(30)
    k1 = ssr_profile(ds, g).argmin()
    k2 = ssr_profile(ds.with_y(c * ds.y), g).argmin()
    assert k1 == k2
