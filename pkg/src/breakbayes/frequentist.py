"""Least-squares break estimation and its confidence sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from breakbayes.asymptotic import empirical_z, simulate_wstar_adaptive
from breakbayes.errors import DomainError
from breakbayes.intervals import IntervalKind, IntervalSet
from breakbayes.model import BreakGrid, Dataset, SsrProfile, build_design, ols_at_break, ssr_profile


@dataclass(frozen=True)
class LsEstimate:
    """Least-squares fit at the SSR-minimising break.

    ``sigma2_hat`` uses the ``T - d_x - d_z`` denominator and ``V_hat`` is
    ``chi'chi / T`` at the estimated break.
    """

    tau_hat: float
    break_index: int
    gamma_hat: np.ndarray
    sigma2_hat: float
    V_hat: np.ndarray
    ssr: float
    T: int
    dz: int
    profile: SsrProfile

    @property
    def delta_hat(self) -> np.ndarray:
        return self.gamma_hat[self.gamma_hat.size - self.dz:]

    @property
    def beta_hat(self) -> np.ndarray:
        return self.gamma_hat[: self.gamma_hat.size - self.dz]


def _check_level(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    return float(level)


def ls_fit(ds: Dataset, grid: BreakGrid, on_singular: str = "raise") -> LsEstimate:
    prof = ssr_profile(ds, grid, on_singular=on_singular)
    k = prof.argmin()
    fit = ols_at_break(ds, k)
    return _estimate(ds, fit, prof)


def ls_at_break(ds: Dataset, k: int) -> LsEstimate:
    """LS estimate with the break held at ``k`` (conditional protocols)."""
    fit = ols_at_break(ds, k)
    prof = SsrProfile(np.array([k]), np.array([fit.ssr]))
    return _estimate(ds, fit, prof)


def _estimate(ds: Dataset, fit, prof: SsrProfile) -> LsEstimate:
    T = ds.T
    return LsEstimate(
        tau_hat=fit.break_index / T,
        break_index=fit.break_index,
        gamma_hat=fit.gamma_hat,
        sigma2_hat=fit.ssr / (T - ds.p),
        V_hat=fit.xtx / T,
        ssr=fit.ssr,
        T=T,
        dz=ds.dz,
        profile=prof,
    )


def slope_ci(ls: LsEstimate, level: float, component: int | None = None):
    """Normal-approximation intervals for the slopes.

    Returns one ``IntervalSet`` for ``component``, or a list over all
    components when it is omitted.
    """
    level = _check_level(level)
    zq = stats.norm.ppf(0.5 * (1.0 + level))
    var = ls.sigma2_hat * np.diag(np.linalg.inv(ls.V_hat)) / ls.T
    half = zq * np.sqrt(np.maximum(var, 0.0))

    def one(j: int) -> IntervalSet:
        g = float(ls.gamma_hat[j])
        return IntervalSet.interval(IntervalKind.SLOPE_CI, level, g - half[j], g + half[j], g)

    if component is not None:
        return one(int(component))
    return [one(j) for j in range(ls.gamma_hat.size)]


def break_ci_wstar(
    ls: LsEstimate,
    ds: Dataset,
    level: float,
    n_sims: int = 2000,
    m_range: int | None = None,
    seed: int = 0,
    z_draw: str = "gaussian",
) -> IntervalSet:
    """Break-fraction interval from the simulated argmax of the W* process.

    Plug-ins are the estimated jump, the sample second moment of ``z_t``
    and ``sigma2_hat``; ``m_range`` is the starting window of the adaptive
    search.  ``z_draw='gaussian'`` draws ``z`` from ``N(0, Sigma_z_hat)``;
    ``'empirical'`` resamples the observed ``z_t`` instead.
    """
    level = _check_level(level)
    if n_sims < 1000:
        raise DomainError("n_sims must be at least 1000")
    if z_draw not in ("gaussian", "empirical"):
        raise DomainError(f"z_draw must be 'gaussian' or 'empirical', got {z_draw!r}")
    sigma_z = ds.Z.T @ ds.Z / ds.T
    sampler = empirical_z(ds.Z) if z_draw == "empirical" else None
    sample = simulate_wstar_adaptive(
        ls.delta_hat, sigma_z, ls.sigma2_hat, n_sims, seed=seed, m_range=m_range,
        z_sampler=sampler,
    )
    q_lo, q_hi = sample.quantiles([0.5 * (1.0 - level), 0.5 * (1.0 + level)])
    lo = min(max(ls.tau_hat + q_lo / ls.T, 0.0), 1.0)
    hi = min(max(ls.tau_hat + q_hi / ls.T, 0.0), 1.0)
    return IntervalSet.interval(
        IntervalKind.BREAK_CI, level, lo, hi, ls.tau_hat,
        m_range=sample.m_range, q_lo=int(q_lo), q_hi=int(q_hi),
    )


def lr_profile(ls: LsEstimate) -> np.ndarray:
    """``T log(S(k)/S(k_hat))`` on the profile grid (NaN where skipped)."""
    s = ls.profile.values
    with np.errstate(divide="ignore", invalid="ignore"):
        return ls.T * np.log(s / ls.profile.min())


def ilr_set(
    ds: Dataset,
    grid: BreakGrid,
    ls: LsEstimate,
    level: float,
    n_boot: int = 199,
    seed: int = 0,
) -> IntervalSet:
    """Inverted likelihood-ratio confidence set for the break fraction.

    The critical value is the ``level`` quantile of the LR statistic at the
    true break across parametric-bootstrap samples drawn from the fitted
    model with Gaussian errors.  Rank-deficient grid indices are left out
    and counted in ``info['n_skipped']``.
    """
    level = _check_level(level)
    if n_boot < 199:
        raise DomainError("n_boot must be at least 199")
    if ls.profile.indices.size != len(grid) or np.any(ls.profile.indices != grid.indices):
        ls = ls_fit(ds, grid, on_singular="skip")
    k_hat = ls.break_index
    n_skipped = ls.profile.n_skipped
    yy = max(float(ds.y @ ds.y), 1e-300)
    if ls.ssr <= 1e-28 * yy:
        # exact fit: only zero-SSR indices are plausible (sweep SSRs carry ~eps*y'y error)
        members = ls.profile.indices[ls.profile.values <= 1e-12 * yy]
        return IntervalSet.from_indices(IntervalKind.ILR_SET, level, members, ds.T, ls.tau_hat,
                                        critical_value=0.0, n_skipped=n_skipped)

    mean = build_design(ds, k_hat) @ ls.gamma_hat
    sigma = math.sqrt(ls.sigma2_hat)
    j_hat = grid.position(k_hat)
    lr_star = np.empty(n_boot)
    for b in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        y_b = mean + sigma * rng.standard_normal(ds.T)
        prof = ssr_profile(ds, grid, on_singular="skip", y=y_b)
        n_skipped += prof.n_skipped
        lr_star[b] = ds.T * math.log(prof.values[j_hat] / prof.min())
    c_star = float(np.quantile(lr_star, level, method="inverted_cdf"))
    lr = lr_profile(ls)
    members = ls.profile.indices[lr <= c_star]
    return IntervalSet.from_indices(IntervalKind.ILR_SET, level, members, ds.T, ls.tau_hat,
                                    critical_value=c_star, n_skipped=n_skipped)
