"""Exact conjugate Bayesian inference over a discrete break grid.

Given the break, the prior is ``gamma | sigma2 ~ N(mu0, sigma2 H0^{-1})`` and
``sigma2 ~ InvGamma(a0, b0)``.  The break index has prior weights on the
grid and zero mass elsewhere.  Everything is closed form, so the break
posterior is enumerated and the joint posterior is sampled by composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import optimize, special, stats

from breakbayes.errors import DegeneratePosteriorError, DomainError, SingularDesignError
from breakbayes.intervals import IntervalKind, IntervalSet
from breakbayes.model import BreakGrid, Dataset, break_sweep, build_design

_DRAW_BLOCK = 10_000
_B_REL_TOL = 1e-13


@dataclass(frozen=True)
class ConjugatePrior:
    """Normal-inverse-gamma prior on the slopes and variance.

    Parameters
    ----------
    mu0, H0, a0, b0 : prior location, precision (PSD), shape and scale.
    tau_weights : array_like, optional
        Unnormalised prior weights aligned with the break grid; uniform when
        omitted.
    improper : bool
        Use the ``sigma^{-2}`` reference prior, i.e. ``H0 = 0`` with
        effective ``a0 = -p/2`` and ``b0 = 0``.
    """

    mu0: np.ndarray
    H0: np.ndarray
    a0: float
    b0: float
    tau_weights: np.ndarray | None = None
    improper: bool = False

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        p = mu0.size
        H0 = np.asarray(self.H0, dtype=np.float64).reshape(p, p)
        if not np.allclose(H0, H0.T, rtol=1e-12, atol=1e-14):
            raise DomainError("H0 must be symmetric")
        H0 = 0.5 * (H0 + H0.T)
        if self.improper:
            if np.any(H0 != 0.0):
                raise DomainError("an improper prior requires H0 = 0")
        else:
            if np.linalg.eigvalsh(H0).min() < -1e-12 * max(1.0, np.abs(H0).max()):
                raise DomainError("H0 must be positive semi-definite")
            if not (self.a0 > 0 and self.b0 > 0):
                raise DomainError("a proper prior needs a0 > 0 and b0 > 0")
        w = None
        if self.tau_weights is not None:
            w = np.asarray(self.tau_weights, dtype=np.float64).ravel()
            if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
                raise DomainError("tau_weights must be finite, non-negative and not all zero")
            w = w.copy()
            w.flags.writeable = False
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "H0", H0)
        object.__setattr__(self, "tau_weights", w)

    @classmethod
    def default(cls, p: int, tau_weights=None) -> "ConjugatePrior":
        """``H0 = 0.1 I``, ``mu0 = 0``, ``a0 = b0 = 1``."""
        return cls(np.zeros(p), 0.1 * np.eye(p), 1.0, 1.0, tau_weights)

    @classmethod
    def flat(cls, p: int, tau_weights=None) -> "ConjugatePrior":
        return cls(np.zeros(p), np.zeros((p, p)), 0.0, 0.0, tau_weights, improper=True)

    @property
    def p(self) -> int:
        return self.mu0.size

    @property
    def a0_eff(self) -> float:
        return -0.5 * self.p if self.improper else float(self.a0)

    @property
    def b0_eff(self) -> float:
        return 0.0 if self.improper else float(self.b0)

    def log_tau_weights(self, n: int) -> np.ndarray:
        if self.tau_weights is None:
            return np.zeros(n)
        if self.tau_weights.size != n:
            raise DomainError(f"tau_weights has {self.tau_weights.size} entries, grid has {n}")
        with np.errstate(divide="ignore"):
            return np.log(self.tau_weights / self.tau_weights.sum())

    def check_sample_size(self, T: int) -> None:
        if self.improper and T <= 2 * self.p + 2:
            raise DomainError(f"the improper prior needs T > 2p + 2 = {2 * self.p + 2}")


@dataclass(frozen=True)
class ConjugatePosteriorAtTau:
    H_bar: np.ndarray
    mu_bar: np.ndarray
    a_bar: float
    b_bar: float
    log_ml: float
    break_index: int | None = None


def _degenerate(b_bar, scale) -> np.ndarray:
    return np.asarray(b_bar) <= _B_REL_TOL * max(scale, 1e-300)


def conjugate_update(prior: ConjugatePrior, D: np.ndarray, y: np.ndarray,
                     log_prior_tau: float = 0.0, break_index: int | None = None
                     ) -> ConjugatePosteriorAtTau:
    """Posterior given design ``D`` and response ``y`` (no break structure)."""
    D = np.asarray(D, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    H_bar = prior.H0 + D.T @ D
    try:
        L = scipy.linalg.cholesky(H_bar, lower=True)
    except np.linalg.LinAlgError:
        raise SingularDesignError(-1 if break_index is None else break_index,
                                  "posterior precision is singular") from None
    d = np.abs(np.diag(L))
    if d.min() <= 1e-8 * d.max():
        raise SingularDesignError(-1 if break_index is None else break_index,
                                  "posterior precision is numerically singular")
    mu_bar = scipy.linalg.cho_solve((L, True), prior.H0 @ prior.mu0 + D.T @ y)
    r = y - D @ mu_bar
    dm = mu_bar - prior.mu0
    a_bar = prior.a0_eff + 0.5 * y.size
    b_bar = prior.b0_eff + 0.5 * (r @ r + dm @ prior.H0 @ dm)
    scale = prior.b0_eff + 0.5 * (y @ y + prior.mu0 @ prior.H0 @ prior.mu0)
    if _degenerate(b_bar, scale):
        raise DegeneratePosteriorError(
            f"posterior scale b_bar={b_bar:.3g} is not positive (exact fit?)"
        )
    logdet = 2.0 * float(np.sum(np.log(d)))
    log_ml = -0.5 * logdet - a_bar * math.log(b_bar) + log_prior_tau
    return ConjugatePosteriorAtTau(H_bar, mu_bar, float(a_bar), float(b_bar), float(log_ml),
                                   break_index)


def update_at_tau(prior: ConjugatePrior, ds: Dataset, break_index: int,
                  log_prior_tau: float = 0.0) -> ConjugatePosteriorAtTau:
    """Conjugate posterior with the break held at ``break_index``.

    ``log_ml`` omits constants shared by every break index; add
    ``log_prior_tau`` for the break prior.
    """
    prior.check_sample_size(ds.T)
    return conjugate_update(prior, build_design(ds, break_index), ds.y, log_prior_tau,
                            int(break_index))


def log_evidence(prior: ConjugatePrior, post: ConjugatePosteriorAtTau, T: int) -> float:
    """Exact log marginal likelihood ``log p(y | k)`` for a proper prior with PD ``H0``."""
    if prior.improper:
        raise DomainError("the evidence is undefined under an improper prior")
    _, ld0 = np.linalg.slogdet(prior.H0)
    _, ld1 = np.linalg.slogdet(post.H_bar)
    a0, b0 = prior.a0, prior.b0
    return float(
        -0.5 * T * math.log(2.0 * math.pi) + 0.5 * ld0 - 0.5 * ld1
        + a0 * math.log(b0) - special.gammaln(a0)
        + special.gammaln(post.a_bar) - post.a_bar * math.log(post.b_bar)
    )


@dataclass(frozen=True)
class TauPosterior:
    """Marginal posterior of the break index with the per-index posteriors.

    ``mode_index`` is a break index (not a grid position); ties go to the
    smallest index.
    """

    grid: BreakGrid
    log_probs: np.ndarray
    mode_index: int
    entropy: float
    log_ml: np.ndarray
    a_bar: float
    b_bar: np.ndarray
    mu_bar: np.ndarray
    hinv: np.ndarray
    logdet: np.ndarray = field(repr=False)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def mode_fraction(self) -> float:
        return self.mode_index / self.grid.T

    def at(self, k: int) -> ConjugatePosteriorAtTau:
        j = self.grid.position(k)
        H = np.linalg.inv(self.hinv[j])
        return ConjugatePosteriorAtTau(0.5 * (H + H.T), self.mu_bar[j], self.a_bar,
                                       float(self.b_bar[j]), float(self.log_ml[j]), int(k))

    def mean(self) -> np.ndarray:
        """Posterior mean of the slopes (mixture of the per-index means)."""
        return self.probs @ self.mu_bar


def tau_posterior(prior: ConjugatePrior, ds: Dataset, grid: BreakGrid) -> TauPosterior:
    if prior.p != ds.p:
        raise DomainError(f"prior has dimension {prior.p}, data has {ds.p}")
    prior.check_sample_size(ds.T)
    H0 = None if prior.improper else prior.H0
    sw = break_sweep(ds, grid.indices, H0=H0, mu0=prior.mu0)
    if not np.all(sw.ok):
        raise SingularDesignError(int(grid.indices[~sw.ok][0]))
    a_bar = prior.a0_eff + 0.5 * ds.T
    b_bar = prior.b0_eff + 0.5 * sw.ssr
    scale = prior.b0_eff + 0.5 * (ds.y @ ds.y + prior.mu0 @ prior.H0 @ prior.mu0)
    bad = _degenerate(b_bar, scale)
    if np.any(bad):
        k = int(grid.indices[bad][0])
        raise DegeneratePosteriorError(f"posterior scale is not positive at break index {k}")
    log_ml = -0.5 * sw.logdet - a_bar * np.log(b_bar) + prior.log_tau_weights(len(grid))
    log_probs = log_ml - special.logsumexp(log_ml)
    p = np.exp(log_probs)
    entropy = float(-np.sum(special.xlogy(p, p)))
    mode = int(grid.indices[int(np.argmax(log_probs))])
    return TauPosterior(grid, log_probs, mode, entropy, log_ml, float(a_bar), b_bar,
                        sw.coef, sw.hinv, sw.logdet)


@dataclass(frozen=True)
class MultivariateT:
    df: float
    loc: np.ndarray
    shape: np.ndarray

    def marginal(self, j: int):
        """Frozen scipy univariate t of component ``j``."""
        return stats.t(self.df, loc=self.loc[j], scale=math.sqrt(self.shape[j, j]))

    def frozen(self):
        return stats.multivariate_t(self.loc, self.shape, df=self.df)


@dataclass(frozen=True)
class InvGamma:
    a: float
    b: float

    @property
    def mean(self) -> float:
        return self.b / (self.a - 1.0) if self.a > 1 else math.inf

    def frozen(self):
        return stats.invgamma(self.a, scale=self.b)


def gamma_conditional(post: ConjugatePosteriorAtTau) -> MultivariateT:
    shape = (post.b_bar / post.a_bar) * np.linalg.inv(post.H_bar)
    return MultivariateT(2.0 * post.a_bar, post.mu_bar, 0.5 * (shape + shape.T))


def sigma2_conditional(post: ConjugatePosteriorAtTau) -> InvGamma:
    return InvGamma(post.a_bar, post.b_bar)


@dataclass(frozen=True)
class JointDraws:
    break_index: np.ndarray
    tau: np.ndarray
    sigma2: np.ndarray
    gamma: np.ndarray


def _batched_chol(hinv: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(0.5 * (hinv + np.transpose(hinv, (0, 2, 1))))


def sample_joint(prior: ConjugatePrior, ds: Dataset, grid: BreakGrid, n_draws: int,
                 seed: int = 0, tp: TauPosterior | None = None) -> JointDraws:
    """i.i.d. draws of ``(tau, sigma2, gamma)`` by exact composition.

    Blocks of ``_DRAW_BLOCK`` draws use independent streams split from
    ``seed``.
    """
    if n_draws < 1:
        raise DomainError("n_draws must be >= 1")
    tp = tau_posterior(prior, ds, grid) if tp is None else tp
    probs = tp.probs / tp.probs.sum()
    L = _batched_chol(tp.hinv)
    p = tp.mu_bar.shape[1]
    pos = np.empty(n_draws, dtype=np.int64)
    s2 = np.empty(n_draws)
    g = np.empty((n_draws, p))
    for b, lo in enumerate(range(0, n_draws, _DRAW_BLOCK)):
        n = min(_DRAW_BLOCK, n_draws - lo)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        j = rng.choice(probs.size, size=n, p=probs)
        sig2 = tp.b_bar[j] / rng.gamma(tp.a_bar, 1.0, size=n)
        z = rng.standard_normal((n, p))
        pos[lo:lo + n] = j
        s2[lo:lo + n] = sig2
        g[lo:lo + n] = tp.mu_bar[j] + np.sqrt(sig2)[:, None] * np.einsum("nab,nb->na", L[j], z)
    ks = grid.indices[pos]
    return JointDraws(ks, ks / grid.T, s2, g)


def _mixture_t(tp: TauPosterior, j: int, prune: float = 1e-15):
    w = tp.probs
    keep = w > prune * w.max()
    w = w[keep] / w[keep].sum()
    loc = tp.mu_bar[keep, j]
    scale = np.sqrt(tp.b_bar[keep] / tp.a_bar * tp.hinv[keep, j, j])
    return w, loc, scale, 2.0 * tp.a_bar


def mixture_cdf(tp: TauPosterior, j: int, x):
    w, loc, scale, df = _mixture_t(tp, j)
    x = np.asarray(x, dtype=np.float64)
    return np.sum(w * stats.t.cdf((x[..., None] - loc) / scale, df), axis=-1)


def credible_interval_gamma(prior: ConjugatePrior, ds: Dataset, grid: BreakGrid,
                            component_j: int, level: float,
                            tp: TauPosterior | None = None) -> IntervalSet:
    """Equal-tailed interval from the exact mixture-of-t posterior CDF."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    tp = tau_posterior(prior, ds, grid) if tp is None else tp
    j = int(component_j)
    w, loc, scale, df = _mixture_t(tp, j)

    def cdf(x: float) -> float:
        return float(w @ stats.t.cdf((x - loc) / scale, df))

    ends = []
    for q in (0.5 * (1.0 - level), 0.5 * (1.0 + level)):
        comp = loc + scale * stats.t.ppf(q, df)
        lo, hi = float(comp.min()), float(comp.max())
        if hi - lo <= 1e-12 * max(1.0, abs(lo)):
            ends.append(0.5 * (lo + hi))
            continue
        ends.append(optimize.brentq(lambda x: cdf(x) - q, lo, hi, xtol=1e-10))
    point = float(w @ loc)
    return IntervalSet.interval(IntervalKind.EQUAL_TAILED, level, ends[0], ends[1], point)


def hpd_set_tau(tp: TauPosterior, level: float) -> IntervalSet:
    """Smallest set of grid indices, by descending mass, reaching ``level``."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    p = tp.probs
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    n = int(np.searchsorted(cum, level - 1e-12)) + 1
    members = tp.grid.indices[order[: min(n, p.size)]]
    return IntervalSet.from_indices(IntervalKind.HPD_SET, level, members, tp.grid.T,
                                    tp.mode_fraction, mass=float(cum[min(n, p.size) - 1]))


def mvt_logpdf(x: np.ndarray, loc: np.ndarray, prec: np.ndarray, logdet_shape: float,
               df: float) -> np.ndarray:
    """Multivariate-t log density given the inverse shape matrix."""
    p = loc.size
    d = x - loc
    maha = np.einsum("na,ab,nb->n", d, prec, d)
    return (special.gammaln(0.5 * (df + p)) - special.gammaln(0.5 * df)
            - 0.5 * p * math.log(df * math.pi) - 0.5 * logdet_shape
            - 0.5 * (df + p) * np.log1p(maha / df))


def mixture_logpdf(tp: TauPosterior, g: np.ndarray, prune: float = 1e-12) -> np.ndarray:
    """Log density of the marginal slope posterior at rows of ``g``."""
    w = tp.probs
    keep = np.flatnonzero(w > prune * w.max())
    lw = np.log(w[keep] / w[keep].sum())
    df = 2.0 * tp.a_bar
    p = tp.mu_bar.shape[1]
    terms = np.empty((keep.size, g.shape[0]))
    for i, j in enumerate(keep):
        c = tp.b_bar[j] / tp.a_bar
        prec = np.linalg.inv(tp.hinv[j]) / c
        logdet_shape = p * math.log(c) - tp.logdet[j]
        terms[i] = lw[i] + mvt_logpdf(g, tp.mu_bar[j], prec, logdet_shape, df)
    return special.logsumexp(terms, axis=0)


def tv_density_ratio(log_target: np.ndarray, log_sampled: np.ndarray) -> tuple[float, float]:
    """TV distance estimate ``0.5 E|1 - q/p|`` from draws of ``p`` and its MC SE."""
    r = np.abs(1.0 - np.exp(np.asarray(log_target) - np.asarray(log_sampled)))
    n = r.size
    se = 0.5 * float(np.std(r, ddof=1)) / math.sqrt(n) if n > 1 else math.nan
    return 0.5 * math.fsum(r) / n, se


def bvm_diagnostic(prior: ConjugatePrior, ds: Dataset, grid: BreakGrid, ls, n_draws: int = 4000,
                   seed: int = 0, tp: TauPosterior | None = None) -> tuple[float, float]:
    """TV distance between the slope posterior and its normal approximation.

    The approximation is ``N(gamma_hat, sigma2_hat V_hat^{-1} / T)`` from the
    least-squares fit ``ls``; TV is invariant to the ``sqrt(T)`` rescaling.
    Returns ``(estimate, monte_carlo_se)``.
    """
    tp = tau_posterior(prior, ds, grid) if tp is None else tp
    draws = sample_joint(prior, ds, grid, n_draws, seed, tp=tp)
    log_post = mixture_logpdf(tp, draws.gamma)
    cov = ls.sigma2_hat * np.linalg.inv(ls.V_hat) / ls.T
    log_norm = stats.multivariate_normal(ls.gamma_hat, cov).logpdf(draws.gamma)
    return tv_density_ratio(np.atleast_1d(log_norm), log_post)
