"""Limit objects of the fixed-jump break model.

``simulate_wstar`` draws the argmax of the two-sided random walk

    W*(0) = 0
    W*(m) = sum_{i=m+1}^{0} [ -(delta'z_i)^2 + 2 (delta'z_i) eps_i ],  m < 0
    W*(m) = sum_{i=1}^{m}   [ -(delta'z_i)^2 - 2 (delta'z_i) eps_i ],  m > 0

which is the limit law of ``floor(T (tau_hat - tau_0))``.  ``q_limit`` is
the probability limit of ``S_T(tau) / T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from breakbayes import kernels
from breakbayes.errors import DivergingArgmaxError, DomainError

BLOCK = 1000  # paths per RNG block; the unit of reproducibility
_CHUNK_ELEMS = 4_000_000


ZSampler = Callable[[np.random.Generator, tuple], np.ndarray]


@dataclass(frozen=True)
class WstarConfig:
    delta: np.ndarray
    sigma_z: np.ndarray
    sigma2: float
    m_range: int
    n_paths: int
    seed: int = 0

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.delta, dtype=np.float64))
        S = np.atleast_2d(np.asarray(self.sigma_z, dtype=np.float64))
        if S.shape != (d.size, d.size) or not np.allclose(S, S.T):
            raise DomainError("sigma_z must be a symmetric d_z x d_z matrix")
        if np.linalg.eigvalsh(S).min() <= 0:
            raise DomainError("sigma_z must be positive definite")
        if not self.sigma2 >= 0:
            raise DomainError("sigma2 must be non-negative")
        if self.m_range < 1 or self.n_paths < 1:
            raise DomainError("m_range and n_paths must be >= 1")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "sigma_z", S)

    @property
    def drift(self) -> float:
        """Mean per-step drift ``delta' Sigma_z delta``."""
        return float(self.delta @ self.sigma_z @ self.delta)


@dataclass(frozen=True)
class WstarSample:
    argmax: np.ndarray
    m_range: int
    boundary_fraction: float

    def quantiles(self, probs) -> np.ndarray:
        return np.quantile(self.argmax, probs, method="inverted_cdf")

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        values, counts = np.unique(self.argmax, return_counts=True)
        return values, counts


def gaussian_z(sigma_z: np.ndarray) -> ZSampler:
    L = np.linalg.cholesky(sigma_z)

    def draw(rng: np.random.Generator, shape: tuple) -> np.ndarray:
        return rng.standard_normal(shape + (L.shape[0],)) @ L.T

    return draw


def empirical_z(Z: np.ndarray) -> ZSampler:
    """Resample observed ``z_t`` rows with replacement."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))

    def draw(rng: np.random.Generator, shape: tuple) -> np.ndarray:
        return Z[rng.integers(0, Z.shape[0], size=shape)]

    return draw


def _arm(cfg: WstarConfig, block: int, arm: int, rows: int, z_sampler: ZSampler, impl=None):
    """Max and first maximiser of one arm for ``rows`` paths of a block."""
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(block, arm))
    rng_z, rng_e = (np.random.default_rng(s) for s in ss.spawn(2))
    sigma = math.sqrt(cfg.sigma2)
    sign = 1.0 if arm == 0 else -1.0
    M = cfg.m_range
    per = max(1, _CHUNK_ELEMS // (M * cfg.delta.size))
    best = np.empty(rows)
    arg = np.empty(rows, dtype=np.int64)
    for lo in range(0, rows, per):
        n = min(per, rows - lo)
        u = z_sampler(rng_z, (n, M)) @ cfg.delta
        eps = sigma * rng_e.standard_normal((n, M))
        incr = -u * u + sign * 2.0 * u * eps
        best[lo:lo + n], arg[lo:lo + n] = kernels.walk_argmax(incr, impl=impl)
    return best, arg


def simulate_wstar(cfg: WstarConfig, z_sampler: ZSampler | None = None, impl=None) -> WstarSample:
    """Sample ``argmax_m W*(m)`` on ``[-m_range, m_range]``.

    Ties go to the smallest ``|m|``, then to the negative side.  Paths come in
    blocks of ``BLOCK`` with independent streams per (block, arm, variable),
    so a larger ``n_paths`` with the same seed extends the sample without
    changing its prefix.
    """
    z_sampler = z_sampler or gaussian_z(cfg.sigma_z)
    out = np.empty(cfg.n_paths, dtype=np.int64)
    for b, lo in enumerate(range(0, cfg.n_paths, BLOCK)):
        rows = min(BLOCK, cfg.n_paths - lo)
        bl, al = _arm(cfg, b, 0, rows, z_sampler, impl)
        br, ar = _arm(cfg, b, 1, rows, z_sampler, impl)
        m = np.zeros(rows, dtype=np.int64)
        left = (bl > 0) & ((bl > br) | ((bl == br) & (al <= ar)))
        right = (br > 0) & ~left
        m[left] = -al[left]
        m[right] = ar[right]
        out[lo:lo + rows] = m
    frac = float(np.mean(np.abs(out) == cfg.m_range))
    return WstarSample(out, cfg.m_range, frac)


def initial_m_range(delta, sigma_z, sigma2) -> int:
    q = float(np.atleast_1d(delta) @ np.atleast_2d(sigma_z) @ np.atleast_1d(delta))
    if q <= 0:
        raise DivergingArgmaxError("zero jump: the argmax is not tight")
    return max(50, math.ceil(20.0 * sigma2 / q))


def simulate_wstar_adaptive(
    delta,
    sigma_z,
    sigma2: float,
    n_paths: int,
    seed: int = 0,
    m_range: int | None = None,
    max_boundary: float = 1e-3,
    cap: int = 10**6,
    z_sampler: ZSampler | None = None,
) -> WstarSample:
    """Double the window until at most ``max_boundary`` of paths hit its edge."""
    m = initial_m_range(delta, sigma_z, sigma2) if m_range is None else int(m_range)
    if m > cap:
        raise DivergingArgmaxError(
            f"the argmax needs a window of about {m} steps, beyond the cap of {cap}; "
            "the jump estimate is too small for this interval"
        )
    while True:
        cfg = WstarConfig(delta, sigma_z, sigma2, min(m, cap), n_paths, seed)
        sample = simulate_wstar(cfg, z_sampler)
        if sample.boundary_fraction <= max_boundary:
            return sample
        if m >= cap:
            raise DivergingArgmaxError(
                f"argmax hit the window edge in {sample.boundary_fraction:.2%} of paths at "
                f"m_range={cap}; the jump estimate is too small for this interval"
            )
        m *= 2


@dataclass(frozen=True)
class QLimitConfig:
    tau0: float
    delta0: np.ndarray
    sigma_x: np.ndarray
    R: np.ndarray
    sigma2_0: float

    def __post_init__(self):
        if not 0.0 < self.tau0 < 1.0:
            raise DomainError("tau0 must lie in (0, 1)")
        d = np.atleast_1d(np.asarray(self.delta0, dtype=np.float64))
        Sx = np.atleast_2d(np.asarray(self.sigma_x, dtype=np.float64))
        R = np.asarray(self.R, dtype=np.float64).reshape(Sx.shape[0], d.size)
        if np.linalg.eigvalsh(0.5 * (Sx + Sx.T)).min() <= 0:
            raise DomainError("sigma_x must be positive definite")
        object.__setattr__(self, "delta0", d)
        object.__setattr__(self, "sigma_x", Sx)
        object.__setattr__(self, "R", R)

    @property
    def jump_norm(self) -> float:
        """``delta0' R' Sigma_X R delta0``."""
        Rd = self.R @ self.delta0
        return float(Rd @ self.sigma_x @ Rd)


def q_limit(cfg: QLimitConfig, tau) -> np.ndarray | float:
    """Probability limit of ``S_T(tau)/T``; accepts scalars or arrays."""
    t = np.asarray(tau, dtype=np.float64)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise DomainError("tau must lie in (0, 1)")
    t0, q = cfg.tau0, cfg.jump_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        left = (t0 - t) * (1.0 - t0) / (1.0 - t) * q
        right = (t - t0) * (t0 / t) * q
    out = cfg.sigma2_0 + np.where(t <= t0, left, right)
    return float(out) if out.ndim == 0 else out
