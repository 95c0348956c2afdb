"""Data representation and break-indexed least squares.

A break index ``k`` splits the sample into regime 1 (``t = 1..k``) and
regime 2 (``t = k+1..T``).  The regressors ``z_t = R' x_t`` pick up an
extra coefficient vector ``delta`` in regime 2, so the design at ``k`` is
``(X, Z_2k)`` with ``Z_2k`` equal to ``X R`` on rows ``t > k`` and zero
elsewhere.  Coefficients are ordered ``(beta, delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from breakbayes import kernels
from breakbayes.errors import DomainError, SingularDesignError

RANK_TOL = 1e-10


def strict_floor(a: float, tol: float = 1e-9) -> int:
    """Largest integer strictly smaller than ``a``.

    Values within ``tol`` of an integer are snapped first, so that
    ``strict_floor(0.3 * 100)`` is 29 despite the float product being
    slightly above 30.
    """
    r = round(a)
    if abs(a - r) <= tol * max(1.0, abs(a)):
        return int(r) - 1
    return math.floor(a)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


def numerical_rank(A: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Rank from a column-pivoted QR, relative to the largest pivot."""
    if A.size == 0:
        return 0
    r = scipy.linalg.qr(A, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.sum(d > rel_tol * d[0]))


@dataclass(frozen=True)
class Dataset:
    """Response, regressors and the break transformation ``R``.

    Parameters
    ----------
    y : array_like, shape (T,)
    X : array_like, shape (T, d_x)
    R : array_like, shape (d_x, d_z), optional
        Full column rank; defaults to the identity (pure change).
    labels : sequence of str, optional
        Per-observation time stamps, carried through to reports.
    """

    y: np.ndarray
    X: np.ndarray
    R: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DomainError(f"y must be (T,) and X (T, d_x); got {y.shape} and {X.shape}")
        R = np.eye(X.shape[1]) if self.R is None else np.asarray(self.R, dtype=np.float64)
        if R.ndim == 1:
            R = R[:, None]
        if R.ndim != 2 or R.shape[0] != X.shape[1] or R.shape[1] < 1:
            raise DomainError(f"R must be (d_x, d_z) with d_x={X.shape[1]}; got {R.shape}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DomainError("y and X must be finite")
        if not np.all(np.isfinite(R)) or numerical_rank(R) < R.shape[1]:
            raise DomainError("R must have full column rank")
        T, dx, dz = X.shape[0], X.shape[1], R.shape[1]
        if T < dx + dz + 2:
            raise DomainError(f"need T >= d_x + d_z + 2 = {dx + dz + 2}, got T={T}")
        if numerical_rank(X) < dx:
            raise SingularDesignError(0, "regressor matrix X is rank deficient")
        labels = None if self.labels is None else tuple(str(s) for s in self.labels)
        if labels is not None and len(labels) != T:
            raise DomainError("labels must have one entry per observation")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def dx(self) -> int:
        return self.X.shape[1]

    @property
    def dz(self) -> int:
        return self.R.shape[1]

    @property
    def p(self) -> int:
        """Number of slope coefficients ``d_x + d_z``."""
        return self.dx + self.dz

    @cached_property
    def Z(self) -> np.ndarray:
        z = self.X @ self.R
        z.flags.writeable = False
        return z

    def with_y(self, y) -> "Dataset":
        """Same regressors, new response (used by bootstraps and scaling checks)."""
        return Dataset(np.asarray(y), self.X, self.R, self.labels)


@dataclass(frozen=True)
class BreakGrid:
    """Admissible break indices ``k`` with ``trim*T < k < (1-trim)*T``."""

    T: int
    indices: np.ndarray
    trim: float | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise DomainError("break grid must be a non-empty 1-d sequence")
        if np.any(np.diff(idx) <= 0):
            raise DomainError("break grid must be strictly ascending")
        if idx[0] < 1 or idx[-1] > self.T - 1:
            raise DomainError(f"break indices must lie in 1..T-1 (T={self.T})")
        idx = idx.copy()
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @classmethod
    def trimmed(cls, T: int, trim: float = 0.05) -> "BreakGrid":
        if not 0.0 < trim < 0.5:
            raise DomainError(f"trim must lie in (0, 0.5), got {trim}")
        lo = _snap(trim * T)
        hi = _snap((1.0 - trim) * T)
        ks = [k for k in range(1, T) if lo < k < hi]
        if not ks:
            raise DomainError(f"no admissible break index for T={T}, trim={trim}")
        return cls(T, np.array(ks), trim)

    @classmethod
    def single(cls, T: int, k: int) -> "BreakGrid":
        return cls(T, np.array([k]))

    @property
    def fractions(self) -> np.ndarray:
        return self.indices / self.T

    def __len__(self) -> int:
        return self.indices.size

    def position(self, k: int) -> int:
        """Position of break index ``k`` in the grid."""
        j = int(np.searchsorted(self.indices, k))
        if j >= self.indices.size or self.indices[j] != k:
            raise DomainError(f"break index {k} is not on the grid")
        return j

    def nearest(self, k: int) -> int:
        """Grid index closest to ``k`` (smaller one on ties)."""
        return int(self.indices[np.argmin(np.abs(self.indices - k))])


def _snap(a: float, tol: float = 1e-9) -> float:
    r = round(a)
    return float(r) if abs(a - r) <= tol * max(1.0, abs(a)) else a


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit with the break fixed at ``break_index``."""

    gamma_hat: np.ndarray
    ssr: float
    sigma2_hat: float
    xtx: np.ndarray
    break_index: int
    dz: int = 1

    @property
    def beta_hat(self) -> np.ndarray:
        return self.gamma_hat[: self.gamma_hat.size - self.dz]

    @property
    def delta_hat(self) -> np.ndarray:
        return self.gamma_hat[self.gamma_hat.size - self.dz:]


def _check_index(ds: Dataset, k: int) -> int:
    k = int(k)
    if not 1 <= k <= ds.T - 1:
        raise DomainError(f"break index must lie in 1..{ds.T - 1}, got {k}")
    return k


def build_design(ds: Dataset, break_index: int) -> np.ndarray:
    """Design matrix ``(X, Z_2k)`` at break index ``k``."""
    k = _check_index(ds, break_index)
    Z2 = np.array(ds.Z, copy=True)
    Z2[:k] = 0.0
    return np.hstack([ds.X, Z2])


def ols_at_break(ds: Dataset, break_index: int) -> OlsFit:
    """OLS at a fixed break, solved by column-pivoted QR."""
    k = _check_index(ds, break_index)
    D = build_design(ds, k)
    Qm, Rm, piv = scipy.linalg.qr(D, mode="economic", pivoting=True)
    d = np.abs(np.diag(Rm))
    if d[0] == 0.0 or np.any(d <= RANK_TOL * d[0]):
        raise SingularDesignError(k)
    g = np.empty(ds.p)
    g[piv] = scipy.linalg.solve_triangular(Rm, Qm.T @ ds.y)
    resid = ds.y - D @ g
    ssr = float(resid @ resid)
    return OlsFit(g, ssr, ssr / ds.T, D.T @ D, k, ds.dz)


@dataclass(frozen=True)
class Sweep:
    """Per-index outputs of the break sweep (see ``kernels.break_sweep``).

    With prior pseudo-observations, ``ssr`` is the penalised residual sum
    ``min ||y - chi g||^2 + (g - mu0)' H0 (g - mu0)``, ``coef`` the
    corresponding minimiser and ``hinv`` the inverse of ``H0 + chi'chi``.
    """

    indices: np.ndarray
    ssr: np.ndarray
    logdet: np.ndarray
    coef: np.ndarray
    hinv: np.ndarray
    ok: np.ndarray


def _prior_rows(H0: np.ndarray, mu0: np.ndarray):
    lam, U = np.linalg.eigh(0.5 * (H0 + H0.T))
    keep = lam > RANK_TOL * max(lam.max(initial=0.0), 1e-300)
    P = np.sqrt(lam[keep])[:, None] * U[:, keep].T
    return P, P @ mu0


def break_sweep(
    ds: Dataset,
    indices: Sequence[int] | np.ndarray,
    H0: np.ndarray | None = None,
    mu0: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> Sweep:
    """Evaluate the break regression at every index in one pass.

    ``H0``/``mu0`` add the conjugate-prior penalty; ``y`` overrides the
    response (bootstrap replicates share the regressors).
    """
    ks = np.asarray(indices, dtype=np.int64)
    yv = ds.y if y is None else np.asarray(y, dtype=np.float64)
    T, dx = ds.T, ds.dx
    Xa, ya = ds.X, yv
    Pz = np.zeros((0, ds.dz))
    if H0 is not None and np.any(H0 != 0.0):
        mu0 = np.zeros(ds.p) if mu0 is None else np.asarray(mu0, dtype=np.float64)
        P, r = _prior_rows(np.asarray(H0, dtype=np.float64), mu0)
        Xa = np.vstack([ds.X, P[:, :dx]])
        ya = np.concatenate([yv, r])
        Pz = P[:, dx:]
    Qa, Ra = np.linalg.qr(Xa)
    qy = Qa.T @ ya
    e = ya - Qa @ qy
    rinv = scipy.linalg.solve_triangular(Ra, np.eye(dx))
    beta_x = rinv @ qy
    ssr, logdet_a, coef, hinv, ok = kernels.break_sweep(
        e[:T], Qa[:T], ds.Z, ks,
        Pz.T @ Pz, Qa[T:].T @ Pz, Pz.T @ e[T:],
        rinv, beta_x, float(e @ e), RANK_TOL,
    )
    logdet = logdet_a + 2.0 * np.sum(np.log(np.abs(np.diag(Ra))))
    return Sweep(ks, ssr, logdet, coef, hinv, ok)


@dataclass(frozen=True)
class SsrProfile:
    """``S_T(k)`` over a grid; NaN marks skipped (rank-deficient) indices."""

    indices: np.ndarray
    values: np.ndarray
    n_skipped: int = 0

    def argmin(self) -> int:
        """Minimising break index, smallest index on ties."""
        return int(self.indices[np.nanargmin(self.values)])

    def min(self) -> float:
        return float(np.nanmin(self.values))

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(k), float(v)) for k, v in zip(self.indices, self.values)]


def ssr_profile(ds: Dataset, grid: BreakGrid, on_singular: str = "raise", y=None) -> SsrProfile:
    """Sum of squared residuals at every grid index.

    ``on_singular='skip'`` leaves NaN at rank-deficient indices and counts
    them instead of raising.
    """
    sw = break_sweep(ds, grid.indices, y=y)
    n_bad = int(np.sum(~sw.ok))
    if n_bad:
        if on_singular == "raise":
            raise SingularDesignError(int(grid.indices[~sw.ok][0]))
        if n_bad == len(grid):
            raise SingularDesignError(int(grid.indices[0]), "every grid index is rank deficient")
    return SsrProfile(grid.indices, sw.ssr, n_bad)


def no_break_ssr(ds: Dataset) -> float:
    """SSR of regressing ``y`` on ``X`` alone."""
    g, *_ = np.linalg.lstsq(ds.X, ds.y, rcond=None)
    r = ds.y - ds.X @ g
    return float(r @ r)
