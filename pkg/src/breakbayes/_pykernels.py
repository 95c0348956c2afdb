"""Pure numpy implementations of the hot loops.

``break_sweep`` evaluates, for every candidate break index ``k``, the
regression of ``y`` on ``(X, Z_2k)`` where ``Z_2k`` keeps the rows of ``Z``
after ``k`` and zeroes the rest.  It works on the Frisch-Waugh reduced
problem: with ``X = Q R`` and ``e`` the residual of ``y`` on ``X``, the
post-break block enters only through the suffix sums

    S_zz(k) = zz0 + sum_{t>k} z_t z_t'
    C(k)    = qz0 + sum_{t>k} q_t z_t'
    b(k)    = ze0 + sum_{t>k} z_t e_t

so that ``A(k) = S_zz - C'C = Z_2k' M Z_2k``, ``delta(k) = A^{-1} b`` and
``ssr(k) = e'e - b' A^{-1} b``.  The ``*0`` terms carry rows that are always
present (the pseudo-observations of a conjugate prior); they are zero for a
plain least-squares fit.
"""

from __future__ import annotations

import numpy as np


def _suffix(arr: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Sums of ``arr[k:]`` along axis 0 for each ``k`` in ``ks``."""
    total = np.zeros((arr.shape[0] + 1,) + arr.shape[1:])
    np.cumsum(arr[::-1], axis=0, out=total[1:])
    # total[j] = sum of the last j rows
    return total[arr.shape[0] - ks]


def _batched_cholesky(A: np.ndarray, scale: np.ndarray, rel_tol: float):
    nk, d, _ = A.shape
    L = np.zeros_like(A)
    ok = scale > 0.0
    for a in range(d):
        for c in range(a + 1):
            s = A[:, a, c] - np.einsum("kr,kr->k", L[:, a, :c], L[:, c, :c])
            if a == c:
                good = s > rel_tol * scale
                ok &= good
                L[:, a, a] = np.sqrt(np.where(good, s, 1.0))
            else:
                L[:, a, c] = s / L[:, c, c]
    return L, ok


def break_sweep(e, Q, Z, ks, zz0, qz0, ze0, rinv, beta_x, ee, rel_tol):
    ks = np.asarray(ks, dtype=np.int64)
    nk = ks.shape[0]
    dx = Q.shape[1]
    dz = Z.shape[1]
    p = dx + dz

    szz = zz0 + _suffix(np.einsum("ta,tc->tac", Z, Z), ks)
    C = qz0 + _suffix(np.einsum("ti,ta->tia", Q, Z), ks)
    b = ze0 + _suffix(Z * e[:, None], ks)
    A = szz - np.einsum("kia,kic->kac", C, C)
    scale = np.max(np.diagonal(szz, axis1=1, axis2=2), axis=1)

    L, ok = _batched_cholesky(A, scale, rel_tol)
    Ls = np.where(ok[:, None, None], L, np.eye(dz))
    logdet = 2.0 * np.sum(np.log(np.diagonal(Ls, axis1=1, axis2=2)), axis=1)

    w = np.linalg.solve(Ls, b[..., None])[..., 0]
    quad = np.sum(w * w, axis=1)
    Linv = np.linalg.inv(Ls)
    Ainv = np.einsum("kra,krc->kac", Linv, Linv)
    delta = np.einsum("kac,kc->ka", Ainv, b)
    ssr = np.maximum(ee - quad, 0.0)

    B = np.einsum("ir,kra->kia", rinv, C)
    BA = np.einsum("kir,kra->kia", B, Ainv)
    coef = np.empty((nk, p))
    coef[:, :dx] = beta_x - np.einsum("kia,ka->ki", B, delta)
    coef[:, dx:] = delta

    hinv = np.empty((nk, p, p))
    hinv[:, :dx, :dx] = rinv @ rinv.T + np.einsum("kia,kra->kir", BA, B)
    hinv[:, :dx, dx:] = -BA
    hinv[:, dx:, :dx] = -np.transpose(BA, (0, 2, 1))
    hinv[:, dx:, dx:] = Ainv

    bad = ~ok
    if bad.any():
        ssr[bad] = np.nan
        logdet[bad] = np.nan
        coef[bad] = np.nan
        hinv[bad] = 0.0
    return ssr, logdet, coef, hinv, ok


def walk_argmax(incr):
    path = np.cumsum(incr, axis=1)
    arg = np.argmax(path, axis=1)
    best = path[np.arange(path.shape[0]), arg]
    return best, arg.astype(np.int64) + 1
