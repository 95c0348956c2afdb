"""Dispatch between the compiled and the numpy kernels.

The compiled extension is used when it imports; setting the environment
variable ``BREAKBAYES_PURE_PYTHON=1`` forces the numpy path.  ``BACKEND``
names the selected implementation.
"""

from __future__ import annotations

import os

import numpy as np

from breakbayes import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("BREAKBAYES_PURE_PYTHON", "") != "1":
    try:
        from breakbayes import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def break_sweep(e, Q, Z, ks, zz0, qz0, ze0, rinv, beta_x, ee, rel_tol=1e-10, impl=None):
    """Per-break SSR, log det of the reduced Gram, coefficients and inverse Gram.

    Parameters
    ----------
    e : ndarray, shape (T,)
        Residuals of the response on the always-present block.
    Q : ndarray, shape (T, dx)
        Data rows of the orthonormal basis of the always-present block.
    Z : ndarray, shape (T, dz)
        Break-shifting regressors ``z_t``.
    ks : ndarray of int
        Ascending break indices; index ``k`` switches on rows ``t > k``.
    zz0, qz0, ze0 : ndarray
        Contributions of rows present at every ``k``.
    rinv : ndarray, shape (dx, dx)
        Inverse of the triangular factor of the always-present block.
    beta_x : ndarray, shape (dx,)
        Coefficients of the no-break fit.
    ee : float
        Residual sum of squares of the no-break fit.
    rel_tol : float
        Pivots below ``rel_tol`` times the largest diagonal entry of the
        unprojected post-break Gram mark the index as rank deficient.

    Returns
    -------
    ssr, logdet, coef, hinv, ok : ndarray
        ``ok[j]`` is False where the design at ``ks[j]`` is rank deficient;
        the other outputs are NaN there.
    """
    mod = _impl if impl is None else impl
    return mod.break_sweep(
        _c(e), _c(Q), _c(Z), _c(ks, np.int64), _c(zz0), _c(qz0), _c(ze0),
        _c(rinv), _c(beta_x), float(ee), float(rel_tol),
    )


def walk_argmax(incr, impl=None):
    """First maximiser (1-based) and maximum of each row's partial sums."""
    mod = _impl if impl is None else impl
    return mod.walk_argmax(_c(incr))
