"""Pure-numpy implementation of the hot update kernels.

The measurement update of the trajectory filter spends nearly all of its
time in three batched operations per model hypothesis:

  * innovation statistics  S = H P[k,k] H' + R, gain K = P[:,k] H' S^-1 and
    the posterior covariance P - K (H P[k,:]),
  * Gaussian log-likelihoods of every measurement under N(zbar, S).

Both backends (this one and the compiled one in ``_native.pyx``) implement
the same function signatures and use the same closed-form 3x3 inversion so
their outputs agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def _inv3(s: np.ndarray):
    """Closed-form inverses of a (B, 3, 3) stack.

    Returns (inv, logdet, ok); rows with non-positive or non-finite
    determinant (or non-positive diagonal) are flagged not-ok and their
    inverse/logdet entries are unspecified.
    """
    a, b, c = s[:, 0, 0], s[:, 0, 1], s[:, 0, 2]
    d, e, f = s[:, 1, 0], s[:, 1, 1], s[:, 1, 2]
    g, h, i = s[:, 2, 0], s[:, 2, 1], s[:, 2, 2]
    c00 = e * i - f * h
    c01 = c * h - b * i
    c02 = b * f - c * e
    c10 = f * g - d * i
    c11 = a * i - c * g
    c12 = c * d - a * f
    c20 = d * h - e * g
    c21 = b * g - a * h
    c22 = a * e - b * d
    det = a * c00 + b * c10 + c * c20
    ok = np.isfinite(det) & (det > 0.0) & (a > 0.0) & (e > 0.0) & (i > 0.0)
    safe = np.where(ok, det, 1.0)
    inv = np.empty_like(s)
    inv[:, 0, 0] = c00
    inv[:, 0, 1] = c01
    inv[:, 0, 2] = c02
    inv[:, 1, 0] = c10
    inv[:, 1, 1] = c11
    inv[:, 1, 2] = c12
    inv[:, 2, 0] = c20
    inv[:, 2, 1] = c21
    inv[:, 2, 2] = c22
    inv /= safe[:, None, None]
    with np.errstate(invalid="ignore"):
        logdet = np.log(safe)
    return inv, logdet, ok


def innovation_batch(covs: np.ndarray, hs: np.ndarray, r: np.ndarray):
    """Innovation statistics for a stack of trajectory-window hypotheses.

    Parameters
    ----------
    covs : (B, d, d) active-window covariances, d a multiple of 6
    hs : (B, 3, 6) observation matrices (per-hypothesis linearizations)
    r : (3, 3) measurement noise covariance

    Returns
    -------
    ss, s_invs : (B, 3, 3)  innovation covariances and their inverses
    ks : (B, d, 3)          trajectory gains over the active window
    pus : (B, d, d)         posterior window covariances (symmetrized)
    logdets : (B,)          log|S|
    oks : (B,) bool         False where S was not positive definite
    """
    covs = np.ascontiguousarray(covs, dtype=float)
    hs = np.ascontiguousarray(hs, dtype=float)
    # W = P[:, last-state block] H'  (B, d, 3)
    w = np.einsum("bij,bkj->bik", covs[:, :, -6:], hs)
    ss = np.einsum("bij,bjk->bik", hs, w[:, -6:, :]) + r[None, :, :]
    ss = 0.5 * (ss + ss.transpose(0, 2, 1))
    s_invs, logdets, oks = _inv3(ss)
    ks = w @ s_invs
    pus = covs - np.einsum("bik,bjk->bij", ks, w)
    pus = 0.5 * (pus + pus.transpose(0, 2, 1))
    return ss, s_invs, ks, pus, logdets, oks


def _wrapped_diff(z: np.ndarray, zbars: np.ndarray, periods: np.ndarray):
    """(B, m, 3) innovations z - zbar with periodic dimensions wrapped."""
    diff = z[None, :, :] - zbars[:, None, :]
    for dim in range(periods.size):
        p = periods[dim]
        if p > 0.0:
            diff[:, :, dim] -= p * np.round(diff[:, :, dim] / p)
    return diff


def loglik_batch(z, zbars, s_invs, logdets, oks, periods):
    """Log N(z; zbar_b, S_b) for every hypothesis b and measurement z.

    Rows flagged not-ok come back as -inf (the hypothesis is skipped for
    every measurement rather than aborting the scan).
    """
    z = np.ascontiguousarray(z, dtype=float)
    if z.shape[0] == 0:
        return np.zeros((zbars.shape[0], 0))
    diff = _wrapped_diff(z, zbars, periods)
    maha = np.einsum("bmi,bij,bmj->bm", diff, s_invs, diff)
    out = -0.5 * (maha + logdets[:, None] + 3.0 * LOG_2PI)
    out[~oks, :] = -np.inf
    return out
