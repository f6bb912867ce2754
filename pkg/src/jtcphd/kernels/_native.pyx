# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled update kernels.

Same contracts as ``_reference``; see that module for the math.  The loops
here avoid the per-call numpy dispatch overhead that dominates when the
filter processes hundreds of small trajectory windows per scan.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, isfinite, log, round as c_round

cnp.import_array()

DEF NZ = 3
DEF NX = 6
cdef double LOG_2PI = 1.8378770664093453


cdef inline bint _inv3_single(const double* s, double* inv, double* logdet) noexcept nogil:
    cdef double a = s[0], b = s[1], c = s[2]
    cdef double d = s[3], e = s[4], f = s[5]
    cdef double g = s[6], h = s[7], i = s[8]
    cdef double c00 = e * i - f * h
    cdef double c10 = f * g - d * i
    cdef double c20 = d * h - e * g
    cdef double det = a * c00 + b * c10 + c * c20
    if not isfinite(det) or det <= 0.0 or a <= 0.0 or e <= 0.0 or i <= 0.0:
        return False
    inv[0] = c00 / det
    inv[1] = (c * h - b * i) / det
    inv[2] = (b * f - c * e) / det
    inv[3] = c10 / det
    inv[4] = (a * i - c * g) / det
    inv[5] = (c * d - a * f) / det
    inv[6] = c20 / det
    inv[7] = (b * g - a * h) / det
    inv[8] = (a * e - b * d) / det
    logdet[0] = log(det)
    return True


def innovation_batch(covs, hs, r):
    covs = np.ascontiguousarray(covs, dtype=np.float64)
    hs = np.ascontiguousarray(hs, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t nb = covs.shape[0]
    cdef Py_ssize_t d = covs.shape[1]
    ss = np.empty((nb, NZ, NZ))
    s_invs = np.empty((nb, NZ, NZ))
    ks = np.empty((nb, d, NZ))
    pus = np.empty((nb, d, d))
    logdets = np.empty(nb)
    oks = np.ones(nb, dtype=np.uint8)
    w_buf = np.empty((d, NZ))

    cdef double[:, :, ::1] cv = covs
    cdef double[:, :, ::1] hv = hs
    cdef double[:, ::1] rv = r
    cdef double[:, :, ::1] sv = ss
    cdef double[:, :, ::1] siv = s_invs
    cdef double[:, :, ::1] kv = ks
    cdef double[:, :, ::1] pv = pus
    cdef double[::1] ldv = logdets
    cdef unsigned char[::1] okv = oks
    cdef double[:, ::1] wv = w_buf

    cdef Py_ssize_t b, i, j, k, off = d - NX
    cdef double acc, ld
    cdef double sloc[9]
    cdef double sinv[9]

    with nogil:
        for b in range(nb):
            # W = P[:, last block] H'
            for i in range(d):
                for j in range(NZ):
                    acc = 0.0
                    for k in range(NX):
                        acc += cv[b, i, off + k] * hv[b, j, k]
                    wv[i, j] = acc
            # S = H W[last block] + R, symmetrized
            for i in range(NZ):
                for j in range(NZ):
                    acc = rv[i, j]
                    for k in range(NX):
                        acc += hv[b, i, k] * wv[off + k, j]
                    sloc[i * NZ + j] = acc
            for i in range(NZ):
                for j in range(i + 1, NZ):
                    acc = 0.5 * (sloc[i * NZ + j] + sloc[j * NZ + i])
                    sloc[i * NZ + j] = acc
                    sloc[j * NZ + i] = acc
            for i in range(NZ):
                for j in range(NZ):
                    sv[b, i, j] = sloc[i * NZ + j]
            if not _inv3_single(sloc, sinv, &ld):
                okv[b] = 0
                ldv[b] = INFINITY
                for i in range(NZ):
                    for j in range(NZ):
                        siv[b, i, j] = 0.0
                for i in range(d):
                    for j in range(NZ):
                        kv[b, i, j] = 0.0
                for i in range(d):
                    for j in range(d):
                        pv[b, i, j] = cv[b, i, j]
                continue
            ldv[b] = ld
            for i in range(NZ):
                for j in range(NZ):
                    siv[b, i, j] = sinv[i * NZ + j]
            # K = W S^-1
            for i in range(d):
                for j in range(NZ):
                    acc = 0.0
                    for k in range(NZ):
                        acc += wv[i, k] * sinv[k * NZ + j]
                    kv[b, i, j] = acc
            # Pu = P - K W', symmetrized
            for i in range(d):
                for j in range(i, d):
                    acc = 0.0
                    for k in range(NZ):
                        acc += kv[b, i, k] * wv[j, k] + kv[b, j, k] * wv[i, k]
                    acc = cv[b, i, j] - 0.5 * acc
                    pv[b, i, j] = acc
                    pv[b, j, i] = acc
    return ss, s_invs, ks, pus, logdets, oks.view(bool)


def loglik_batch(z, zbars, s_invs, logdets, oks, periods):
    z = np.ascontiguousarray(z, dtype=np.float64)
    zbars = np.ascontiguousarray(zbars, dtype=np.float64)
    s_invs = np.ascontiguousarray(s_invs, dtype=np.float64)
    logdets = np.ascontiguousarray(logdets, dtype=np.float64)
    periods = np.ascontiguousarray(periods, dtype=np.float64)
    oks8 = np.ascontiguousarray(oks, dtype=np.uint8)
    cdef Py_ssize_t nb = zbars.shape[0]
    cdef Py_ssize_t m = z.shape[0]
    out = np.empty((nb, m))
    if m == 0:
        return out

    cdef double[:, ::1] zv = z
    cdef double[:, ::1] zbv = zbars
    cdef double[:, :, ::1] siv = s_invs
    cdef double[::1] ldv = logdets
    cdef double[::1] pdv = periods
    cdef unsigned char[::1] okv = oks8
    cdef double[:, ::1] ov = out

    cdef Py_ssize_t b, zi, i, j
    cdef double nu[3]
    cdef double acc, p
    with nogil:
        for b in range(nb):
            if not okv[b]:
                for zi in range(m):
                    ov[b, zi] = -INFINITY
                continue
            for zi in range(m):
                for i in range(NZ):
                    nu[i] = zv[zi, i] - zbv[b, i]
                    p = pdv[i]
                    if p > 0.0:
                        nu[i] -= p * c_round(nu[i] / p)
                acc = 0.0
                for i in range(NZ):
                    for j in range(NZ):
                        acc += nu[i] * siv[b, i, j] * nu[j]
                ov[b, zi] = -0.5 * (acc + ldv[b] + NZ * LOG_2PI)
    return out
