# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian-mixture kernels.

Same contracts as :mod:`rfswarm._mixslow`; that module is the readable
reference implementation and the import-time fallback.
"""

import numpy as np

from libc.math cimport exp, log

cdef double _LOG_2PI = log(2.0 * 3.14159265358979323846)
# flush exp() results that would be subnormal (see _mixslow._LOG_TINY)
cdef double _LOG_TINY = -700.0


def pair_log_terms(ma, mb, s_inv, logdet):
    """Log-density table ``log N(ma_i - mb_j; 0, S_ij)`` of shape (Na, Nb)."""
    ma = np.ascontiguousarray(ma, dtype=np.float64)
    mb = np.ascontiguousarray(mb, dtype=np.float64)
    s_inv = np.ascontiguousarray(s_inv, dtype=np.float64)
    logdet = np.ascontiguousarray(logdet, dtype=np.float64)
    out = np.empty((ma.shape[0], mb.shape[0]))
    _pair_log_terms(ma, mb, s_inv, logdet, out)
    return out


cdef void _pair_log_terms(double[:, ::1] ma, double[:, ::1] mb,
                          double[:, :, :, ::1] s_inv, double[:, ::1] logdet,
                          double[:, ::1] out) noexcept:
    cdef Py_ssize_t na = ma.shape[0], nb = mb.shape[0], d = ma.shape[1]
    cdef Py_ssize_t i, j, k, l
    cdef double quad, acc, dk
    for i in range(na):
        for j in range(nb):
            quad = 0.0
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += s_inv[i, j, k, l] * (ma[i, l] - mb[j, l])
                quad += (ma[i, k] - mb[j, k]) * acc
            out[i, j] = -0.5 * (d * _LOG_2PI + logdet[i, j] + quad)


def pair_terms(ma, wa, mb, wb, s_inv, logdet):
    """Weighted density table ``wa_i wb_j N(ma_i - mb_j; 0, S_ij)``."""
    log_n = pair_log_terms(ma, mb, s_inv, logdet)
    wa = np.asarray(wa, dtype=np.float64)
    wb = np.asarray(wb, dtype=np.float64)
    dens = np.where(log_n > _LOG_TINY, np.exp(np.maximum(log_n, _LOG_TINY)), 0.0)
    return wa[:, None] * wb[None, :] * dens


def cost_terms(mf, wf, mg, wg, sff_inv, ldff, sfg_inv, ldfg, double alpha,
               int order):
    """Mixture sums of the tracking cost and their mean derivatives.

    See ``rfswarm._mixslow.cost_terms`` for the parameter/return layout.
    """
    mf = np.ascontiguousarray(mf, dtype=np.float64)
    wf = np.ascontiguousarray(wf, dtype=np.float64)
    mg = np.ascontiguousarray(mg, dtype=np.float64)
    wg = np.ascontiguousarray(wg, dtype=np.float64)
    sff_inv = np.ascontiguousarray(sff_inv, dtype=np.float64)
    ldff = np.ascontiguousarray(ldff, dtype=np.float64)
    sfg_inv = np.ascontiguousarray(sfg_inv, dtype=np.float64)
    ldfg = np.ascontiguousarray(ldfg, dtype=np.float64)
    cdef Py_ssize_t nf = mf.shape[0], ng = mg.shape[0], d = mf.shape[1]
    ff_terms = np.empty((nf, nf))
    fg_terms = np.empty((nf, ng))
    sdff = np.empty((nf, nf, d))
    sdfg = np.empty((nf, ng, d))
    log_nfg = np.empty((nf, ng))
    _pair_stats(mf, mf, sff_inv, ldff, wf, wf, ff_terms, sdff, None)
    _pair_stats(mf, mg, sfg_inv, ldfg, wf, wg, fg_terms, sdfg, log_nfg)
    cdef double log_sum = 0.0
    cdef double[:, ::1] lnv = log_nfg
    cdef double[::1] wfv = wf, wgv = wg
    cdef Py_ssize_t i, j
    for i in range(nf):
        for j in range(ng):
            log_sum += wfv[i] * wgv[j] * lnv[i, j]
    grad = None
    hess = None
    if order >= 1:
        grad = np.zeros(nf * d)
        _gradient(ff_terms, sdff, fg_terms, sdfg, wf, wg, alpha, grad)
    if order >= 2:
        hess = np.zeros((nf * d, nf * d))
        _hessian(ff_terms, sdff, sff_inv, fg_terms, sdfg, sfg_inv,
                 wf, wg, alpha, hess)
    return ff_terms, fg_terms, log_sum, grad, hess


cdef void _pair_stats(double[:, ::1] ma, double[:, ::1] mb,
                      double[:, :, :, ::1] s_inv, double[:, ::1] logdet,
                      double[::1] wa, double[::1] wb,
                      double[:, ::1] terms, double[:, :, ::1] sd,
                      double[:, ::1] log_n) noexcept:
    cdef Py_ssize_t na = ma.shape[0], nb = mb.shape[0], d = ma.shape[1]
    cdef Py_ssize_t i, j, k, l
    cdef double quad, acc, ln
    for i in range(na):
        for j in range(nb):
            quad = 0.0
            for k in range(d):
                acc = 0.0
                for l in range(d):
                    acc += s_inv[i, j, k, l] * (ma[i, l] - mb[j, l])
                sd[i, j, k] = acc
                quad += (ma[i, k] - mb[j, k]) * acc
            ln = -0.5 * (d * _LOG_2PI + logdet[i, j] + quad)
            if log_n is not None:
                log_n[i, j] = ln
            terms[i, j] = wa[i] * wb[j] * exp(ln) if ln > _LOG_TINY else 0.0


cdef void _gradient(double[:, ::1] ff_terms, double[:, :, ::1] sdff,
                    double[:, ::1] fg_terms, double[:, :, ::1] sdfg,
                    double[::1] wf, double[::1] wg, double alpha,
                    double[::1] grad) noexcept:
    cdef Py_ssize_t nf = ff_terms.shape[0], ng = fg_terms.shape[1]
    cdef Py_ssize_t d = sdff.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double coef
    for i in range(nf):
        for j in range(nf):
            coef = -2.0 * ff_terms[i, j]
            for k in range(d):
                grad[i * d + k] += coef * sdff[i, j, k]
        for j in range(ng):
            coef = 2.0 * fg_terms[i, j] + alpha * wf[i] * wg[j]
            for k in range(d):
                grad[i * d + k] += coef * sdfg[i, j, k]


cdef void _hessian(double[:, ::1] ff_terms, double[:, :, ::1] sdff,
                   double[:, :, :, ::1] sff_inv,
                   double[:, ::1] fg_terms, double[:, :, ::1] sdfg,
                   double[:, :, :, ::1] sfg_inv,
                   double[::1] wf, double[::1] wg, double alpha,
                   double[:, ::1] hess) noexcept:
    cdef Py_ssize_t nf = ff_terms.shape[0], ng = fg_terms.shape[1]
    cdef Py_ssize_t d = sdff.shape[2]
    cdef Py_ssize_t i, j, k, l
    cdef double t, wl, hkl
    for i in range(nf):
        # fg and log terms: block-diagonal contributions only
        for j in range(ng):
            t = fg_terms[i, j]
            wl = alpha * wf[i] * wg[j]
            for k in range(d):
                for l in range(d):
                    hess[i * d + k, i * d + l] += (
                        -2.0 * t * (sdfg[i, j, k] * sdfg[i, j, l]
                                    - sfg_inv[i, j, k, l])
                        + wl * sfg_inv[i, j, k, l])
        # ff pairs: +2 H_ij on the diagonal block, -2 H_ij on block (i, j);
        # the j == i writes cancel, excluding the structural self-pair.
        for j in range(nf):
            t = ff_terms[i, j]
            for k in range(d):
                for l in range(d):
                    hkl = t * (sdff[i, j, k] * sdff[i, j, l]
                               - sff_inv[i, j, k, l])
                    hess[i * d + k, i * d + l] += 2.0 * hkl
                    hess[i * d + k, j * d + l] -= 2.0 * hkl
