"""Numpy reference implementation of the Gaussian-mixture kernels.

Same call signatures as the compiled ``_mixfast`` module; selected as a
fallback by :mod:`rfswarm.mixkernel` when the extension is unavailable.

Densities are evaluated in the log domain and exponentiated at the end,
so far-apart component pairs underflow cleanly to zero instead of
overflowing the exponent.
"""

from __future__ import annotations

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))

# exp() of anything below this would land in the subnormal range; such
# terms are hundreds of orders below the working scale and only poison
# downstream linear algebra with denormal arithmetic, so flush them.
_LOG_TINY = -700.0


def _exp_flushed(log_n: np.ndarray) -> np.ndarray:
    with np.errstate(under="ignore"):
        out = np.exp(log_n)
    out[log_n <= _LOG_TINY] = 0.0
    return out


def pair_log_terms(ma, mb, s_inv, logdet):
    """Log-density table ``log N(ma_i - mb_j; 0, S_ij)`` of shape (Na, Nb).

    ``s_inv`` holds the inverses of the pairwise covariance sums and
    ``logdet`` their log-determinants.
    """
    d = ma.shape[1]
    diff = ma[:, None, :] - mb[None, :, :]           # (Na, Nb, d)
    quad = np.einsum("ijk,ijkl,ijl->ij", diff, s_inv, diff)
    return -0.5 * (d * _LOG_2PI + logdet + quad)


def pair_terms(ma, wa, mb, wb, s_inv, logdet):
    """Weighted density table ``wa_i wb_j N(ma_i - mb_j; 0, S_ij)``."""
    log_n = pair_log_terms(ma, mb, s_inv, logdet)
    return wa[:, None] * wb[None, :] * _exp_flushed(log_n)


def cost_terms(mf, wf, mg, wg, sff_inv, ldff, sfg_inv, ldfg, alpha,
               order: int):
    """Mixture sums of the tracking cost and their mean derivatives.

    Parameters
    ----------
    mf, wf : (Nf, d), (Nf,)
        Means and weights of the current intensity.
    mg, wg : (Ng, d), (Ng,)
        Means and weights of the desired intensity.
    sff_inv, ldff : (Nf, Nf, d, d), (Nf, Nf)
        Inverses/log-dets of ``Pf_i + Pf_j``.
    sfg_inv, ldfg : (Nf, Ng, d, d), (Nf, Ng)
        Inverses/log-dets of ``Pf_i + Pg_j``.
    alpha : float
        Weight of the log cross term.
    order : int
        0 = values only, 1 = + gradient, 2 = + Hessian.

    Returns
    -------
    ff_terms : (Nf, Nf) weighted self-density table of the current mixture
    fg_terms : (Nf, Ng) weighted cross-density table
    log_sum : float, ``sum_ij wf_i wg_j log N(mg_j; mf_i, S_ij)``
    grad : (Nf*d,) gradient of ``ff - 2 fg - alpha*log_sum`` w.r.t. ``mf``
        (None when order < 1)
    hess : (Nf*d, Nf*d) Hessian of the same scalar (None when order < 2)
    """
    nf, d = mf.shape

    dff = mf[:, None, :] - mf[None, :, :]                # (Nf,Nf,d)
    sdff = np.einsum("ijkl,ijl->ijk", sff_inv, dff)      # S^-1 (mi - mj)
    quad_ff = np.einsum("ijk,ijk->ij", dff, sdff)
    log_nff = -0.5 * (d * _LOG_2PI + ldff + quad_ff)
    ff_terms = wf[:, None] * wf[None, :] * _exp_flushed(log_nff)

    dfg = mf[:, None, :] - mg[None, :, :]                # (Nf,Ng,d)
    sdfg = np.einsum("ijkl,ijl->ijk", sfg_inv, dfg)
    quad_fg = np.einsum("ijk,ijk->ij", dfg, sdfg)
    log_nfg = -0.5 * (d * _LOG_2PI + ldfg + quad_fg)
    wfg = wf[:, None] * wg[None, :]
    fg_terms = wfg * _exp_flushed(log_nfg)
    log_sum = float(np.sum(wfg * log_nfg))

    grad = None
    hess = None
    if order >= 1:
        # d(ff)/d(mf_i): each unordered pair contributes twice.
        g_ff = -2.0 * np.einsum("ij,ijk->ik", ff_terms, sdff)
        # d(-2 fg)/d(mf_i)
        g_fg = 2.0 * np.einsum("ij,ijk->ik", fg_terms, sdfg)
        # d(-alpha * log_sum)/d(mf_i)
        g_log = alpha * np.einsum("ij,ijk->ik", wfg, sdfg)
        grad = (g_ff + g_fg + g_log).reshape(nf * d)
    if order >= 2:
        hess = np.zeros((nf, d, nf, d))
        # ff: each ordered pair (i,j), i != j, adds +H_ij to blocks (i,i) and
        # (j,j) and -H_ij to (i,j); the -2*h_ff on the diagonal cancels the
        # structural i == j self-pairs included in diag_ff.
        outer_ff = np.einsum("ijk,ijl->ijkl", sdff, sdff)
        h_ff = ff_terms[:, :, None, None] * (outer_ff - sff_inv)
        diag_ff = 2.0 * np.sum(h_ff, axis=1)             # (Nf,d,d)
        for i in range(nf):
            hess[i, :, i, :] += diag_ff[i]
        hess -= 2.0 * np.transpose(h_ff, (0, 2, 1, 3))
        # -2 fg: block-diagonal only
        outer_fg = np.einsum("ijk,ijl->ijkl", sdfg, sdfg)
        h_fg = -2.0 * np.sum(
            fg_terms[:, :, None, None] * (outer_fg - sfg_inv), axis=1)
        # -alpha log: block-diagonal, constant positive-definite
        h_log = alpha * np.sum(wfg[:, :, None, None] * sfg_inv, axis=1)
        for i in range(nf):
            hess[i, :, i, :] += h_fg[i] + h_log[i]
        hess = hess.reshape(nf * d, nf * d)
    return ff_terms, fg_terms, log_sum, grad, hess
