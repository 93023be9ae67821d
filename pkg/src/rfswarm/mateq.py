"""Matrix-equation solvers: Lyapunov, Sylvester, and zero-order-hold
discretization.

All solves go through the Schur-based (Bartels-Stewart) LAPACK paths in
:mod:`scipy.linalg`; the O(n^6)-memory Kronecker vectorization appears only
as an oracle in the test suite.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    NonFinite,
    NotHurwitz,
    NotSchurStable,
    SingularPencil,
)

STABILITY_TOL = 1e-12


def _as_square(a, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite entries")
    return a


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite entries")
    return a


def solve_continuous_lyapunov(a, q, *, stability_tol: float = STABILITY_TOL) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` for symmetric ``P``.

    ``A`` must be Hurwitz (every eigenvalue with real part below
    ``-stability_tol``) and ``Q`` symmetric.
    """
    a = _as_square(a, "A")
    q = _as_square(q, "Q")
    if a.shape != q.shape:
        raise DimensionMismatch(f"A is {a.shape} but Q is {q.shape}")
    eigs = np.linalg.eigvals(a)
    if np.max(eigs.real) >= -stability_tol:
        raise NotHurwitz(f"max eigenvalue real part {np.max(eigs.real):.3e}")
    # scipy solves a x + x a^T = q; substitute a -> A^T, q -> -Q.
    p = sla.solve_continuous_lyapunov(a.T, -q)
    return 0.5 * (p + p.T)


def solve_discrete_lyapunov(a, q, *, stability_tol: float = STABILITY_TOL) -> np.ndarray:
    """Solve ``A^T P A - P = -Q`` for symmetric ``P``.

    ``A`` must be Schur stable (spectral radius below ``1 - stability_tol``)
    and ``Q`` symmetric.
    """
    a = _as_square(a, "A")
    q = _as_square(q, "Q")
    if a.shape != q.shape:
        raise DimensionMismatch(f"A is {a.shape} but Q is {q.shape}")
    rho = np.max(np.abs(np.linalg.eigvals(a)))
    if rho >= 1.0 - stability_tol:
        raise NotSchurStable(f"spectral radius {rho:.12f}")
    # 'bilinear' maps to the Schur-based continuous solver; scipy's 'direct'
    # method is the Kronecker expansion we reserve for test oracles.
    p = sla.solve_discrete_lyapunov(a.T, q, method="bilinear")
    return 0.5 * (p + p.T)


def solve_sylvester(m, n, c, *, singular_tol: float = STABILITY_TOL) -> np.ndarray:
    """Solve ``M X + X N = C`` for ``X``.

    Raises :class:`SingularPencil` when some eigenvalue pair satisfies
    ``lambda_M + lambda_N ~ 0``, which makes the operator singular.
    """
    m = _as_square(m, "M")
    n = _as_square(n, "N")
    c = _as_matrix(c, "C")
    if c.shape != (m.shape[0], n.shape[0]):
        raise DimensionMismatch(
            f"C must be {m.shape[0]}x{n.shape[0]}, got {c.shape}")
    lm = np.linalg.eigvals(m)
    ln = np.linalg.eigvals(n)
    sums = np.abs(lm[:, None] + ln[None, :])
    scale = max(1.0, np.max(np.abs(lm)), np.max(np.abs(ln)))
    if np.min(sums) <= singular_tol * scale:
        raise SingularPencil(
            f"min |lambda_M + lambda_N| = {np.min(sums):.3e}")
    return sla.solve_sylvester(m, n, c)


def zoh_discretize(ac, bc, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Discretize ``(Ac, Bc)`` under a zero-order hold on the input.

    Returns ``A = exp(Ac dt)`` and ``B = (int_0^dt exp(Ac s) ds) Bc`` via
    the augmented-matrix exponential.
    """
    ac = _as_square(ac, "Ac")
    bc = _as_matrix(bc, "Bc")
    if bc.shape[0] != ac.shape[0]:
        raise DimensionMismatch(f"Bc rows {bc.shape[0]} != Ac size {ac.shape[0]}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n, m = ac.shape[0], bc.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = ac
    aug[:n, n:] = bc
    phi = sla.expm(aug * dt)
    if not np.all(np.isfinite(phi)):
        raise NonFinite("matrix exponential overflowed")
    return phi[:n, :n], phi[:n, n:]
