"""Sparsity-promoting feedback synthesis via ADMM.

The performance cost ``J(F) = trace(B2' P(F) B2)`` (closed-loop Lyapunov
cost) is split from an elementwise sparsity penalty by an equality
constraint ``F = G``; the two are minimized alternately together with a
scaled multiplier update.  The F-step runs Anderson-Moore iterations
(paired Lyapunov solves plus one Sylvester solve, line-searched with the
Armijo rule); the G-step is an exact elementwise shrinkage or truncation.
A final polishing pass re-optimizes the gain over its fixed sparsity
pattern.

Both continuous-time and discrete-time problems are supported; the
discrete F-step uses the effective control weight ``R + B'PB`` in the
gradient and Sylvester rearrangement.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._blas import single_threaded_blas
from .errors import (
    AdmmMaxIterWarning,
    DimensionMismatch,
    NoStabilizingGain,
    NotPositiveDefinite,
    PatternDestabilizes,
    RiccatiFailed,
    StallWarning,
    Unstable,
)
from .mateq import solve_continuous_lyapunov, solve_discrete_lyapunov, solve_sylvester


@dataclass(frozen=True)
class BlockPartition:
    """Agent-wise split of a gain's rows (controls) and columns (states)."""

    control_dims: tuple[int, ...]
    state_dims: tuple[int, ...]

    @classmethod
    def uniform(cls, n_agents: int, control_dim: int, state_dim: int):
        return cls(control_dims=(control_dim,) * n_agents,
                   state_dims=(state_dim,) * n_agents)

    @property
    def n_agents(self) -> int:
        return len(self.control_dims)

    def row_slices(self):
        offs = np.cumsum((0,) + self.control_dims)
        return [slice(offs[i], offs[i + 1]) for i in range(len(self.control_dims))]

    def col_slices(self):
        offs = np.cumsum((0,) + self.state_dims)
        return [slice(offs[i], offs[i + 1]) for i in range(len(self.state_dims))]


@dataclass
class FeedbackGain:
    """Gain matrix in the ``u = -Fx`` convention with its sparsity pattern.

    Entries outside ``pattern`` are exactly zero.
    """

    F: np.ndarray
    pattern: np.ndarray
    blocks: BlockPartition | None = None

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.pattern = np.atleast_2d(np.asarray(self.pattern, dtype=bool))
        if self.pattern.shape != self.F.shape:
            raise DimensionMismatch(
                f"pattern {self.pattern.shape} != gain {self.F.shape}")
        if np.any(self.F[~self.pattern] != 0.0):
            raise ValueError("gain has nonzero entries outside its pattern")

    @classmethod
    def from_matrix(cls, f, blocks=None):
        f = np.atleast_2d(np.asarray(f, dtype=float))
        return cls(F=f, pattern=f != 0.0, blocks=blocks)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.pattern))


@dataclass
class SparseLqrProblem:
    """LQR data ``(A, B, B2, Q, R)`` in either time mode.

    ``B2`` maps the disturbance whose closed-loop amplification the cost
    ``trace(B2' P B2)`` measures.
    """

    A: np.ndarray
    B: np.ndarray
    B2: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    time_mode: str = "continuous"

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.B2 = np.atleast_2d(np.asarray(self.B2, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        if self.B.shape[0] != n or self.B2.shape[0] != n:
            raise DimensionMismatch("B and B2 must have as many rows as A")
        if self.Q.shape != (n, n):
            raise DimensionMismatch("Q must match A")
        m = self.B.shape[1]
        if self.R.shape != (m, m):
            raise DimensionMismatch("R must match B columns")
        if self.time_mode not in ("continuous", "discrete"):
            raise ValueError(f"time_mode must be continuous|discrete, "
                             f"got {self.time_mode!r}")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("R must be positive definite") from None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass
class FMinOptions:
    """Anderson-Moore inner-loop controls for the F-minimization."""

    max_iter: int = 100
    grad_tol: float = 1e-4
    armijo_slope: float = 0.01
    armijo_contraction: float = 0.5
    armijo_max: int = 30


@dataclass
class AdmmOptions:
    rho: float = 100.0
    eps_abs: float = 1e-4
    max_iter: int = 1000
    g_type: str = "weighted_l1"
    reweight_eps: float = 1e-3
    max_reweight: int = 5
    fmin: FMinOptions = field(default_factory=FMinOptions)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.eps_abs <= 0:
            raise ValueError(f"eps_abs must be positive, got {self.eps_abs}")
        if self.g_type not in ("l1", "weighted_l1", "nnz"):
            raise ValueError(f"g_type must be l1|weighted_l1|nnz, got {self.g_type!r}")


def _gain_matrix(f) -> np.ndarray:
    if isinstance(f, FeedbackGain):
        return f.F
    return np.atleast_2d(np.asarray(f, dtype=float))


def closed_loop(prob: SparseLqrProblem, f) -> np.ndarray:
    return prob.A - prob.B @ _gain_matrix(f)


def is_stabilizing(prob: SparseLqrProblem, f) -> bool:
    eigs = np.linalg.eigvals(closed_loop(prob, f))
    if prob.time_mode == "continuous":
        return bool(np.max(eigs.real) < 0.0)
    return bool(np.max(np.abs(eigs)) < 1.0)


def _closed_loop_grammians(prob, f):
    """Solve the paired Lyapunov equations for (L, P) at a fixed gain."""
    acl = closed_loop(prob, f)
    fmat = _gain_matrix(f)
    qcl = prob.Q + fmat.T @ prob.R @ fmat
    b2b2 = prob.B2 @ prob.B2.T
    # stability_tol=0 keeps the solvers consistent with is_stabilizing's
    # strict inequality for marginally damped closed loops.
    if prob.time_mode == "continuous":
        lgram = solve_continuous_lyapunov(acl.T, b2b2, stability_tol=0.0)
        pgram = solve_continuous_lyapunov(acl, qcl, stability_tol=0.0)
    else:
        lgram = solve_discrete_lyapunov(acl.T, b2b2, stability_tol=0.0)
        pgram = solve_discrete_lyapunov(acl, qcl, stability_tol=0.0)
    return lgram, pgram


def lqr_cost(f, prob: SparseLqrProblem) -> float:
    """Closed-loop cost ``trace(B2' P(F) B2)``; requires a stabilizing F."""
    if not is_stabilizing(prob, f):
        raise Unstable("gain does not stabilize the closed loop")
    _, pgram = _closed_loop_grammians(prob, f)
    return float(np.trace(prob.B2.T @ pgram @ prob.B2))


def grad_lqr_cost(prob: SparseLqrProblem, f) -> np.ndarray:
    """Gradient of :func:`lqr_cost` with respect to the gain matrix."""
    fmat = _gain_matrix(f)
    lgram, pgram = _closed_loop_grammians(prob, fmat)
    if prob.time_mode == "continuous":
        return 2.0 * (prob.R @ fmat - prob.B.T @ pgram) @ lgram
    reff = prob.R + prob.B.T @ pgram @ prob.B
    return 2.0 * (reff @ fmat - prob.B.T @ pgram @ prob.A) @ lgram


def centralized_gain(prob: SparseLqrProblem) -> FeedbackGain:
    """Optimal unstructured gain from the algebraic Riccati equation."""
    try:
        if prob.time_mode == "continuous":
            p = sla.solve_continuous_are(prob.A, prob.B, prob.Q, prob.R)
            f = np.linalg.solve(prob.R, prob.B.T @ p)
        else:
            p = sla.solve_discrete_are(prob.A, prob.B, prob.Q, prob.R)
            f = np.linalg.solve(prob.R + prob.B.T @ p @ prob.B,
                                prob.B.T @ p @ prob.A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiFailed(str(exc)) from None
    if not np.all(np.isfinite(f)) or not is_stabilizing(prob, f):
        raise RiccatiFailed("Riccati solution is not stabilizing")
    return FeedbackGain.from_matrix(f)


def _phi(prob, f, u, rho) -> float:
    val = lqr_cost(f, prob)
    if rho > 0.0:
        val += 0.5 * rho * float(np.sum((f - u) ** 2))
    return val


def _anderson_moore(prob, u, rho, f0, opts: FMinOptions, pattern=None):
    """Minimize ``J(F) + (rho/2)||F - U||^2`` (optionally over a pattern).

    Returns ``(F, converged)``.  Each iteration solves the (L, P) pair at
    the current gain, solves the stationarity Sylvester equation for a
    candidate gain, and backtracks along the difference direction,
    rejecting destabilizing steps.  Falls back to the projected negative
    gradient when the Anderson-Moore direction fails to descend.
    """
    f = _gain_matrix(f0).copy()
    if pattern is not None:
        f = np.where(pattern, f, 0.0)
    if not is_stabilizing(prob, f):
        raise NoStabilizingGain("F-minimization started from an unstable gain")
    if pattern is not None and not pattern.any():
        return f, True
    phi = _phi(prob, f, u, rho)
    for _ in range(opts.max_iter):
        lgram, pgram = _closed_loop_grammians(prob, f)
        if prob.time_mode == "continuous":
            reff = prob.R
            bp_term = prob.B.T @ pgram
        else:
            reff = prob.R + prob.B.T @ pgram @ prob.B
            bp_term = prob.B.T @ pgram @ prob.A
        grad = 2.0 * (reff @ f - bp_term) @ lgram
        if rho > 0.0:
            grad = grad + rho * (f - u)
        if pattern is not None:
            grad = np.where(pattern, grad, 0.0)
        if np.linalg.norm(grad) < opts.grad_tol * (1.0 + np.linalg.norm(f)):
            return f, True
        # Stationarity at fixed (L, P): (rho/2) Reff^-1 Fbar + Fbar L = C.
        if rho > 0.0:
            m_half = 0.5 * rho * np.linalg.inv(reff)
            c = np.linalg.solve(reff, bp_term @ lgram) + m_half @ u
            f_bar = solve_sylvester(m_half, lgram, c)
        else:
            # rho = 0: 2 (Reff Fbar - bp_term) L = 0 with L nonsingular.
            try:
                f_bar = np.linalg.solve(reff, bp_term)
            except np.linalg.LinAlgError:
                f_bar = np.linalg.lstsq(reff, bp_term, rcond=None)[0]
        if pattern is not None:
            f_bar = np.where(pattern, f_bar, 0.0)
        accepted = False
        for direction in (f_bar - f, -grad):
            slope = float(np.sum(grad * direction))
            if slope >= 0.0:
                continue
            step = 1.0
            for _ in range(opts.armijo_max):
                cand = f + step * direction
                if is_stabilizing(prob, cand):
                    cand_phi = _phi(prob, cand, u, rho)
                    if cand_phi <= phi + opts.armijo_slope * step * slope:
                        f, phi = cand, cand_phi
                        accepted = True
                        break
                step *= opts.armijo_contraction
            if accepted:
                break
        if not accepted:
            warnings.warn("Anderson-Moore line search stalled; returning "
                          "best iterate", StallWarning)
            return f, False
    warnings.warn("Anderson-Moore hit its iteration cap; returning best "
                  "iterate", StallWarning)
    return f, False


def f_min_step(prob, g, lam, f_init, rho: float,
               inner_opts: FMinOptions | None = None) -> FeedbackGain:
    """One ADMM F-minimization: descend ``J(F) + (rho/2)||F - U||_F^2``
    with ``U = G - Lambda/rho``."""
    inner_opts = inner_opts or FMinOptions()
    u = np.asarray(g, dtype=float) - np.asarray(lam, dtype=float) / rho
    f, _ = _anderson_moore(prob, u, rho, f_init, inner_opts)
    return FeedbackGain.from_matrix(f)


def g_min_shrinkage(v, gamma: float, rho: float, w) -> np.ndarray:
    """Elementwise soft threshold with per-entry level ``(gamma/rho) W``."""
    v = np.asarray(v, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), v.shape)
    if np.any(w <= 0):
        raise ValueError("weights must be positive (use 1 for plain L1)")
    a = (gamma / rho) * w
    return np.where(v > a, v - a, np.where(v < -a, v + a, 0.0))


def g_min_truncate(v, gamma: float, rho: float) -> np.ndarray:
    """Elementwise hard threshold at ``sqrt(2 gamma / rho)``.

    Entries exactly at the threshold are zeroed.
    """
    if gamma < 0 or rho <= 0:
        raise ValueError("gamma must be >= 0 and rho > 0")
    v = np.asarray(v, dtype=float)
    b = np.sqrt(2.0 * gamma / rho)
    return np.where(np.abs(v) <= b, 0.0, v)


def update_weights(f, eps: float) -> np.ndarray:
    """Reweighting ``W_ij = 1 / (|F_ij| + eps)`` for the weighted L1 term."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return 1.0 / (np.abs(_gain_matrix(f)) + eps)


@dataclass
class AdmmResult:
    gain: FeedbackGain
    iterations: int
    residuals: list[tuple[float, float]]
    converged: bool


def admm_sparsify(prob: SparseLqrProblem, gamma: float, f0,
                  opts: AdmmOptions | None = None) -> AdmmResult:
    """Alternate F-minimization, G-minimization, and multiplier updates.

    Stops when both the primal residual ``||F - G||_F`` and the dual
    residual ``||G - G_prev||_F`` fall below ``eps_abs``; otherwise warns
    and returns the best iterate flagged as unconverged.  The returned
    gain is the F iterate masked by G's sparsity pattern.
    """
    opts = opts or AdmmOptions()
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    f = _gain_matrix(f0).copy()
    if not is_stabilizing(prob, f):
        raise NoStabilizingGain("ADMM requires a stabilizing initial gain")
    blocks = f0.blocks if isinstance(f0, FeedbackGain) else None
    with single_threaded_blas():
        return _admm_loop(prob, gamma, f, blocks, opts)


def _admm_loop(prob, gamma, f, blocks, opts: AdmmOptions) -> AdmmResult:
    g = f.copy()
    lam = np.zeros_like(f)
    weights = np.ones_like(f)
    if opts.g_type == "weighted_l1":
        weights = update_weights(f, opts.reweight_eps)
    residuals: list[tuple[float, float]] = []
    converged = False
    iterations = 0
    for it in range(1, opts.max_iter + 1):
        iterations = it
        if opts.g_type == "weighted_l1" and 1 < it <= opts.max_reweight:
            weights = update_weights(g, opts.reweight_eps)
        u = g - lam / opts.rho
        f, _ = _anderson_moore(prob, u, opts.rho, f, opts.fmin)
        v = f + lam / opts.rho
        if opts.g_type == "nnz":
            g_new = g_min_truncate(v, gamma, opts.rho)
        else:
            g_new = g_min_shrinkage(v, gamma, opts.rho, weights)
        r_primal = float(np.linalg.norm(f - g_new))
        r_dual = float(np.linalg.norm(g_new - g))
        lam = lam + opts.rho * (f - g_new)
        g = g_new
        residuals.append((r_primal, r_dual))
        if r_primal <= opts.eps_abs and r_dual <= opts.eps_abs:
            converged = True
            break
    if not converged:
        warnings.warn(f"ADMM did not meet eps_abs={opts.eps_abs} within "
                      f"{opts.max_iter} iterations", AdmmMaxIterWarning)
    pattern = g != 0.0
    f_masked = np.where(pattern, f, 0.0)
    if is_stabilizing(prob, f_masked):
        gain = FeedbackGain(F=f_masked, pattern=pattern, blocks=blocks)
    elif is_stabilizing(prob, g):
        gain = FeedbackGain(F=g.copy(), pattern=pattern, blocks=blocks)
    else:
        raise Unstable("neither the masked F iterate nor G stabilizes the "
                       "closed loop; increase max_iter or decrease gamma")
    return AdmmResult(gain=gain, iterations=iterations, residuals=residuals,
                      converged=converged)


def polish_structured(prob: SparseLqrProblem, pattern, f_init,
                      opts: FMinOptions | None = None) -> FeedbackGain:
    """Re-optimize the gain over a fixed sparsity pattern.

    Anderson-Moore descent with every candidate and gradient projected
    onto the pattern; the polished cost never exceeds the cost of the
    (pattern-conformant) initialization.
    """
    opts = opts or FMinOptions(grad_tol=1e-5)
    pattern = np.atleast_2d(np.asarray(pattern, dtype=bool))
    f = np.where(pattern, _gain_matrix(f_init), 0.0)
    if not is_stabilizing(prob, f):
        raise PatternDestabilizes(
            "zeroing off-pattern entries destabilizes the closed loop")
    blocks = f_init.blocks if isinstance(f_init, FeedbackGain) else None
    with single_threaded_blas():
        f, _ = _anderson_moore(prob, np.zeros_like(f), 0.0, f, opts,
                               pattern=pattern)
    return FeedbackGain(F=np.where(pattern, f, 0.0), pattern=pattern,
                        blocks=blocks)


@dataclass
class SweepEntry:
    gamma: float
    gain: FeedbackGain
    nnz: int
    J: float
    J_admm: float
    admm_iterations: int
    admm_converged: bool


def gamma_sweep(prob: SparseLqrProblem, gammas, opts: AdmmOptions | None = None,
                blocks: BlockPartition | None = None) -> list[SweepEntry]:
    """Sparsify along an ascending list of penalty weights.

    Each entry warm-starts from the previous polished gain (the first
    from the centralized Riccati gain), runs ADMM, polishes the resulting
    pattern, and records the polished cost alongside the pre-polish one.
    """
    opts = opts or AdmmOptions()
    gammas = [float(g) for g in gammas]
    if any(g < 0 for g in gammas):
        raise ValueError("gamma values must be >= 0")
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma list must be ascending")
    central = centralized_gain(prob)
    prev = FeedbackGain(F=central.F, pattern=central.F != 0.0, blocks=blocks)
    entries: list[SweepEntry] = []
    for gamma in gammas:
        res = admm_sparsify(prob, gamma, prev, opts)
        j_admm = lqr_cost(res.gain, prob)
        polished = polish_structured(prob, res.gain.pattern, res.gain)
        entries.append(SweepEntry(
            gamma=gamma, gain=polished, nnz=polished.nnz,
            J=lqr_cost(polished, prob), J_admm=j_admm,
            admm_iterations=res.iterations, admm_converged=res.converged))
        prev = polished
    return entries
