"""Iterative LQR for linear plants with nonquadratic stage costs.

Backward pass: local quadratic expansion of the Q-function with the plant
Jacobians ``f_x = A`` and ``f_u = B`` (constant for the linear dynamics in
scope).  Forward pass: policy rollout with a backtracking line search on
the feed-forward term.  The converged schedule yields the static feedback
gain that the sparsity-promoting synthesis consumes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._blas import single_threaded_blas
from .errors import (
    DimensionMismatch,
    LineSearchFailed,
    NonFinite,
    RegularizationExhausted,
    StallWarning,
)
from .rfscost import StackedState
from .sparselqr import BlockPartition, FeedbackGain


@dataclass
class Trajectory:
    """State/control rollout with its total cost.

    ``states`` has one more row than ``controls``; ``weights`` carries the
    mixture-component weights that ride along with the stacked means.
    """

    states: np.ndarray
    controls: np.ndarray
    weights: np.ndarray
    cost: float

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    def initial_state(self) -> StackedState:
        return StackedState(means=self.states[0], weights=self.weights)


@dataclass
class GainSchedule:
    """Per-step feedback/feed-forward gains from one backward pass."""

    K: np.ndarray
    k: np.ndarray
    dV: np.ndarray
    blocks: BlockPartition | None = None


@dataclass
class IlqrOptions:
    max_iter: int = 100
    tol: float = 1e-6
    reg0: float = 1e-8
    reg_escalations: int = 20
    backtrack_steps: int = 11
    psd_hessian: bool = True


@dataclass
class IlqrResult:
    trajectory: Trajectory
    gains: GainSchedule
    cost_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


class QuadraticCost:
    """Plain LQ stage cost ``x'Qx + u'Ru`` with terminal ``x'Qf x``.

    Optional references turn it into a tracking cost about
    ``(x_ref, u_ref)``; used by the tests to pin the solver against the
    Riccati recursion.
    """

    def __init__(self, Q, R, Qf=None, x_ref=None, u_ref=None):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.Qf = self.Q if Qf is None else np.atleast_2d(np.asarray(Qf, dtype=float))
        self.x_ref = None if x_ref is None else np.asarray(x_ref, dtype=float)
        self.u_ref = None if u_ref is None else np.asarray(u_ref, dtype=float)

    def _dx(self, x, k):
        if self.x_ref is None:
            return x
        ref = self.x_ref if self.x_ref.ndim == 1 else self.x_ref[k]
        return x - ref

    def _du(self, u, k):
        if self.u_ref is None:
            return u
        ref = self.u_ref if self.u_ref.ndim == 1 else self.u_ref[k]
        return u - ref

    def stage_cost(self, x, u, k):
        dx, du = self._dx(x, k), self._du(u, k)
        return float(dx @ self.Q @ dx + du @ self.R @ du)

    def stage_derivatives(self, x, u, k):
        from .rfscost import CostDerivatives
        dx, du = self._dx(x, k), self._du(u, k)
        n, m = self.Q.shape[0], self.R.shape[0]
        return CostDerivatives(
            lx=2.0 * (self.Q @ dx), lu=2.0 * (self.R @ du),
            lxx=2.0 * self.Q, lxx_raw=2.0 * self.Q,
            luu=2.0 * self.R, lux=np.zeros((m, n)))

    def terminal_cost(self, x):
        dx = self._dx(x, -1)
        return float(dx @ self.Qf @ dx)

    def terminal_derivatives(self, x):
        dx = self._dx(x, -1)
        return 2.0 * (self.Qf @ dx), 2.0 * self.Qf


def _as_flat_state(x0) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(x0, StackedState):
        return x0.means.copy(), x0.weights.copy()
    return np.asarray(x0, dtype=float).ravel().copy(), None


def evaluate_cost(model, states, controls) -> float:
    total = 0.0
    for k in range(controls.shape[0]):
        total += model.stage_cost(states[k], controls[k], k)
    return total + model.terminal_cost(states[-1])


def rollout(x0, controls, plant, model) -> Trajectory:
    """Open-loop rollout of a control sequence through the linear plant."""
    x, weights = _as_flat_state(x0)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    a, b = plant.A, plant.B
    if x.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"x0 dim {x.shape[0]} != plant dim {a.shape[0]}")
    if weights is None:
        weights = np.asarray(getattr(model, "weights", np.ones(1)), dtype=float)
    n_steps = controls.shape[0]
    states = np.empty((n_steps + 1, x.shape[0]))
    states[0] = x
    for k in range(n_steps):
        states[k + 1] = a @ states[k] + b @ controls[k]
    if not np.all(np.isfinite(states)):
        raise NonFinite("rollout diverged")
    cost = evaluate_cost(model, states, controls)
    return Trajectory(states=states, controls=controls.copy(),
                      weights=np.asarray(weights, dtype=float), cost=cost)


def backward_pass(traj: Trajectory, plant, model, reg: float = 0.0) -> GainSchedule:
    """Build the time-varying policy from the local Q-function expansion.

    The control Hessian is regularized as ``Quu + reg*s*I`` with the scale
    ``s = max(1, trace(Quu)/m)``, so ``reg`` acts as an absolute level on
    unit-scale problems and stays meaningful on badly scaled ones; a
    failed Cholesky factorization is retried with ten-fold escalation.
    """
    a, b = plant.A, plant.B
    n, m = a.shape[0], b.shape[1]
    n_steps = traj.horizon
    gains_K = np.empty((n_steps, m, n))
    gains_k = np.empty((n_steps, m))
    dv = np.empty(n_steps)
    vx, vxx = model.terminal_derivatives(traj.states[n_steps])
    cur_reg = reg
    for k in range(n_steps - 1, -1, -1):
        der = model.stage_derivatives(traj.states[k], traj.controls[k], k)
        qx = der.lx + a.T @ vx
        qu = der.lu + b.T @ vx
        qxx = der.lxx + a.T @ vxx @ a
        quu = der.luu + b.T @ vxx @ b
        qux = der.lux + b.T @ vxx @ a
        quu = 0.5 * (quu + quu.T)
        scale = max(1.0, abs(float(np.trace(quu))) / m)
        chol = None
        for _ in range(1 + 8):
            quu_reg = quu if cur_reg == 0.0 else quu + cur_reg * scale * np.eye(m)
            try:
                chol = sla.cho_factor(quu_reg, lower=True)
                break
            except np.linalg.LinAlgError:
                cur_reg = 10.0 * cur_reg if cur_reg > 0.0 else max(reg, 1e-8)
        else:
            raise RegularizationExhausted(
                f"Quu not PD at step {k} after 8 escalations (reg={cur_reg:.1e})")
        kmat = -sla.cho_solve(chol, qux)
        kvec = -sla.cho_solve(chol, qu)
        gains_K[k] = kmat
        gains_k[k] = kvec
        dv[k] = -0.5 * float(kvec @ quu_reg @ kvec)
        vx = qx - kmat.T @ quu_reg @ kvec
        vxx = qxx - kmat.T @ quu_reg @ kmat
        vxx = 0.5 * (vxx + vxx.T)
    blocks = None
    if hasattr(plant, "n_agents"):
        blocks = BlockPartition(control_dims=plant.control_dims,
                                state_dims=plant.state_dims)
    return GainSchedule(K=gains_K, k=gains_k, dV=dv, blocks=blocks)


def forward_pass(traj: Trajectory, gains: GainSchedule, step: float,
                 plant, model) -> Trajectory:
    """Roll out the updated policy with feed-forward scaled by ``step``."""
    if not 0.0 <= step <= 1.0:
        raise ValueError(f"step must lie in [0, 1], got {step}")
    a, b = plant.A, plant.B
    n_steps = traj.horizon
    states = np.empty_like(traj.states)
    controls = np.empty_like(traj.controls)
    states[0] = traj.states[0]
    for k in range(n_steps):
        controls[k] = (traj.controls[k] + step * gains.k[k]
                       + gains.K[k] @ (states[k] - traj.states[k]))
        states[k + 1] = a @ states[k] + b @ controls[k]
        if not np.all(np.isfinite(states[k + 1])):
            raise NonFinite(f"forward pass diverged at step {k}")
    cost = evaluate_cost(model, states, controls)
    return Trajectory(states=states, controls=controls,
                      weights=traj.weights, cost=cost)


def ilqr_solve(x0, u0, plant, model, opts: IlqrOptions | None = None) -> IlqrResult:
    """Alternate backward/forward passes until the cost plateaus.

    The line search halves the feed-forward step and accepts the first
    strict cost decrease; when no step moves the cost by more than the
    relative tolerance the iteration has converged.  When the quadratic
    model overshoots so badly that no backtracked step descends, the
    backward pass is repeated with ten-fold regularization (up to
    ``reg_escalations`` times) before giving up.  Accepted costs are
    strictly decreasing, so the returned history is non-increasing.
    """
    opts = opts or IlqrOptions()
    if hasattr(model, "psd_hessian"):
        model.psd_hessian = opts.psd_hessian
    u0 = np.atleast_2d(np.asarray(u0, dtype=float))
    if not np.all(np.isfinite(u0)):
        raise NonFinite("initial controls not finite")
    with single_threaded_blas():
        return _ilqr_loop(x0, u0, plant, model, opts)


def _ilqr_loop(x0, u0, plant, model, opts: IlqrOptions) -> IlqrResult:
    traj = rollout(x0, u0, plant, model)
    history = [traj.cost]
    steps = [0.5 ** i for i in range(opts.backtrack_steps)]
    gains = None
    converged = False
    iterations = 0
    reg = opts.reg0
    for _ in range(opts.max_iter):
        iterations += 1
        candidate = None
        for escalation in range(opts.reg_escalations + 1):
            gains = backward_pass(traj, plant, model, reg=reg)
            for step in steps:
                trial = forward_pass(traj, gains, step, plant, model)
                if trial.cost < traj.cost:
                    candidate = trial
                    break
                if abs(trial.cost - traj.cost) <= opts.tol * max(1.0, abs(traj.cost)):
                    converged = True
                    break
            if candidate is not None or converged:
                break
            reg = 10.0 * reg if reg > 0.0 else opts.reg0
        if converged:
            break
        if candidate is None:
            raise LineSearchFailed(
                f"no step in 1..2^-{opts.backtrack_steps - 1} decreased the cost "
                f"(J={traj.cost:.6e}, reg={reg:.1e})")
        reg = max(opts.reg0, 0.1 * reg)
        drop = traj.cost - candidate.cost
        traj = candidate
        history.append(traj.cost)
        if drop <= opts.tol * max(1.0, abs(traj.cost)):
            converged = True
            break
    if gains is None:
        gains = backward_pass(traj, plant, model, reg=opts.reg0)
    return IlqrResult(trajectory=traj, gains=gains, cost_history=history,
                      iterations=iterations, converged=converged)


def extract_static_gain(gains: GainSchedule, mode: str = "terminal") -> FeedbackGain:
    """Collapse a gain schedule to one static gain in the ``u = -Fx`` sign
    convention.

    ``terminal`` takes the first-step gain of the converged schedule;
    ``steady_state`` scans for the first step whose gain matches its
    successor to 1e-6 relative, falling back to the first-step gain with a
    warning when no plateau exists.
    """
    if gains.K.shape[0] == 0:
        raise ValueError("empty gain schedule")
    if mode not in ("terminal", "steady_state"):
        raise ValueError(f"unknown mode {mode!r}")
    k_sel = gains.K[0]
    if mode == "steady_state" and gains.K.shape[0] > 1:
        found = False
        for k in range(gains.K.shape[0] - 1):
            denom = np.linalg.norm(gains.K[k])
            if denom == 0.0:
                continue
            if np.linalg.norm(gains.K[k] - gains.K[k + 1]) / denom < 1e-6:
                k_sel = gains.K[k]
                found = True
                break
        if not found:
            warnings.warn("no steady-state plateau in the gain schedule; "
                          "returning the first-step gain", StallWarning)
    f = -k_sel
    return FeedbackGain(F=f, pattern=f != 0.0, blocks=gains.blocks)
