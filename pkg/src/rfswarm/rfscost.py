"""Distributional tracking objective over stacked Gaussian-mixture means.

Per step the cost is

    u'Ru + sum_ff - 2 sum_fg + sum_gg - alpha * sum_log

where the mixture sums pair every current component against every current
(ff) or desired (fg, log) component with densities evaluated at the
covariance sums.  Only the means are decision variables; the component
covariances are held fixed, so the pairwise covariance-sum inverses are
precomputed once per objective and shared.

The scalar sums are accumulated with ``math.fsum``, which makes the cost
exactly invariant under permutations of the current components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mixkernel
from .errors import DimensionMismatch, NotPositiveDefinite
from .gaussmix import GmIntensity, _pairwise_inv_logdet


@dataclass(frozen=True)
class StackedState:
    """Concatenated current-component means plus their weights."""

    means: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float).ravel())
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())
        if self.weights.size and self.means.size % self.weights.size:
            raise DimensionMismatch(
                f"{self.means.size} stacked entries do not split over "
                f"{self.weights.size} components")

    @property
    def n_components(self) -> int:
        return self.weights.size

    def reshaped(self) -> np.ndarray:
        return self.means.reshape(self.n_components, -1)


@dataclass
class CostDerivatives:
    """First/second derivatives of the running cost at one (x, u) point.

    ``lxx`` is the positive-semidefinite projection (eigenvalues clipped
    at zero) used inside the ILQR backward pass; ``lxx_raw`` keeps the
    unprojected Hessian.
    """

    lx: np.ndarray
    lu: np.ndarray
    lxx: np.ndarray
    lxx_raw: np.ndarray
    luu: np.ndarray
    lux: np.ndarray


def psd_project(mat: np.ndarray) -> np.ndarray:
    """Nearest (in Frobenius norm) positive-semidefinite matrix."""
    sym = 0.5 * (mat + mat.T)
    eigval, eigvec = np.linalg.eigh(sym)
    clipped = (eigvec * np.clip(eigval, 0.0, None)) @ eigvec.T
    return 0.5 * (clipped + clipped.T)


class RfsObjective:
    """Desired intensity, control weight, and fixed current covariances.

    Instances cache the pairwise covariance-sum inverses; use
    :meth:`with_desired_means` to rebuild the objective for a moved
    (e.g. rotated) target pattern without recomputing those tables.
    """

    def __init__(self, desired: GmIntensity, R, alpha: float, fixed_covs,
                 _shared=None):
        self.desired = desired
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.alpha = float(alpha)
        self.fixed_covs = np.asarray(fixed_covs, dtype=float)
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if len(desired) == 0 or desired.mass() <= 0:
            raise ValueError("desired intensity must carry positive mass")
        if self.fixed_covs.ndim != 3 or self.fixed_covs.shape[1] != self.fixed_covs.shape[2]:
            raise DimensionMismatch(
                f"fixed_covs must be (N, d, d), got {self.fixed_covs.shape}")
        if self.fixed_covs.shape[2] != desired.dim:
            raise DimensionMismatch(
                f"component dim {self.fixed_covs.shape[2]} != desired dim {desired.dim}")
        if not np.allclose(self.R, self.R.T):
            raise ValueError("R must be symmetric")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("R must be positive definite") from None
        self._mg = desired.means()
        self._wg = desired.weights()
        if _shared is not None:
            (self._sff_inv, self._ldff, self._sfg_inv, self._ldfg,
             self._sgg_inv, self._ldgg) = _shared
        else:
            try:
                self._sff_inv, self._ldff = _pairwise_inv_logdet(
                    self.fixed_covs, self.fixed_covs)
                covs_g = desired.covs()
                self._sfg_inv, self._ldfg = _pairwise_inv_logdet(
                    self.fixed_covs, covs_g)
                self._sgg_inv, self._ldgg = _pairwise_inv_logdet(covs_g, covs_g)
            except np.linalg.LinAlgError:
                raise NotPositiveDefinite(
                    "pairwise covariance sums not positive definite") from None
        self._gg_terms = mixkernel.pair_terms(
            self._mg, self._wg, self._mg, self._wg, self._sgg_inv, self._ldgg)

    @property
    def n_current(self) -> int:
        return self.fixed_covs.shape[0]

    @property
    def dim(self) -> int:
        return self.fixed_covs.shape[2]

    def with_desired_means(self, new_means) -> "RfsObjective":
        """Same weights/covariances/tables, relocated desired means."""
        new_means = np.asarray(new_means, dtype=float)
        from .gaussmix import GaussianComponent
        comps = [GaussianComponent(weight=c.weight, mean=new_means[i], cov=c.cov)
                 for i, c in enumerate(self.desired.components)]
        shared = (self._sff_inv, self._ldff, self._sfg_inv, self._ldfg,
                  self._sgg_inv, self._ldgg)
        return RfsObjective(GmIntensity(comps), self.R, self.alpha,
                            self.fixed_covs, _shared=shared)

    def _check_state(self, x: StackedState):
        if x.n_components != self.n_current:
            raise DimensionMismatch(
                f"state has {x.n_components} components, objective expects "
                f"{self.n_current}")
        if x.means.size != self.n_current * self.dim:
            raise DimensionMismatch(
                f"stacked state length {x.means.size} != "
                f"{self.n_current}x{self.dim}")


def _mixture_eval(x: StackedState, obj: RfsObjective, order: int):
    obj._check_state(x)
    mf = x.reshaped()
    return mixkernel.cost_terms(
        mf, x.weights, obj._mg, obj._wg, obj._sff_inv, obj._ldff,
        obj._sfg_inv, obj._ldfg, obj.alpha, order)


def mixture_cost(x: StackedState, obj: RfsObjective) -> float:
    """State-dependent part of the cost (all four mixture sums)."""
    ff_t, fg_t, log_sum, _, _ = _mixture_eval(x, obj, 0)
    terms = np.concatenate(
        [ff_t.ravel(), obj._gg_terms.ravel(), -2.0 * fg_t.ravel()])
    return math.fsum(terms.tolist()) - obj.alpha * log_sum


def mixture_distance_sq(x: StackedState, obj: RfsObjective) -> float:
    """Squared L2 mixture distance ``ff + gg - 2 fg`` (no log term)."""
    ff_t, fg_t, _, _, _ = _mixture_eval(x, obj, 0)
    terms = np.concatenate(
        [ff_t.ravel(), obj._gg_terms.ravel(), -2.0 * fg_t.ravel()])
    return math.fsum(terms.tolist())


def control_cost(u: np.ndarray, obj: RfsObjective) -> float:
    u = np.asarray(u, dtype=float).ravel()
    if u.size != obj.R.shape[0]:
        raise DimensionMismatch(f"control length {u.size} != R dim {obj.R.shape[0]}")
    return math.fsum((u * (obj.R @ u)).tolist())


def running_cost(x: StackedState, u, obj: RfsObjective) -> float:
    """Full per-step cost: control quadratic plus the mixture sums."""
    return control_cost(u, obj) + mixture_cost(x, obj)


def cost_derivatives(x: StackedState, u, obj: RfsObjective) -> CostDerivatives:
    """Analytic gradient/Hessian of :func:`running_cost` at ``(x, u)``."""
    u = np.asarray(u, dtype=float).ravel()
    _, _, _, grad, hess = _mixture_eval(x, obj, 2)
    lxx_raw = 0.5 * (hess + hess.T)
    m = obj.R.shape[0]
    return CostDerivatives(
        lx=grad,
        lu=2.0 * (obj.R @ u),
        lxx=psd_project(lxx_raw),
        lxx_raw=lxx_raw,
        luu=2.0 * obj.R,
        lux=np.zeros((m, x.means.size)),
    )


def terminal_cost(x: StackedState, obj: RfsObjective) -> float:
    """Final-step cost: the mixture sums with no control term."""
    return mixture_cost(x, obj)


def terminal_derivatives(x: StackedState, obj: RfsObjective):
    """Gradient, PSD-projected Hessian, and raw Hessian of the terminal cost."""
    _, _, _, grad, hess = _mixture_eval(x, obj, 2)
    lxx_raw = 0.5 * (hess + hess.T)
    return grad, psd_project(lxx_raw), lxx_raw


class RfsCostModel:
    """Stage-indexed cost adapter consumed by the ILQR solver.

    ``objectives`` is either one :class:`RfsObjective` reused at every
    step or a sequence of length ``horizon + 1`` (a moving target, e.g. a
    spinning formation); the last entry doubles as the terminal cost.
    """

    def __init__(self, objectives, weights, horizon: int, psd_hessian: bool = True):
        if isinstance(objectives, RfsObjective):
            self._objs = [objectives] * (horizon + 1)
        else:
            self._objs = list(objectives)
            if len(self._objs) != horizon + 1:
                raise DimensionMismatch(
                    f"{len(self._objs)} objectives for horizon {horizon}")
        self.weights = np.asarray(weights, dtype=float).ravel()
        self.horizon = int(horizon)
        self.psd_hessian = bool(psd_hessian)

    def objective_at(self, k: int) -> RfsObjective:
        return self._objs[k]

    def _state(self, x) -> StackedState:
        return StackedState(means=x, weights=self.weights)

    def stage_cost(self, x, u, k: int) -> float:
        return running_cost(self._state(x), u, self._objs[k])

    def stage_derivatives(self, x, u, k: int):
        der = cost_derivatives(self._state(x), u, self._objs[k])
        if not self.psd_hessian:
            der.lxx = der.lxx_raw
        return der

    def terminal_cost(self, x) -> float:
        return terminal_cost(self._state(x), self._objs[-1])

    def terminal_derivatives(self, x):
        lx, lxx, lxx_raw = terminal_derivatives(self._state(x), self._objs[-1])
        return (lx, lxx) if self.psd_hessian else (lx, lxx_raw)
