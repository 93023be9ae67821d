"""Gaussian-mixture intensity algebra.

A :class:`GmIntensity` is the first moment of the swarm's random finite
set: a weighted sum of Gaussian densities whose total weight is the
expected number of agents, not a normalized probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .mixkernel import pair_terms

# Covariances with a smallest eigenvalue in (0, JITTER] get lifted by
# JITTER*I before factorization; genuinely indefinite ones are an error.
JITTER = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted Gaussian term ``w * N(x; mean, cov)`` of an intensity."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).ravel())
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if self.weight < 0:
            raise ValueError(f"component weight must be >= 0, got {self.weight}")
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise DimensionMismatch(
                f"cov shape {self.cov.shape} does not match mean dim {d}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class GmIntensity:
    """Ordered list of Gaussian components sharing one state dimension."""

    components: list[GaussianComponent] = field(default_factory=list)

    def __post_init__(self):
        dims = {c.dim for c in self.components}
        if len(dims) > 1:
            raise DimensionMismatch(f"mixed component dimensions {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    @property
    def dim(self) -> int:
        if not self.components:
            raise ValueError("empty intensity has no dimension")
        return self.components[0].dim

    def mass(self) -> float:
        """Total weight: the expected number of agents."""
        return float(sum(c.weight for c in self.components))

    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    def means(self) -> np.ndarray:
        """Component means stacked into an (N, d) array."""
        return np.array([c.mean for c in self.components], dtype=float)

    def covs(self) -> np.ndarray:
        """Component covariances stacked into an (N, d, d) array."""
        return np.array([c.cov for c in self.components], dtype=float)


def chol_spd(p: np.ndarray) -> np.ndarray:
    """Cholesky factor of a symmetric positive-definite matrix.

    Applies the JITTER lift once when the matrix is merely borderline;
    raises :class:`NotPositiveDefinite` for indefinite input.
    """
    p = 0.5 * (p + p.T)
    try:
        return np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        min_eig = float(np.min(np.linalg.eigvalsh(p)))
        if min_eig < 0.0:
            raise NotPositiveDefinite(
                f"matrix has negative eigenvalue {min_eig:.3e}") from None
        try:
            return np.linalg.cholesky(p + JITTER * np.eye(p.shape[0]))
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(
                f"matrix not positive definite (min eig {min_eig:.3e})") from None


def log_gaussian(x, m, p) -> float:
    """Log-density of ``N(x; m, P)``."""
    x = np.asarray(x, dtype=float).ravel()
    m = np.asarray(m, dtype=float).ravel()
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if x.shape != m.shape or p.shape != (x.size, x.size):
        raise DimensionMismatch(
            f"incompatible shapes x{x.shape}, m{m.shape}, P{p.shape}")
    chol = chol_spd(p)
    z = np.linalg.solve(chol, x - m)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (x.size * _LOG_2PI + logdet + float(z @ z))


def eval_gaussian(x, m, p) -> float:
    """Multivariate normal density, evaluated in the log domain."""
    return math.exp(log_gaussian(x, m, p))


def _pairwise_inv_logdet(covs_a: np.ndarray, covs_b: np.ndarray):
    """Inverses and log-dets of all pairwise covariance sums."""
    s = covs_a[:, None, :, :] + covs_b[None, :, :, :]
    chol = np.linalg.cholesky(0.5 * (s + np.swapaxes(s, -1, -2)))
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    s_inv = np.linalg.inv(s)
    s_inv = 0.5 * (s_inv + np.swapaxes(s_inv, -1, -2))
    return s_inv, logdet


def mixture_l2_inner(f: GmIntensity, g: GmIntensity) -> float:
    """L2 inner product ``integral f(x) g(x) dx`` of two GM intensities.

    Closed form: ``sum_ij wf_i wg_j N(mf_i; mg_j, Pf_i + Pg_j)``.  Terms
    are accumulated with :func:`math.fsum`, which makes the result exactly
    symmetric in its arguments.
    """
    if len(f) == 0 or len(g) == 0:
        return 0.0
    if f.dim != g.dim:
        raise DimensionMismatch(f"dim {f.dim} vs {g.dim}")
    covs_f, covs_g = f.covs(), g.covs()
    try:
        s_inv, logdet = _pairwise_inv_logdet(covs_f, covs_g)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("pairwise covariance sum not SPD") from None
    terms = pair_terms(f.means(), f.weights(), g.means(), g.weights(),
                       s_inv, logdet)
    return math.fsum(terms.ravel().tolist())


def mixture_l2_distance_sq(f: GmIntensity, g: GmIntensity) -> float:
    """Squared L2 distance ``<f,f> + <g,g> - 2 <f,g>``."""
    return (mixture_l2_inner(f, f) + mixture_l2_inner(g, g)
            - 2.0 * mixture_l2_inner(f, g))


def predict_component(c: GaussianComponent, u, plant) -> GaussianComponent:
    """Propagate one component through ``x' = A x + B u`` with noise ``Qn``.

    The weight is untouched; the covariance picks up the process noise.
    """
    u = np.asarray(u, dtype=float).ravel()
    a, b, qn = plant.A, plant.B, plant.Qn
    if c.mean.shape[0] != a.shape[1]:
        raise DimensionMismatch(
            f"component dim {c.mean.shape[0]} != plant dim {a.shape[1]}")
    if u.shape[0] != b.shape[1]:
        raise DimensionMismatch(f"control dim {u.shape[0]} != {b.shape[1]}")
    mean = a @ c.mean + b @ u
    cov = a @ c.cov @ a.T + qn
    return GaussianComponent(weight=c.weight, mean=mean, cov=0.5 * (cov + cov.T))
