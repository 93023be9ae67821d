"""Clohessy-Wiltshire relative-motion plants and block-diagonal swarm
assembly.

State per agent is ``[x, y, z, xdot, ydot, zdot]`` in the chief's LVLH
frame; controls are accelerations ``[ax, ay, az]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveInput
from .mateq import zoh_discretize

# Default scenario constants: LEO chief at roughly 400 km altitude.
MU_EARTH = 3.986e14   # m^3/s^2
SMA_LEO = 6.778e6     # m


@dataclass(frozen=True)
class LinearPlant:
    """Continuous/discrete LTI plant with noise and measurement models.

    ``(A, B)`` must be the zero-order-hold discretization of ``(Ac, Bc)``
    at ``dt``; use :func:`make_plant` rather than building instances by
    hand.
    """

    Ac: np.ndarray
    Bc: np.ndarray
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    Qn: np.ndarray
    Rn: np.ndarray
    dt: float

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    @property
    def meas_dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class SwarmPlant:
    """Block-diagonal replication of one agent plant across the swarm."""

    per_agent: LinearPlant
    n_agents: int
    A: np.ndarray
    B: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    @property
    def state_dims(self) -> tuple[int, ...]:
        return (self.per_agent.state_dim,) * self.n_agents

    @property
    def control_dims(self) -> tuple[int, ...]:
        return (self.per_agent.control_dim,) * self.n_agents


def orbital_rate(mu: float, a: float) -> float:
    """Mean motion ``n = sqrt(mu / a^3)`` of a circular orbit (rad/s)."""
    if mu <= 0 or a <= 0:
        raise NonPositiveInput(f"mu and a must be positive, got mu={mu}, a={a}")
    return float(np.sqrt(mu / a**3))


def cw_matrices(n: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous Clohessy-Wiltshire state-space matrices for rate ``n``.

    Returns the 6x6 drift matrix and the 6x3 acceleration input matrix.
    ``n = 0`` degenerates to three decoupled double integrators.
    """
    if n < 0:
        raise NonPositiveInput(f"orbital rate must be nonnegative, got {n}")
    ac = np.zeros((6, 6))
    ac[0, 3] = 1.0
    ac[1, 4] = 1.0
    ac[2, 5] = 1.0
    ac[3, 0] = 3.0 * n**2
    ac[3, 4] = 2.0 * n
    ac[4, 3] = -2.0 * n
    ac[5, 2] = -(n**2)
    bc = np.zeros((6, 3))
    bc[3:, :] = np.eye(3)
    return ac, bc


def make_plant(ac, bc, h, qn, rn, dt: float) -> LinearPlant:
    """Discretize ``(ac, bc)`` at ``dt`` and bundle the plant matrices."""
    a, b = zoh_discretize(ac, bc, dt)
    ac = np.asarray(ac, dtype=float)
    bc = np.asarray(bc, dtype=float)
    h = np.atleast_2d(np.asarray(h, dtype=float))
    qn = np.atleast_2d(np.asarray(qn, dtype=float))
    rn = np.atleast_2d(np.asarray(rn, dtype=float))
    n = ac.shape[0]
    if h.shape[1] != n:
        raise DimensionMismatch(f"H columns {h.shape[1]} != state dim {n}")
    if qn.shape != (n, n):
        raise DimensionMismatch(f"Qn must be {n}x{n}, got {qn.shape}")
    if rn.shape != (h.shape[0], h.shape[0]):
        raise DimensionMismatch(f"Rn must match H rows, got {rn.shape}")
    return LinearPlant(Ac=ac, Bc=bc, A=a, B=b, H=h, Qn=qn, Rn=rn, dt=float(dt))


def cw_plant(mu: float = MU_EARTH, a: float = SMA_LEO, dt: float = 10.0,
             qn=None, rn=None) -> LinearPlant:
    """Discrete CW plant with position-only measurements ``H = [I3 | 0]``."""
    n = orbital_rate(mu, a)
    ac, bc = cw_matrices(n)
    h = np.hstack([np.eye(3), np.zeros((3, 3))])
    if qn is None:
        qn = np.zeros((6, 6))
    if rn is None:
        rn = 1e-4 * np.eye(3)
    return make_plant(ac, bc, h, qn, rn, dt)


def build_swarm_plant(per_agent: LinearPlant, n_agents: int) -> SwarmPlant:
    """Stack ``n_agents`` copies of a plant into exact block-diagonal form."""
    if n_agents < 1:
        raise NonPositiveInput(f"n_agents must be >= 1, got {n_agents}")
    eye = np.eye(n_agents)
    return SwarmPlant(
        per_agent=per_agent,
        n_agents=int(n_agents),
        A=np.kron(eye, per_agent.A),
        B=np.kron(eye, per_agent.B),
    )
