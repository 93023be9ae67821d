"""GM-PHD filter: closed-form intensity prediction and measurement update
plus the usual mixture management (prune, merge, cap, extract).

The intensity is a :class:`~rfswarm.gaussmix.GmIntensity` whose total
weight tracks the expected number of agents; no per-agent identities are
kept anywhere in the recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .gaussmix import GaussianComponent, GmIntensity, chol_spd, log_gaussian, predict_component


@dataclass(frozen=True)
class SpawnTemplate:
    """Spawned-component recipe applied to each parent component.

    A spawned component keeps the parent's shape: weight scaled by
    ``weight_scale``, mean shifted by ``mean_offset``, covariance widened
    by ``cov_add``.
    """

    weight_scale: float
    mean_offset: np.ndarray
    cov_add: np.ndarray

    def __post_init__(self):
        if self.weight_scale < 0:
            raise ValueError(f"spawn weight scale must be >= 0, got {self.weight_scale}")
        object.__setattr__(self, "mean_offset",
                           np.asarray(self.mean_offset, dtype=float).ravel())
        object.__setattr__(self, "cov_add",
                           np.atleast_2d(np.asarray(self.cov_add, dtype=float)))


@dataclass
class BirthModel:
    """Birth intensity plus spawn templates for the prediction step."""

    birth: GmIntensity = field(default_factory=GmIntensity)
    spawn_templates: list[SpawnTemplate] = field(default_factory=list)

    def spawn_mass_scale(self) -> float:
        return float(sum(t.weight_scale for t in self.spawn_templates))


@dataclass
class SensorModel:
    """Detection, clutter, and measurement model of the swarm sensor.

    ``clutter_density`` is the value of the uniform clutter density over
    the surveillance region, so the clutter intensity is
    ``clutter_rate * clutter_density`` at every measurement.
    """

    pd: float
    clutter_rate: float
    clutter_density: float
    H: np.ndarray
    Rn: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.pd <= 1.0:
            raise ValueError(f"pd must lie in [0, 1], got {self.pd}")
        if self.clutter_rate < 0:
            raise ValueError(f"clutter_rate must be >= 0, got {self.clutter_rate}")
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.Rn = np.atleast_2d(np.asarray(self.Rn, dtype=float))

    @property
    def kappa(self) -> float:
        """Clutter intensity evaluated at any point of the region."""
        return self.clutter_rate * self.clutter_density


@dataclass
class PhdConfig:
    """Survival probability and mixture-management thresholds."""

    ps: float = 1.0
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    max_components: int = 100
    extract_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.ps <= 1.0:
            raise ValueError(f"ps must lie in [0, 1], got {self.ps}")
        if min(self.prune_threshold, self.merge_threshold,
               self.extract_threshold) < 0:
            raise ValueError("thresholds must be >= 0")
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")


def expected_count(v: GmIntensity) -> float:
    """Expected number of agents: the total mass of the intensity."""
    return v.mass()


def phd_predict(v: GmIntensity, u_per_component, plant, birth: BirthModel,
                cfg: PhdConfig) -> GmIntensity:
    """Time-update the intensity: birth, scaled survivors, and spawns.

    ``u_per_component`` supplies one control vector per surviving
    component; birth and spawned components receive no control.
    """
    if len(u_per_component) != len(v):
        raise DimensionMismatch(
            f"{len(u_per_component)} controls for {len(v)} components")
    out: list[GaussianComponent] = list(birth.birth.components)
    for c, u in zip(v.components, u_per_component):
        moved = predict_component(c, u, plant)
        out.append(GaussianComponent(weight=cfg.ps * moved.weight,
                                     mean=moved.mean, cov=moved.cov))
    for tpl in birth.spawn_templates:
        for c in v.components:
            out.append(GaussianComponent(
                weight=tpl.weight_scale * c.weight,
                mean=c.mean + tpl.mean_offset,
                cov=c.cov + tpl.cov_add))
    return GmIntensity(out)


def phd_update(v_pred: GmIntensity, Z, sensor: SensorModel) -> GmIntensity:
    """Measurement-update the intensity with the measurement set ``Z``.

    Keeps one ``(1 - pd)``-scaled copy of every predicted component and
    adds one Kalman-updated component per (measurement, component) pair,
    with weights normalized per measurement against clutter.
    """
    comps = v_pred.components
    out = [GaussianComponent(weight=(1.0 - sensor.pd) * c.weight,
                             mean=c.mean, cov=c.cov) for c in comps]
    Z = [np.asarray(z, dtype=float).ravel() for z in Z]
    if not Z or not comps:
        return GmIntensity(out)
    h, rn = sensor.H, sensor.Rn
    # Per-component innovation statistics, shared across measurements.
    etas, gains, covs_upd, s_mats = [], [], [], []
    for c in comps:
        s = h @ c.cov @ h.T + rn
        chol = chol_spd(s)
        k_gain = np.linalg.solve(chol.T, np.linalg.solve(chol, h @ c.cov)).T
        p_upd = (np.eye(c.dim) - k_gain @ h) @ c.cov
        etas.append(h @ c.mean)
        gains.append(k_gain)
        covs_upd.append(0.5 * (p_upd + p_upd.T))
        s_mats.append(s)
    for z in Z:
        if z.shape[0] != h.shape[0]:
            raise DimensionMismatch(
                f"measurement dim {z.shape[0]} != {h.shape[0]}")
        likes = np.array([math.exp(log_gaussian(z, etas[j], s_mats[j]))
                          for j in range(len(comps))])
        raw = sensor.pd * np.array([c.weight for c in comps]) * likes
        denom = sensor.kappa + float(np.sum(raw))
        for j, c in enumerate(comps):
            out.append(GaussianComponent(
                weight=raw[j] / denom,
                mean=c.mean + gains[j] @ (z - etas[j]),
                cov=covs_upd[j]))
    return GmIntensity(out)


def _merge_pass(comps: list[GaussianComponent], threshold: float):
    """One highest-weight-first merge sweep; returns (merged, changed)."""
    remaining = list(range(len(comps)))
    out: list[GaussianComponent] = []
    changed = False
    while remaining:
        j = max(remaining, key=lambda i: (comps[i].weight, -i))
        cj = comps[j]
        chol = chol_spd(cj.cov)
        group = []
        for i in remaining:
            diff = comps[i].mean - cj.mean
            z = np.linalg.solve(chol, diff)
            if float(z @ z) <= threshold:
                group.append(i)
        w = sum(comps[i].weight for i in group)
        if len(group) > 1 and w > 0:
            changed = True
            mean = sum(comps[i].weight * comps[i].mean for i in group) / w
            cov = np.zeros_like(cj.cov)
            for i in group:
                d = mean - comps[i].mean
                cov += comps[i].weight * (comps[i].cov + np.outer(d, d))
            cov /= w
            out.append(GaussianComponent(weight=w, mean=mean,
                                         cov=0.5 * (cov + cov.T)))
        else:
            out.append(cj)
        remaining = [i for i in remaining if i not in group]
    return out, changed


def prune_merge(v: GmIntensity, cfg: PhdConfig) -> GmIntensity:
    """Drop light components, merge close ones, cap the component count.

    The merge sweep repeats until it reaches a fixed point, which makes
    the whole operation idempotent.
    """
    comps = [c for c in v.components if c.weight >= cfg.prune_threshold]
    changed = True
    while changed and len(comps) > 1:
        comps, changed = _merge_pass(comps, cfg.merge_threshold)
    comps.sort(key=lambda c: -c.weight)
    return GmIntensity(comps[:cfg.max_components])


def extract_states(v: GmIntensity, cfg: PhdConfig) -> list[tuple[np.ndarray, float]]:
    """Means of heavy components, replicated per their rounded weight.

    A component with weight above the extraction threshold appears
    ``round(weight)`` times (half-up), never more than ``ceil(weight)``.
    """
    out: list[tuple[np.ndarray, float]] = []
    for c in v.components:
        if c.weight > cfg.extract_threshold:
            count = min(int(math.floor(c.weight + 0.5)), math.ceil(c.weight))
            out.extend((c.mean.copy(), c.weight) for _ in range(count))
    return out
