"""Scenario configuration: dataclasses, strict JSON (de)serialization, and
the shipped 12-agent spacecraft-swarm defaults.

Config files are plain JSON mirroring :class:`ScenarioConfig`; unknown
keys are rejected at every nesting level so typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import MU_EARTH, SMA_LEO
from .errors import ConfigError


def _take(src: dict, ctx: str):
    """Return a popper over a copied dict that flags leftover keys."""
    if not isinstance(src, dict):
        raise ConfigError(f"{ctx}: expected an object, got {type(src).__name__}")
    pending = dict(src)

    def pop(key, default=None, required=False):
        if key in pending:
            return pending.pop(key)
        if required:
            raise ConfigError(f"{ctx}: missing required key {key!r}")
        return default

    def finish():
        if pending:
            raise ConfigError(f"{ctx}: unknown keys {sorted(pending)}")

    return pop, finish


def _positive(value, name):
    value = float(value)
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


@dataclass
class FormationSpec:
    """Desired-intensity description: a spinning two-ring star or an
    explicit component list."""

    kind: str = "star"
    radius: float = 1.0
    spin: bool = True
    pos_std: float = 0.15
    vel_std: float = 5e-4
    means: list | None = None
    weights: list | None = None

    def to_dict(self):
        out = {"kind": self.kind, "radius": self.radius, "spin": self.spin,
               "pos_std": self.pos_std, "vel_std": self.vel_std}
        if self.kind == "explicit":
            out["means"] = [list(map(float, m)) for m in self.means]
            if self.weights is not None:
                out["weights"] = list(map(float, self.weights))
        return out

    @classmethod
    def from_dict(cls, d):
        pop, finish = _take(d, "formation")
        kind = pop("kind", "star")
        if kind not in ("star", "explicit"):
            raise ConfigError(f"formation.kind must be star|explicit, got {kind!r}")
        spec = cls(
            kind=kind,
            radius=float(pop("radius", 1.0)),
            spin=bool(pop("spin", True)),
            pos_std=_positive(pop("pos_std", 0.15), "formation.pos_std"),
            vel_std=_positive(pop("vel_std", 5e-4), "formation.vel_std"),
            means=pop("means"),
            weights=pop("weights"),
        )
        finish()
        if spec.kind == "explicit":
            if not spec.means:
                raise ConfigError("explicit formation requires 'means'")
            spec.means = [list(map(float, m)) for m in spec.means]
            if any(len(m) != 6 for m in spec.means):
                raise ConfigError("explicit formation means must have 6 entries")
        elif spec.means is not None or spec.weights is not None:
            raise ConfigError("star formation does not accept means/weights")
        if spec.radius <= 0:
            raise ConfigError(f"formation.radius must be positive, got {spec.radius}")
        return spec


@dataclass
class SensorSpec:
    pd: float = 0.98
    clutter_rate: float = 1.0
    region: list = field(default_factory=lambda: [[-5.0, 5.0]] * 3)
    meas_noise_std: float = 0.01

    def to_dict(self):
        return {"pd": self.pd, "clutter_rate": self.clutter_rate,
                "region": [list(map(float, r)) for r in self.region],
                "meas_noise_std": self.meas_noise_std}

    @classmethod
    def from_dict(cls, d):
        pop, finish = _take(d, "sensor")
        spec = cls(
            pd=float(pop("pd", 0.98)),
            clutter_rate=float(pop("clutter_rate", 1.0)),
            region=pop("region", [[-5.0, 5.0]] * 3),
            meas_noise_std=_positive(pop("meas_noise_std", 0.01),
                                     "sensor.meas_noise_std"),
        )
        finish()
        if not 0.0 <= spec.pd <= 1.0:
            raise ConfigError(f"sensor.pd must lie in [0,1], got {spec.pd}")
        if spec.clutter_rate < 0:
            raise ConfigError("sensor.clutter_rate must be >= 0")
        region = np.asarray(spec.region, dtype=float)
        if region.shape != (3, 2) or np.any(region[:, 1] <= region[:, 0]):
            raise ConfigError("sensor.region must be three [lo, hi] pairs")
        spec.region = region.tolist()
        return spec

    def volume(self) -> float:
        region = np.asarray(self.region, dtype=float)
        return float(np.prod(region[:, 1] - region[:, 0]))


@dataclass
class PhdSpec:
    ps: float = 1.0
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    max_components: int = 100
    extract_threshold: float = 0.5

    def to_dict(self):
        return {"ps": self.ps, "prune_threshold": self.prune_threshold,
                "merge_threshold": self.merge_threshold,
                "max_components": self.max_components,
                "extract_threshold": self.extract_threshold}

    @classmethod
    def from_dict(cls, d):
        pop, finish = _take(d, "phd")
        spec = cls(
            ps=float(pop("ps", 1.0)),
            prune_threshold=float(pop("prune_threshold", 1e-5)),
            merge_threshold=float(pop("merge_threshold", 4.0)),
            max_components=int(pop("max_components", 100)),
            extract_threshold=float(pop("extract_threshold", 0.5)),
        )
        finish()
        if not 0.0 <= spec.ps <= 1.0:
            raise ConfigError(f"phd.ps must lie in [0,1], got {spec.ps}")
        return spec


@dataclass
class IlqrSpec:
    max_iter: int = 100
    tol: float = 1e-6

    def to_dict(self):
        return {"max_iter": self.max_iter, "tol": self.tol}

    @classmethod
    def from_dict(cls, d):
        pop, finish = _take(d, "ilqr")
        spec = cls(max_iter=int(pop("max_iter", 100)),
                   tol=_positive(pop("tol", 1e-6), "ilqr.tol"))
        finish()
        return spec


@dataclass
class AdmmSpec:
    rho: float = 100.0
    eps_abs: float = 1e-4
    max_iter: int = 1000
    g_type: str = "weighted_l1"
    reweight_eps: float = 1e-3
    max_reweight: int = 5
    fmin_max_iter: int = 100
    fmin_grad_tol: float = 1e-4

    def to_dict(self):
        return {"rho": self.rho, "eps_abs": self.eps_abs,
                "max_iter": self.max_iter, "g_type": self.g_type,
                "reweight_eps": self.reweight_eps,
                "max_reweight": self.max_reweight,
                "fmin_max_iter": self.fmin_max_iter,
                "fmin_grad_tol": self.fmin_grad_tol}

    @classmethod
    def from_dict(cls, d):
        pop, finish = _take(d, "admm")
        spec = cls(
            rho=_positive(pop("rho", 100.0), "admm.rho"),
            eps_abs=_positive(pop("eps_abs", 1e-4), "admm.eps_abs"),
            max_iter=int(pop("max_iter", 1000)),
            g_type=str(pop("g_type", "weighted_l1")),
            reweight_eps=_positive(pop("reweight_eps", 1e-3), "admm.reweight_eps"),
            max_reweight=int(pop("max_reweight", 5)),
            fmin_max_iter=int(pop("fmin_max_iter", 100)),
            fmin_grad_tol=_positive(pop("fmin_grad_tol", 1e-4), "admm.fmin_grad_tol"),
        )
        finish()
        if spec.g_type not in ("l1", "weighted_l1", "nnz"):
            raise ConfigError(f"admm.g_type must be l1|weighted_l1|nnz, "
                              f"got {spec.g_type!r}")
        return spec


@dataclass
class ScenarioConfig:
    """Full experiment description; see ``configs/swarm12.json``."""

    n_agents: int = 12
    init_box: float = 1.0
    init_velocity: float = 0.0
    formation: FormationSpec = field(default_factory=FormationSpec)
    dt: float = 10.0
    horizon: int = 240
    r_weight: float = 1e18
    alpha: float = 1.0
    gamma_list: list = field(default_factory=lambda: [0.0])
    mu: float = MU_EARTH
    sma: float = SMA_LEO
    component_pos_std: float = 0.15
    component_vel_std: float = 5e-4
    process_noise_accel: float = 1e-8
    sensor: SensorSpec = field(default_factory=SensorSpec)
    phd: PhdSpec = field(default_factory=PhdSpec)
    ilqr: IlqrSpec = field(default_factory=IlqrSpec)
    admm: AdmmSpec = field(default_factory=AdmmSpec)
    rng_seed: int = 0
    loop_mode: str = "true_state"
    gain_mode: str = "terminal"

    def to_dict(self):
        return {
            "n_agents": self.n_agents,
            "init_box": self.init_box,
            "init_velocity": self.init_velocity,
            "formation": self.formation.to_dict(),
            "dt": self.dt,
            "horizon": self.horizon,
            "r_weight": self.r_weight,
            "alpha": self.alpha,
            "gamma_list": list(map(float, self.gamma_list)),
            "mu": self.mu,
            "sma": self.sma,
            "component_pos_std": self.component_pos_std,
            "component_vel_std": self.component_vel_std,
            "process_noise_accel": self.process_noise_accel,
            "sensor": self.sensor.to_dict(),
            "phd": self.phd.to_dict(),
            "ilqr": self.ilqr.to_dict(),
            "admm": self.admm.to_dict(),
            "rng_seed": self.rng_seed,
            "loop_mode": self.loop_mode,
            "gain_mode": self.gain_mode,
        }

    @classmethod
    def from_dict(cls, d):
        pop, finish = _take(d, "config")
        cfg = cls(
            n_agents=int(pop("n_agents", 12)),
            init_box=float(pop("init_box", 1.0)),
            init_velocity=float(pop("init_velocity", 0.0)),
            formation=FormationSpec.from_dict(pop("formation", {})),
            dt=_positive(pop("dt", 10.0), "dt"),
            horizon=int(pop("horizon", 240)),
            r_weight=_positive(pop("r_weight", 1e18), "r_weight"),
            alpha=float(pop("alpha", 1.0)),
            gamma_list=[float(g) for g in pop("gamma_list", [0.0])],
            mu=_positive(pop("mu", MU_EARTH), "mu"),
            sma=_positive(pop("sma", SMA_LEO), "sma"),
            component_pos_std=_positive(pop("component_pos_std", 0.15),
                                        "component_pos_std"),
            component_vel_std=_positive(pop("component_vel_std", 5e-4),
                                        "component_vel_std"),
            process_noise_accel=float(pop("process_noise_accel", 1e-8)),
            sensor=SensorSpec.from_dict(pop("sensor", {})),
            phd=PhdSpec.from_dict(pop("phd", {})),
            ilqr=IlqrSpec.from_dict(pop("ilqr", {})),
            admm=AdmmSpec.from_dict(pop("admm", {})),
            rng_seed=int(pop("rng_seed", 0)),
            loop_mode=str(pop("loop_mode", "true_state")),
            gain_mode=str(pop("gain_mode", "terminal")),
        )
        finish()
        cfg.validate()
        return cfg

    def validate(self):
        if self.n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.init_box < 0 or self.init_velocity < 0:
            raise ConfigError("init_box and init_velocity must be >= 0")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.process_noise_accel < 0:
            raise ConfigError("process_noise_accel must be >= 0")
        if not self.gamma_list:
            raise ConfigError("gamma_list must not be empty")
        if self.gamma_list[0] != 0.0:
            raise ConfigError("gamma_list must start at 0")
        if any(b < a for a, b in zip(self.gamma_list, self.gamma_list[1:])):
            raise ConfigError("gamma_list must be ascending")
        if self.loop_mode not in ("true_state", "phd_estimate"):
            raise ConfigError(f"loop_mode must be true_state|phd_estimate, "
                              f"got {self.loop_mode!r}")
        if self.gain_mode not in ("terminal", "steady_state"):
            raise ConfigError(f"gain_mode must be terminal|steady_state, "
                              f"got {self.gain_mode!r}")
        if self.formation.kind == "explicit" and \
                len(self.formation.means) != self.n_agents:
            raise ConfigError("explicit formation must list one mean per agent")
        return self


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ScenarioConfig.from_dict(raw)


def star_means(n_agents: int, radius: float, spin_rate: float) -> np.ndarray:
    """Desired means of the two-ring star pattern at time zero.

    Components sit at equal angles, alternating between the outer ring
    (``radius``) and the inner ring (``radius / 2``), in the x-y LVLH
    plane; velocities are tangential so the pattern rotates rigidly at
    ``spin_rate``.
    """
    means = np.zeros((n_agents, 6))
    for i in range(n_agents):
        theta = 2.0 * math.pi * i / n_agents
        r = radius if i % 2 == 0 else 0.5 * radius
        px, py = r * math.cos(theta), r * math.sin(theta)
        means[i, 0], means[i, 1] = px, py
        means[i, 3] = -spin_rate * py
        means[i, 4] = spin_rate * px
    return means


def rotate_means(means: np.ndarray, theta: float) -> np.ndarray:
    """Rotate stacked [pos, vel] means about the z axis by ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    r3 = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    rot = np.zeros((6, 6))
    rot[:3, :3] = r3
    rot[3:, 3:] = r3
    return means @ rot.T


def default_config() -> ScenarioConfig:
    """The shipped 12-agent spacecraft-swarm scenario."""
    return ScenarioConfig.from_dict({
        "n_agents": 12,
        "gamma_list": [0.0, 1e-19, 0.7],
    })
