"""Scenario runner: the 12-agent relative-motion experiment end to end.

Pipeline per scenario: draw initial component means, build the spinning
desired mixture, solve ILQR for the centralized schedule, derive the
LQR-form weights at the converged terminal state, sweep the sparsity
penalty with ADMM + polishing, roll the closed loop out per gain
(optionally with synthetic measurements and the PHD filter in the loop),
and persist metrics, gains, patterns, adjacency, and trajectories.

Everything downstream of the seed is deterministic: rerunning a config
with the same seed reproduces the exported JSON/CSV files byte for byte.
Wall-clock timings go to a separate ``timings.txt`` for that reason.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import mixkernel, rfscost
from .dynamics import build_swarm_plant, cw_matrices, make_plant, orbital_rate
from .errors import DimensionMismatch, NonFinite, Unstable
from .gaussmix import GaussianComponent, GmIntensity, chol_spd
from .ilqr import IlqrOptions, Trajectory, extract_static_gain, ilqr_solve
from .phd import BirthModel, PhdConfig, SensorModel, extract_states, phd_predict, phd_update, prune_merge
from .rfscost import RfsCostModel, RfsObjective, StackedState
from .scenario import ScenarioConfig, rotate_means, star_means
from .sparselqr import (
    AdmmOptions,
    BlockPartition,
    FeedbackGain,
    FMinOptions,
    SparseLqrProblem,
    gamma_sweep,
    lqr_cost,
)


def generate_measurements(true_states, sensor: SensorModel, rng) -> list[np.ndarray]:
    """Simulate one scan: per-agent detections plus uniform clutter.

    Each agent is detected independently with probability ``pd`` and maps
    through ``H`` with additive Gaussian noise; clutter count is Poisson.
    The returned order is shuffled so measurements carry no identity.
    """
    out = []
    h, rn = sensor.H, sensor.Rn
    noise_chol = None
    if np.any(rn):
        noise_chol = chol_spd(rn)
    for x in true_states:
        x = np.asarray(x, dtype=float).ravel()
        if rng.uniform() < sensor.pd:
            z = h @ x
            if noise_chol is not None:
                z = z + noise_chol @ rng.standard_normal(h.shape[0])
            out.append(z)
    if sensor.clutter_rate > 0:
        region = np.asarray(sensor.region, dtype=float)
        for _ in range(rng.poisson(sensor.clutter_rate)):
            out.append(rng.uniform(region[:, 0], region[:, 1]))
    perm = rng.permutation(len(out))
    return [out[i] for i in perm]


def information_graph(gain, blocks: BlockPartition | None = None) -> np.ndarray:
    """Directed agent adjacency induced by the gain's block pattern.

    Entry (i, j) is 1 when agent i's control rows touch agent j's state
    columns; the diagonal holds the self-loops.
    """
    if isinstance(gain, FeedbackGain):
        pattern = gain.pattern
        blocks = blocks or gain.blocks
    else:
        pattern = np.atleast_2d(np.asarray(gain)) != 0
    if blocks is None:
        raise DimensionMismatch("a block partition is required")
    if pattern.shape != (sum(blocks.control_dims), sum(blocks.state_dims)):
        raise DimensionMismatch(
            f"gain {pattern.shape} does not split over {blocks}")
    rows = blocks.row_slices()
    cols = blocks.col_slices()
    n = blocks.n_agents
    adj = np.zeros((n, n), dtype=int)
    for i in range(n):
        for j in range(n):
            adj[i, j] = int(bool(np.any(pattern[rows[i], cols[j]])))
    return adj


def graph_is_complete(adj: np.ndarray) -> bool:
    off = adj.astype(bool) | np.eye(adj.shape[0], dtype=bool)
    return bool(np.all(off))


def graph_is_edgeless(adj: np.ndarray) -> bool:
    return not np.any(adj.astype(bool) & ~np.eye(adj.shape[0], dtype=bool))


@dataclass
class GammaRecord:
    """Everything recorded for one entry of the sparsity sweep."""

    gamma: float
    gain: FeedbackGain
    nnz: int
    nnz_ratio: float
    J: float
    J_ratio: float
    J_admm: float
    adjacency: np.ndarray
    admm_iterations: int
    admm_converged: bool
    states: np.ndarray
    controls: np.ndarray
    mixture_cost_initial: float
    mixture_cost_final: float
    mixture_cost_reduction: float
    rollout_rfs_cost: float


@dataclass
class ScenarioResult:
    config: dict
    seed: int
    gain_centralized: FeedbackGain
    adjacency_centralized: np.ndarray
    nnz_centralized: int
    J_centralized: float
    J_ilqr_gain: float | None
    ilqr_iterations: int
    ilqr_converged: bool
    ilqr_cost_history: list[float]
    nominal: Trajectory
    records: list[GammaRecord]
    metadata: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _process_noise(sigma_accel: float, dt: float) -> np.ndarray:
    """White-acceleration process noise mapped onto [pos, vel] blocks."""
    qn = np.zeros((6, 6))
    if sigma_accel <= 0:
        return qn
    var = sigma_accel**2
    for i in range(3):
        qn[i, i] = var * dt**4 / 4.0
        qn[i, i + 3] = qn[i + 3, i] = var * dt**3 / 2.0
        qn[i + 3, i + 3] = var * dt**2
    return qn


def _component_cov(pos_std: float, vel_std: float) -> np.ndarray:
    return np.diag([pos_std**2] * 3 + [vel_std**2] * 3)


def _build_plant(cfg: ScenarioConfig):
    rate = orbital_rate(cfg.mu, cfg.sma)
    ac, bc = cw_matrices(rate)
    h = np.hstack([np.eye(3), np.zeros((3, 3))])
    qn = _process_noise(cfg.process_noise_accel, cfg.dt)
    rn = cfg.sensor.meas_noise_std**2 * np.eye(3)
    plant = make_plant(ac, bc, h, qn, rn, cfg.dt)
    return rate, plant, build_swarm_plant(plant, cfg.n_agents)


def _initial_means(cfg: ScenarioConfig, rng) -> np.ndarray:
    pos = rng.uniform(-cfg.init_box, cfg.init_box, size=(cfg.n_agents, 3))
    vel = rng.uniform(-cfg.init_velocity, cfg.init_velocity,
                      size=(cfg.n_agents, 3)) if cfg.init_velocity > 0 \
        else np.zeros((cfg.n_agents, 3))
    means = np.hstack([pos, vel])
    order = np.argsort(np.arctan2(means[:, 1], means[:, 0]), kind="stable")
    return means[order]


def _desired_schedule(cfg: ScenarioConfig, rate: float):
    """Desired means per step plus the shared desired weights/covariances."""
    spin = rate if cfg.formation.spin else 0.0
    if cfg.formation.kind == "star":
        base = star_means(cfg.n_agents, cfg.formation.radius, spin)
        weights = np.ones(cfg.n_agents)
    else:
        base = np.asarray(cfg.formation.means, dtype=float)
        weights = (np.ones(len(base)) if cfg.formation.weights is None
                   else np.asarray(cfg.formation.weights, dtype=float))
    per_step = [rotate_means(base, spin * cfg.dt * k)
                for k in range(cfg.horizon + 1)]
    cov = _component_cov(cfg.formation.pos_std, cfg.formation.vel_std)
    return per_step, weights, cov


def _cost_model(cfg: ScenarioConfig, desired_per_step, des_weights, des_cov):
    comps0 = [GaussianComponent(weight=w, mean=m, cov=des_cov)
              for w, m in zip(des_weights, desired_per_step[0])]
    fixed_covs = np.repeat(
        _component_cov(cfg.component_pos_std, cfg.component_vel_std)[None],
        cfg.n_agents, axis=0)
    r_mat = cfg.r_weight * np.eye(3 * cfg.n_agents)
    base = RfsObjective(GmIntensity(comps0), r_mat, cfg.alpha, fixed_covs)
    objectives = [base] + [base.with_desired_means(m)
                           for m in desired_per_step[1:]]
    weights = np.ones(cfg.n_agents)
    return RfsCostModel(objectives, weights, cfg.horizon)


def _admm_options(cfg: ScenarioConfig) -> AdmmOptions:
    a = cfg.admm
    return AdmmOptions(
        rho=a.rho, eps_abs=a.eps_abs, max_iter=a.max_iter, g_type=a.g_type,
        reweight_eps=a.reweight_eps, max_reweight=a.max_reweight,
        fmin=FMinOptions(max_iter=a.fmin_max_iter, grad_tol=a.fmin_grad_tol))


def _sensor_model(cfg: ScenarioConfig, plant) -> SensorModel:
    sensor = SensorModel(
        pd=cfg.sensor.pd, clutter_rate=cfg.sensor.clutter_rate,
        clutter_density=1.0 / cfg.sensor.volume(),
        H=plant.H, Rn=plant.Rn)
    sensor.region = np.asarray(cfg.sensor.region, dtype=float)
    return sensor


def _greedy_match(cands: list[np.ndarray], cand_covs, refs: np.ndarray):
    """Greedy smallest-Mahalanobis assignment of candidates to reference
    slots; returns per-slot candidate index (-1 when unmatched)."""
    n_ref = refs.shape[0]
    assign = np.full(n_ref, -1, dtype=int)
    if not cands:
        return assign
    dist = np.empty((n_ref, len(cands)))
    for j, (m, p) in enumerate(zip(cands, cand_covs)):
        chol = chol_spd(p)
        for i in range(n_ref):
            z = np.linalg.solve(chol, m - refs[i])
            dist[i, j] = float(z @ z)
    used = np.zeros(len(cands), dtype=bool)
    for _ in range(min(n_ref, len(cands))):
        flat = np.argmin(np.where(used[None, :] | (assign[:, None] >= 0),
                                  np.inf, dist))
        i, j = divmod(int(flat), len(cands))
        if not np.isfinite(dist[i, j]):
            break
        assign[i] = j
        used[j] = True
    return assign


def _closed_loop_rollout(cfg: ScenarioConfig, swarm, plant, model,
                         x_ref, u_ref, f_gain: np.ndarray, rng):
    """Roll the static gain out about the nominal: ``u = u_ref - F dx``.

    In ``phd_estimate`` mode the state deviation is taken from the
    GM-PHD estimate driven by synthetic measurements of the true state.
    """
    n_steps = cfg.horizon
    n_agents = cfg.n_agents
    dim = 6
    a, b = swarm.A, swarm.B
    states = np.empty((n_steps + 1, a.shape[0]))
    controls = np.empty((n_steps, b.shape[1]))
    states[0] = x_ref[0]
    use_phd = cfg.loop_mode == "phd_estimate"
    if use_phd:
        sensor = _sensor_model(cfg, plant)
        phd_cfg = PhdConfig(
            ps=cfg.phd.ps, prune_threshold=cfg.phd.prune_threshold,
            merge_threshold=cfg.phd.merge_threshold,
            max_components=cfg.phd.max_components,
            extract_threshold=cfg.phd.extract_threshold)
        birth_empty = BirthModel(birth=GmIntensity([]))
        cov0 = _component_cov(cfg.component_pos_std, cfg.component_vel_std)
        intensity = GmIntensity([
            GaussianComponent(weight=1.0, mean=states[0][i * dim:(i + 1) * dim],
                              cov=cov0) for i in range(n_agents)])
        estimate = states[0].copy()
    for k in range(n_steps):
        xhat = estimate if use_phd else states[k]
        u = u_ref[k] - f_gain @ (xhat - x_ref[k])
        controls[k] = u
        states[k + 1] = a @ states[k] + b @ u
        if not np.all(np.isfinite(states[k + 1])):
            raise NonFinite(f"closed-loop rollout diverged at step {k}")
        if use_phd:
            # filter components inherit the control of their nearest slot
            comp_means = [c.mean for c in intensity.components]
            comp_covs = [c.cov for c in intensity.components]
            slots = xhat.reshape(n_agents, dim)
            assign = _greedy_match(comp_means, comp_covs, slots)
            u_slots = u.reshape(n_agents, 3)
            u_comp = [np.zeros(3)] * len(comp_means)
            for slot, j in enumerate(assign):
                if j >= 0:
                    u_comp[j] = u_slots[slot]
            intensity = phd_predict(intensity, u_comp, plant, birth_empty,
                                    phd_cfg)
            truth = states[k + 1].reshape(n_agents, dim)
            meas = generate_measurements(truth, sensor, rng)
            intensity = phd_update(intensity, meas, sensor)
            intensity = prune_merge(intensity, phd_cfg)
            extracted = extract_states(intensity, phd_cfg)
            refs = x_ref[k + 1].reshape(n_agents, dim)
            est = refs.copy()
            if extracted:
                ext_means = [m for m, _ in extracted]
                by_value = {c.mean.tobytes(): c.cov
                            for c in intensity.components}
                ext_covs = [by_value.get(m.tobytes(), cov0)
                            for m in ext_means]
                assign = _greedy_match(ext_means, ext_covs, refs)
                for slot, j in enumerate(assign):
                    if j >= 0:
                        est[slot] = ext_means[j]
            estimate = est.reshape(-1)
    return states, controls


def _mixture_cost_series(model: RfsCostModel, states: np.ndarray):
    series = np.empty(states.shape[0])
    for k in range(states.shape[0]):
        st = StackedState(means=states[k], weights=model.weights)
        series[k] = rfscost.mixture_distance_sq(st, model.objective_at(k))
    return series


def _rollout_rfs_cost(model: RfsCostModel, states, controls) -> float:
    total = 0.0
    for k in range(controls.shape[0]):
        total += model.stage_cost(states[k], controls[k], k)
    return total + model.terminal_cost(states[-1])


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Execute the full pipeline for one configuration (deterministic in
    the seed)."""
    cfg.validate()
    timings: dict[str, float] = {}
    rng = np.random.default_rng(cfg.rng_seed)
    rate, plant, swarm = _build_plant(cfg)
    x0 = _initial_means(cfg, rng).reshape(-1)
    desired_per_step, des_weights, des_cov = _desired_schedule(cfg, rate)
    model = _cost_model(cfg, desired_per_step, des_weights, des_cov)

    t0 = time.perf_counter()
    ilqr_res = ilqr_solve(
        StackedState(means=x0, weights=model.weights),
        np.zeros((cfg.horizon, swarm.control_dim)), swarm, model,
        IlqrOptions(max_iter=cfg.ilqr.max_iter, tol=cfg.ilqr.tol))
    timings["ilqr_s"] = time.perf_counter() - t0

    gain_c = extract_static_gain(ilqr_res.gains, cfg.gain_mode)
    blocks = gain_c.blocks
    x_ref = ilqr_res.trajectory.states
    u_ref = ilqr_res.trajectory.controls

    # LQR-form weights at the converged terminal state, rescaled by the
    # control weight so the ADMM tolerances see O(1) magnitudes (the
    # rescaling leaves every gain and cost ratio unchanged).
    term_state = StackedState(means=x_ref[-1], weights=model.weights)
    _, lxx_psd, _ = rfscost.terminal_derivatives(term_state,
                                                 model.objective_at(cfg.horizon))
    scale = 2.0 * cfg.r_weight
    prob = SparseLqrProblem(
        A=swarm.A, B=swarm.B, B2=np.eye(swarm.state_dim),
        Q=lxx_psd / scale, R=np.eye(swarm.control_dim),
        time_mode="discrete")

    try:
        j_ilqr = lqr_cost(gain_c, prob)
    except Unstable:
        j_ilqr = None

    t0 = time.perf_counter()
    entries = gamma_sweep(prob, cfg.gamma_list, _admm_options(cfg),
                          blocks=blocks)
    timings["gamma_sweep_s"] = time.perf_counter() - t0
    j_c = entries[0].J

    records: list[GammaRecord] = []
    t0 = time.perf_counter()
    for entry in entries:
        roll_rng = np.random.default_rng(
            np.random.SeedSequence([cfg.rng_seed, int(1e6), len(records)]))
        states, controls = _closed_loop_rollout(
            cfg, swarm, plant, model, x_ref, u_ref, entry.gain.F, roll_rng)
        series = _mixture_cost_series(model, states)
        initial, final = float(series[0]), float(series[-1])
        reduction = 1.0 - final / initial if initial > 0 else 0.0
        records.append(GammaRecord(
            gamma=entry.gamma, gain=entry.gain, nnz=entry.nnz,
            nnz_ratio=entry.nnz / gain_c.nnz,
            J=entry.J, J_ratio=(entry.J - j_c) / j_c, J_admm=entry.J_admm,
            adjacency=information_graph(entry.gain, blocks),
            admm_iterations=entry.admm_iterations,
            admm_converged=entry.admm_converged,
            states=states, controls=controls,
            mixture_cost_initial=initial, mixture_cost_final=final,
            mixture_cost_reduction=reduction,
            rollout_rfs_cost=_rollout_rfs_cost(model, states, controls)))
    timings["rollouts_s"] = time.perf_counter() - t0

    metadata = {
        "orbital_rate": rate,
        "gain_mode": cfg.gain_mode,
        "loop_mode": cfg.loop_mode,
        "lqr_weight_scale": scale,
        "kernel_backend": mixkernel.BACKEND,
    }
    return ScenarioResult(
        config=cfg.to_dict(), seed=cfg.rng_seed,
        gain_centralized=gain_c,
        adjacency_centralized=information_graph(gain_c, blocks),
        nnz_centralized=gain_c.nnz,
        J_centralized=j_c, J_ilqr_gain=j_ilqr,
        ilqr_iterations=ilqr_res.iterations,
        ilqr_converged=ilqr_res.converged,
        ilqr_cost_history=list(ilqr_res.cost_history),
        nominal=ilqr_res.trajectory, records=records,
        metadata=metadata, timings=timings)


# ---------------------------------------------------------------------------
# export

def _fmt(x) -> str:
    """Serialize one scalar; floats carry 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x) or math.isinf(x):
            raise NonFinite("refusing to serialize non-finite value")
        return f"{float(x):.17g}"
    raise TypeError(f"unsupported scalar {type(x)!r}")


def _json_dumps(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {_json_dumps(str(k))}: {_json_dumps(v, indent + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj.tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        items = [f"{pad}  {_json_dumps(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"unsupported JSON value {type(obj)!r}")


def _write(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _gain_csv(f: np.ndarray) -> str:
    return "\n".join(",".join(_fmt(v) for v in row) for row in f) + "\n"


def _pattern_txt(gain: FeedbackGain) -> str:
    lines = []
    rows, cols = np.nonzero(gain.pattern)
    for i, j in zip(rows, cols):
        lines.append(f"{i} {j} {_fmt(gain.F[i, j])}")
    return "\n".join(lines) + ("\n" if lines else "")


def _adjacency_csv(adj: np.ndarray) -> str:
    return "\n".join(",".join(str(int(v)) for v in row) for row in adj) + "\n"


def _trajectory_csv(states: np.ndarray, controls: np.ndarray,
                    n_agents: int) -> str:
    header = "step,agent,x,y,z,xdot,ydot,zdot,ux,uy,uz"
    lines = [header]
    n_steps = controls.shape[0]
    for k in range(states.shape[0]):
        xs = states[k].reshape(n_agents, 6)
        us = controls[k].reshape(n_agents, 3) if k < n_steps else None
        for agent in range(n_agents):
            cells = [str(k), str(agent)]
            cells += [_fmt(v) for v in xs[agent]]
            cells += ([_fmt(v) for v in us[agent]] if us is not None
                      else ["", "", ""])
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _summary_dict(res: ScenarioResult, files: dict) -> dict:
    entries = []
    for idx, rec in enumerate(res.records):
        entries.append({
            "gamma": rec.gamma,
            "nnz": rec.nnz,
            "nnz_ratio": rec.nnz_ratio,
            "J": rec.J,
            "J_ratio": rec.J_ratio,
            "J_admm": rec.J_admm,
            "admm_iterations": rec.admm_iterations,
            "admm_converged": rec.admm_converged,
            "graph_complete": graph_is_complete(rec.adjacency),
            "graph_edgeless": graph_is_edgeless(rec.adjacency),
            "mixture_cost_initial": rec.mixture_cost_initial,
            "mixture_cost_final": rec.mixture_cost_final,
            "mixture_cost_reduction": rec.mixture_cost_reduction,
            "rollout_rfs_cost": rec.rollout_rfs_cost,
            "files": files["entries"][idx],
        })
    return {
        "config": res.config,
        "seed": res.seed,
        "centralized": {
            "nnz": res.nnz_centralized,
            "J": res.J_centralized,
            "J_ilqr_gain": res.J_ilqr_gain,
            "ilqr_iterations": res.ilqr_iterations,
            "ilqr_converged": res.ilqr_converged,
            "ilqr_cost_history": res.ilqr_cost_history,
            "graph_complete": graph_is_complete(res.adjacency_centralized),
            "files": files["centralized"],
        },
        "entries": entries,
        "metadata": res.metadata,
    }


def export_results(res: ScenarioResult, out_dir) -> dict:
    """Write summary JSON, per-gamma CSVs, patterns, and adjacency files.

    Returns the file map. Floats are serialized with 17 significant
    digits, enough to round-trip float64 exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    join = lambda name: os.path.join(out_dir, name)
    n_agents = len(res.records[0].gain.blocks.control_dims) \
        if res.records and res.records[0].gain.blocks else res.config["n_agents"]

    files = {"centralized": {}, "entries": []}
    _write(join("gain_centralized.csv"), _gain_csv(res.gain_centralized.F))
    _write(join("adjacency_centralized.csv"),
           _adjacency_csv(res.adjacency_centralized))
    files["centralized"] = {"gain": "gain_centralized.csv",
                            "adjacency": "adjacency_centralized.csv"}
    for idx, rec in enumerate(res.records):
        tag = f"{idx:03d}"
        names = {
            "trajectory": f"trajectory_{tag}.csv",
            "gain": f"gain_{tag}.csv",
            "pattern": f"pattern_{tag}.txt",
            "adjacency": f"adjacency_{tag}.csv",
        }
        _write(join(names["trajectory"]),
               _trajectory_csv(rec.states, rec.controls, n_agents))
        _write(join(names["gain"]), _gain_csv(rec.gain.F))
        _write(join(names["pattern"]), _pattern_txt(rec.gain))
        _write(join(names["adjacency"]), _adjacency_csv(rec.adjacency))
        files["entries"].append(names)

    summary = _summary_dict(res, files)
    _write(join("summary.json"), _json_dumps(summary) + "\n")
    timing_lines = [f"{k} {v:.6f}" for k, v in res.timings.items()]
    _write(join("timings.txt"), "\n".join(timing_lines) + "\n")
    files["summary"] = "summary.json"
    files["timings"] = "timings.txt"
    return files
