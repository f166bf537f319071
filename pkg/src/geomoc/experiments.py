"""Experiment runner: builds instances from configs, integrates or
trains, emits trajectory/history artifacts and an invariant report.

Each run returns a :class:`RunOutcome` holding named artifacts (file
name -> text content) plus a report mapping check names to measured
values, applied tolerances, and pass flags. Runs are deterministic for
a fixed config: randomness comes only from the config seed and every
reduction is evaluated in fixed order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import bracket as br
from . import learn as ln
from . import ocp as oc
from . import rb_discrete as rd
from . import rb_smooth as rs
from .config import (
    BracketConfig,
    DoubleBracketConfig,
    MvConfig,
    OcpShootConfig,
    SdrbConfig,
    SmoothRbConfig,
    SrbConfig,
    TrainResnetConfig,
    TrainRigidConfig,
)
from .errors import DomainError
from .matlie import (
    Rotation,
    SkewMatrix,
    commutator,
    coords_to_skew,
    killing_pair,
    mat_exp,
    op_norm,
    random_rotation,
    skew_dim,
)
from .trajio import compare_tables, table_to_csv, trajectory_table

__all__ = ["RunOutcome", "run_experiment", "compare_artifacts"]


@dataclass
class RunOutcome:
    kind: str
    report: dict
    artifacts: dict
    passed: bool


class _Checks:
    def __init__(self, overrides: dict, tol_scale: float):
        self.overrides = overrides
        self.scale = tol_scale
        self.entries = {}

    def add(self, name: str, value: float, base_tol: float):
        tol = self.overrides.get(name, base_tol) * self.scale
        self.entries[name] = {
            "value": float(value),
            "tolerance": float(tol),
            "pass": bool(value <= tol),
        }

    def passed(self) -> bool:
        return all(e["pass"] for e in self.entries.values())


def _skew_from(config_coords, n, rng, scale):
    d = skew_dim(n)
    if config_coords is not None:
        c = np.asarray(config_coords, dtype=float)
        if c.shape != (d,):
            raise DomainError(f"expected {d} so({n}) coordinates, got {c.shape}")
        return coords_to_skew(n, c)
    return coords_to_skew(n, scale * rng.standard_normal(d))


def _orth_defect(stack):
    eye = np.eye(stack.shape[1])
    return max(float(np.linalg.norm(m.T @ m - eye)) for m in stack)


def _finish(cfg, checks: _Checks, artifacts: dict) -> RunOutcome:
    report = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "checks": checks.entries,
        "passed": checks.passed(),
    }
    return RunOutcome(kind=cfg.kind, report=report, artifacts=artifacts, passed=checks.passed())


# ---------------------------------------------------------------------------
# rigid-body runs


def _run_sdrb(cfg: SdrbConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    p0 = mat_exp(SkewMatrix(_skew_from(cfg.p0_coords, cfg.n, rng, cfg.scale)))
    state = rd.DiscreteRBState(Q=Rotation.identity(cfg.n), P=p0)
    qs, ps = rd.sdrb_trajectory(state, cfg.lam, cfg.steps)
    sample = max(1, cfg.steps // 200)
    checks.add("orthogonality_drift", max(_orth_defect(qs[::sample]), _orth_defect(ps[::sample])), 1e-9)
    norms = [op_norm(rs.momentum_from_pair(q, p)) for q, p in zip(qs[::sample], ps[::sample])]
    checks.add("opnorm_drift", max(norms) - min(norms), 1e-10)
    header, rows = trajectory_table("k", np.arange(cfg.steps + 1), {"Q": qs, "P": ps})
    return _finish(cfg, checks, {"sdrb_trajectory.csv": table_to_csv(header, rows)})


def _run_mv(cfg: MvConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    m0 = SkewMatrix(_skew_from(cfg.m0_coords, cfg.n, rng, cfg.scale))
    q0 = random_rotation(cfg.n, rng)
    qs, ms = rd.mv_trajectory(rd.MVState(Q=q0, M=m0), cfg.lam, cfg.steps)
    sample = max(1, cfg.steps // 200)
    norms = [op_norm(m) for m in ms[::sample]]
    checks.add("opnorm_drift", max(norms) - min(norms), 1e-10)
    base = np.poly(ms[0])
    spec_drift = max(float(np.abs(np.poly(m) - base).max()) for m in ms[::sample])
    checks.add("spectrum_drift", spec_drift, 1e-8)
    res = rd.mv_residuals(qs, ms, cfg.lam)
    checks.add("mv_relation_residual", float(res.max()), 1e-10)
    header, rows = trajectory_table("k", np.arange(cfg.steps + 1), {"Q": qs, "M": ms})
    return _finish(cfg, checks, {"mv_trajectory.csv": table_to_csv(header, rows)})


def _run_smooth_rb(cfg: SmoothRbConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    m0 = _skew_from(cfg.m0_coords, cfg.n, rng, cfg.scale)
    field = lambda y: rs.rb_field(y, cfg.lam)
    steps = int(round(cfg.t_final / cfg.h))
    traj = rs.rk4_integrate(field, (np.eye(cfg.n), m0), cfg.h, cfg.t_final, record_every=max(1, steps // 400))
    base = rs.manakov_integrals(m0, cfg.lam)
    scale = np.maximum(np.abs(base), 1.0)
    man = max(float((np.abs(rs.manakov_integrals(m, cfg.lam) - base) / scale).max()) for _, m in traj.ys)
    checks.add("manakov_drift", man, 1e-8)
    cas0 = rs.casimir_opnorm(m0)
    checks.add("casimir_drift", max(abs(rs.casimir_opnorm(m) - cas0) for _, m in traj.ys), 1e-8)
    e0 = rs.kinetic_energy(m0, cfg.lam)
    checks.add(
        "energy_drift",
        max(abs(rs.kinetic_energy(m, cfg.lam) - e0) for _, m in traj.ys) / max(1.0, abs(e0)),
        1e-8,
    )
    header, rows = trajectory_table("t", traj.ts, {"Q": traj.component(0), "M": traj.component(1)})
    return _finish(cfg, checks, {"smooth_rb_trajectory.csv": table_to_csv(header, rows)})


def _run_srb(cfg: SrbConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    p0 = np.asarray(mat_exp(SkewMatrix(_skew_from(cfg.p0_coords, cfg.n, rng, cfg.scale))))
    field = lambda y: rs.srb_field(y, cfg.lam)
    steps = int(round(cfg.t_final / cfg.h))
    traj = rs.rk4_integrate(field, (np.eye(cfg.n), p0), cfg.h, cfg.t_final, record_every=max(1, steps // 400))
    qs, ps = traj.component(0), traj.component(1)
    checks.add("orthogonality_drift", max(_orth_defect(qs), _orth_defect(ps)), 1e-8)
    norms = [op_norm(rs.momentum_from_pair(q, p)) for q, p in zip(qs, ps)]
    checks.add("opnorm_drift", max(norms) - min(norms), 1e-8)
    header, rows = trajectory_table("t", traj.ts, {"Q": qs, "P": ps})
    return _finish(cfg, checks, {"srb_trajectory.csv": table_to_csv(header, rows)})


def _run_ocp_shoot(cfg: OcpShootConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    q0 = np.asarray(random_rotation(cfg.n, rng))
    p0_true = -(q0 @ np.asarray(mat_exp(SkewMatrix(_skew_from(None, cfg.n, rng, cfg.p0_scale))))).ravel()
    prob = oc.rigid_ocp(cfg.lam, q0, np.eye(cfg.n), cfg.horizon)
    prob.xN = oc.forward_extremal(prob, p0_true).xs[-1]
    guess = (1.0 + cfg.perturbation) * p0_true
    traj = oc.shoot(prob, guess, tol=1e-8, max_iter=40)
    checks.add("endpoint_error", traj.endpoint_error, 1e-8)
    bundle = oc.extremal_residuals(traj, prob)
    checks.add("extremal_residual", bundle.max_abs(), 1e-8)
    doc = oc.result_to_dict(prob, traj)
    doc["iterations"] = traj.iterations
    return _finish(cfg, checks, {"ocp_result.json": json.dumps(doc)})


# ---------------------------------------------------------------------------
# training runs


def _run_train_resnet(cfg: TrainResnetConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.dynamics.state_dim
    x0s = [rng.standard_normal(n) for _ in range(cfg.samples)]
    lo, hi = (0.2, 0.8) if cfg.dynamics.activation == "logistic" else (-0.6, 0.6)
    targets = [rng.uniform(lo, hi, size=n) for _ in range(cfg.samples)]
    prob = ln.resnet_problem(x0s, targets, cfg.layers, activation=cfg.dynamics.activation)
    u0 = [cfg.dynamics.init_scale * rng.standard_normal(prob.control_dim) for _ in range(cfg.layers)]
    start_cost = ln.forward_sweep(prob, u0).cost
    schedule = ln.TrainSchedule(step=cfg.step, tol=cfg.tol, max_iter=cfg.max_iter)
    bundle, history = ln.train(prob, u0, schedule, threads=threads)
    checks.add("cost_monotone", max(0.0, float(np.diff(history.cost).max(initial=0.0))), 1e-14)
    checks.add("cost_reduction", bundle.cost / max(start_cost, 1e-300), 0.1)
    grads = ln.control_gradient(prob, bundle)
    fd = _fd_cost_gradient(prob, bundle.controls)
    rel = np.abs(grads - fd).max() / max(1.0, np.abs(fd).max())
    checks.add("gradient_fd_error", rel, 1e-5)
    result = {"final_cost": bundle.cost, "initial_cost": start_cost, "iterations": int(history.iteration[-1])}
    return _finish(cfg, checks, {"history.csv": history.to_csv(), "train_result.json": json.dumps(result)})


def _fd_cost_gradient(prob, controls, step: float = 1e-6):
    grads = np.zeros((prob.N, prob.control_dim))
    for k in range(prob.N):
        for j in range(prob.control_dim):
            delta = np.zeros(prob.control_dim)
            delta[j] = step
            up, um = list(controls), list(controls)
            up[k] = prob.retract(controls[k], delta)
            um[k] = prob.retract(controls[k], -delta)
            grads[k, j] = (ln.forward_sweep(prob, up).cost - ln.forward_sweep(prob, um).cost) / (2 * step)
    return grads


def _run_train_rigid(cfg: TrainRigidConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    q0s = [np.asarray(random_rotation(n, rng)) for _ in range(cfg.samples)]
    step_skew = _skew_from(cfg.target_step_coords, n, rng, 0.12)
    u_true = np.asarray(mat_exp(SkewMatrix(step_skew)))
    target = q0s[0] @ np.linalg.matrix_power(u_true, cfg.layers)
    phi, phi_x = ln.procrustes_terminal_cost(target)
    prob = ln.rigid_learning_problem(cfg.lam, q0s, phi, phi_x, cfg.layers, running_weight=cfg.running_weight)
    schedule = ln.TrainSchedule(step=cfg.step, tol=cfg.tol, max_iter=cfg.max_iter)
    bundle, history = ln.train(prob, [np.eye(n)] * cfg.layers, schedule, threads=threads)
    checks.add("cost_monotone", max(0.0, float(np.diff(history.cost).max(initial=0.0))), 1e-14)
    checks.add("stationarity_residual", ln.ukdef2_residual(bundle, cfg.lam, running_weight=cfg.running_weight), 1e-6)
    if cfg.running_weight == 0.0 and cfg.samples == 1:
        checks.add("terminal_gap", bundle.cost - (-float(n)), 1e-6)
    orth = max(float(np.linalg.norm(u.T @ u - np.eye(n))) for u in bundle.controls)
    checks.add("control_orthogonality", orth, 1e-10)
    result = {"final_cost": bundle.cost, "iterations": int(history.iteration[-1])}
    return _finish(cfg, checks, {"history.csv": history.to_csv(), "train_result.json": json.dumps(result)})


# ---------------------------------------------------------------------------
# orbit runs


def _run_bracket(cfg: BracketConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    nm = _skew_from(cfg.n_coords, cfg.n, rng, 0.8)
    x0 = _skew_from(cfg.x0_coords, cfg.n, rng, cfg.scale)
    p0 = _skew_from(cfg.p0_coords, cfg.n, rng, cfg.scale * 0.7)
    v = lambda x: -0.5 * killing_pair(commutator(x, nm), commutator(x, nm))
    field = lambda y: br.brockett_field(y, nm)
    steps = int(round(cfg.t_final / cfg.h))
    traj = rs.rk4_integrate(field, (x0, p0), cfg.h, cfg.t_final, record_every=max(1, steps // 400))
    h0 = br.hamiltonian_star((x0, p0), v)
    checks.add(
        "hstar_drift",
        max(abs(br.hamiltonian_star(y, v) - h0) for y in traj.ys) / max(1.0, abs(h0)),
        1e-8,
    )
    base = br.spectrum_invariants(x0)
    checks.add(
        "spectrum_drift", max(float(np.abs(br.spectrum_invariants(y[0]) - base).max()) for y in traj.ys), 1e-8
    )
    xs, ps = traj.component(0), traj.component(1)
    pair = np.array([killing_pair(x, nm) for x in xs])
    cnorm = np.array([float(np.linalg.norm(commutator(x, nm))) for x in xs])
    header, rows = trajectory_table("t", traj.ts, {"x": xs, "p": ps}, {"pair_xn": pair, "comm_norm": cnorm})
    return _finish(cfg, checks, {"bracket_trajectory.csv": table_to_csv(header, rows)})


def _run_double_bracket(cfg: DoubleBracketConfig, checks: _Checks, threads: int) -> RunOutcome:
    rng = np.random.default_rng(cfg.seed)
    if cfg.n_coords is not None:
        nm = _skew_from(cfg.n_coords, cfg.n, rng, 1.0)
    elif cfg.n == 3:
        nm = coords_to_skew(3, np.array([0.0, 0.0, 1.0]))  # default alignment generator
    else:
        nm = _skew_from(None, cfg.n, rng, 1.0)
    x0 = _skew_from(cfg.x0_coords, cfg.n, rng, cfg.scale)
    steps = int(round(cfg.t_final / cfg.h))
    traj = br.double_bracket_flow(x0, nm, cfg.t_final, cfg.h, record_every=max(1, steps // 1000))
    xs = traj.component(0)
    pair = np.array([killing_pair(x, nm) for x in xs])
    cnorm = np.array([float(np.linalg.norm(commutator(x, nm))) for x in xs])
    checks.add("monotonicity_defect", max(0.0, -float(np.diff(pair).min(initial=0.0))), 1e-12)
    base = br.spectrum_invariants(x0)
    checks.add("spectrum_drift", max(float(np.abs(br.spectrum_invariants(x) - base).max()) for x in xs), 1e-8)
    checks.add("final_commutator", float(cnorm[-1]), 1e-6)
    header, rows = trajectory_table("t", traj.ts, {"x": xs}, {"pair_xn": pair, "comm_norm": cnorm})
    return _finish(cfg, checks, {"double_bracket_trajectory.csv": table_to_csv(header, rows)})


_RUNNERS = {
    "sdrb": _run_sdrb,
    "mv": _run_mv,
    "smooth-rb": _run_smooth_rb,
    "srb": _run_srb,
    "ocp-shoot": _run_ocp_shoot,
    "train-resnet": _run_train_resnet,
    "train-rigid": _run_train_rigid,
    "bracket": _run_bracket,
    "double-bracket": _run_double_bracket,
}


def run_experiment(cfg, *, tol_scale: float = 1.0, threads: int = 1) -> RunOutcome:
    """Run one configured experiment and collect artifacts plus checks."""
    if tol_scale <= 0:
        raise DomainError("tol_scale must be positive")
    checks = _Checks(cfg.tol_overrides, tol_scale)
    runner = _RUNNERS.get(cfg.kind)
    if runner is None:
        raise DomainError(f"unknown experiment kind {cfg.kind!r}")
    return runner(cfg, checks, max(1, threads))


def compare_artifacts(text_a: str, text_b: str, tol: float) -> dict:
    """Column-wise comparison of two trajectory CSVs against a tolerance."""
    stats = compare_tables(text_a, text_b)
    stats["tolerance"] = float(tol)
    stats["within_tol"] = bool(stats["max_abs"] <= tol)
    return stats
