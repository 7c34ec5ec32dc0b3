"""Canned laminate studies driven through the LATIN solver.

Each scenario is a default configuration (a plain dict that validates as a
``RunConfig``) plus a builder that turns the configuration into a
substructured ``Problem``, a load program and two monitors (load and
displacement) used for the load-displacement curve.

Load amplitudes per scenario (``loading.amplitude``):

* bending: tip force (N), applied as a uniform traction on the X1 = L face
* buckling, contact_open, buckling_delamination, multi_delamination: end
  displacement of the X1 = L face along X1 (mm, negative = compression)
* contact_close: force pushing the lower arm upward at mid-crack (N)
* dcb: opening displacement of each arm end (mm)

``loading.perturbation`` is a central force (N); it is constant over the
program unless ``loading.perturbation_scales`` is set.  The symmetric
pairs (contact_open, buckling_delamination) cannot leave the mirror-symmetric
branch on a mirror-symmetric mesh; ``loading.imperfection`` adds a small net
transverse force on the upper ply that seeds the non-symmetric (global) mode.
"""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import RunConfig, build_config, deep_merge
from .directions import PolicyConfig
from .interface import BoundaryCondition, CohesiveParams
from .kernels import Material
from .latin import (ConfigurationError, IterationRecord, LatinSolver, Problem, SolverConfig,
                    StepResult)
from .mesh import CrackSpec, Decomposition, generate_laminate_mesh, partition

log = logging.getLogger(__name__)

_CLAMP = ("u", "u", "u")

_BASE = {
    "material": {"kind": "isotropic", "E": 135000.0, "nu": 0.3},
    "policy": {"anisotropy": True, "macro_continuity": True},
}

SCENARIOS: dict[str, dict] = {
    "bending": {
        "geometry": {"length": 20.0, "width": 1.0, "plies": [0.2], "elements": [64, 1, 1], "order": 2},
        "partition": {"x": 8},
        "loading": {"steps": 1, "amplitude": 1.0},
        "policy": {"slenderness": 100.0},
        "solver": {"nonlinear": False},
    },
    "buckling": {
        "geometry": {"length": 10.0, "width": 1.0, "plies": [0.1], "elements": [80, 4, 2], "order": 2},
        "partition": {"x": 16},
        "loading": {"steps": 24, "amplitude": -0.04, "perturbation": 0.0444},
        "policy": {"slenderness": 100.0},
    },
    "contact_open": {
        "geometry": {"length": 20.0, "width": 1.0, "plies": [0.2, 0.2], "elements": [80, 1, 2], "order": 2,
                     "cracks": [{"a0": 10.0, "behavior": "contact"}]},
        "partition": {"x": 8},
        "loading": {"steps": 1, "amplitude": 0.0, "perturbation": 0.2},
        "policy": {"slenderness": 100.0, "contact_mode": "status", "contact_initial": "closed"},
    },
    "contact_close": {
        "geometry": {"length": 20.0, "width": 1.0, "plies": [0.2, 0.2], "elements": [80, 1, 2], "order": 2,
                     "cracks": [{"a0": 10.0, "position": "start", "behavior": "contact"}]},
        "partition": {"x": 8},
        "loading": {"steps": 1, "amplitude": 1.0},
        "policy": {"slenderness": 100.0, "contact_mode": "status", "contact_initial": "open"},
        "solver": {"nonlinear": False},
    },
    "dcb": {
        "geometry": {"length": 20.0, "width": 2.0, "plies": [0.5, 0.5], "elements": [80, 1, 2], "order": 2,
                     "cracks": [{"a0": 10.0, "position": "start", "behavior": "contact"}]},
        "partition": {"x": 16},
        "interface": {"ply_behavior": "cohesive"},
        "loading": {"steps": 16, "amplitude": 1.2},
        "policy": {"anisotropy": False, "cohesive_strategy": "C", "contact_mode": "status", "contact_initial": "open"},
        "solver": {"nonlinear": False, "eta_tol": 1e-4, "max_iterations": 400},
    },
    "buckling_delamination": {
        "geometry": {"length": 20.0, "width": 1.0, "plies": [0.2, 0.2], "elements": [80, 1, 2], "order": 2,
                     "cracks": [{"a0": 10.0, "behavior": "cohesive"}]},
        "partition": {"x": 8},
        "interface": {"ply_behavior": "cohesive"},
        "loading": {"steps": 50, "amplitude": -0.05, "perturbation": 0.2, "imperfection": 0.5},
        "policy": {"slenderness": 100.0},
    },
    "multi_delamination": {
        "geometry": {"length": 20.0, "width": 1.0, "plies": [0.2, 0.2, 0.2, 0.2], "elements": [80, 1, 4],
                     "order": 2,
                     "cracks": [{"a0": 10.0, "ply_boundary": 1, "behavior": "cohesive"},
                                {"a0": 10.0, "ply_boundary": 2, "behavior": "cohesive"}]},
        "partition": {"x": 8},
        "material": {"kind": "orthotropic", "layup": [0.0, 90.0, 90.0, 0.0]},
        "interface": {"ply_behavior": "cohesive"},
        "loading": {"steps": 30, "amplitude": -0.08, "perturbation": 0.2},
        "policy": {"slenderness": 100.0},
    },
}


def scenario_names() -> list[str]:
    return sorted(SCENARIOS)


def scenario_defaults(name: str) -> dict:
    """Full default configuration dict of a scenario (raises KeyError)."""
    spec = SCENARIOS[name]
    return deep_merge(deep_merge({"scenario": name}, _BASE), spec)


def default_config(name: str, overrides: dict | None = None) -> RunConfig:
    return build_config(deep_merge({"scenario": name}, overrides or {}))


# ---------------------------------------------------------------------------
# Setup
# ---------------------------------------------------------------------------

@dataclass
class Setup:
    config: RunConfig
    problem: Problem
    solver_config: SolverConfig
    factors: np.ndarray
    load: Callable[[LatinSolver], float]
    displacement: Callable[[LatinSolver], float]
    perturbed_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def ply_materials(cfg: RunConfig) -> list[Material]:
    m = cfg.material
    nply = len(cfg.geometry.plies)
    if m.kind == "isotropic":
        return [Material.isotropic(m.E, m.nu, m.rho)] * nply
    layup = m.layup or [0.0] * nply
    if len(layup) != nply:
        raise ConfigurationError(f"material.layup has {len(layup)} angles for {nply} plies")
    return [Material.orthotropic(m.E1, m.E2, m.E3, m.nu12, m.nu13, m.nu23, m.G12, m.G13, m.G23,
                                 rho=m.rho, angle_deg=a) for a in layup]


def _cracks(cfg: RunConfig) -> list[CrackSpec]:
    g = cfg.geometry
    tops = np.cumsum(g.plies)
    out = []
    for c in g.cracks:
        z = float(tops[c.ply_boundary])
        if c.position == "center":
            out.append(CrackSpec.centered(z, g.length, c.a0, c.behavior))
        else:
            out.append(CrackSpec(z, (0.0, c.a0), None, c.behavior))
    return out


def _boundary_conditions(cfg: RunConfig) -> dict[str, BoundaryCondition]:
    name, a = cfg.scenario, cfg.loading.amplitude
    nply = len(cfg.geometry.plies)
    if name == "bending":
        h = sum(cfg.geometry.plies)
        return {"x0": BoundaryCondition(_CLAMP), "x1": BoundaryCondition(("f", "f", "f"),
                                                                           (0.0, 0.0, a / (cfg.geometry.width * h)))}
    if name == "contact_close":
        # upper arm propped at its tip, lower arm free: the arms deflect differently
        return {"x0:p0": BoundaryCondition(("f", "f", "f")),
                f"x0:p{nply - 1}": BoundaryCondition(("f", "f", "u")),
                "x1": BoundaryCondition(_CLAMP)}
    if name == "dcb":
        return {"x0:p0": BoundaryCondition(("f", "f", "u"), (0.0, 0.0, -a)),
                f"x0:p{nply - 1}": BoundaryCondition(("f", "f", "u"), (0.0, 0.0, a)),
                "x1": BoundaryCondition(_CLAMP)}
    return {"x0": BoundaryCondition(_CLAMP), "x1": BoundaryCondition(_CLAMP, (a, 0.0, 0.0))}


def _line_nodes(dec: Decomposition, x: float, z: float) -> np.ndarray:
    nodes = dec.mesh.nodes
    tol = 1e-9 * max(dec.mesh.length, 1.0)
    sel = np.flatnonzero((np.abs(nodes[:, 0] - x) < tol) & (np.abs(nodes[:, 2] - z) < tol))
    if not sel.size:
        raise ConfigurationError(f"no mesh nodes on the line x={x}, z={z}")
    return sel


def nodal_force(dec: Decomposition, nodes: np.ndarray, total: np.ndarray) -> dict[int, np.ndarray]:
    """Split ``total`` equally over ``nodes``; each node is loaded in one substructure only."""
    out: dict[int, np.ndarray] = {}
    share = np.asarray(total, dtype=float) / len(nodes)
    remaining = set(int(n) for n in nodes)
    for s in dec.subs:
        hit = np.flatnonzero(np.isin(s.nodes, list(remaining)))
        if not hit.size:
            continue
        f = out.setdefault(s.id, np.zeros(s.ndof))
        for c in range(3):
            f[3 * hit + c] += share[c]
        remaining.difference_update(int(n) for n in s.nodes[hit])
    return out


def _add(a: dict, b: dict) -> dict:
    out = {k: v.copy() for k, v in a.items()}
    for k, v in b.items():
        out[k] = out[k] + v if k in out else v.copy()
    return out


def _perturbation(cfg: RunConfig, dec: Decomposition):
    """Central perturbation forces and the monitored node set."""
    g = cfg.geometry
    name, p = cfg.scenario, cfg.loading.perturbation
    xc = g.length / 2
    top = float(sum(g.plies))
    top_nodes = _line_nodes(dec, xc, top)
    if name in ("contact_open", "buckling_delamination"):
        bottom = _line_nodes(dec, xc, 0.0)
        loads = _add(nodal_force(dec, top_nodes, [0, 0, p + cfg.loading.imperfection]),
                     nodal_force(dec, bottom, [0, 0, -p]))
        return loads, top_nodes
    if name == "contact_close":
        c = g.cracks[0]
        x = c.a0 / 2 if c.position == "start" else xc
        return {}, _line_nodes(dec, x, 0.0)
    if name in ("buckling", "multi_delamination"):
        return nodal_force(dec, top_nodes, [0, 0, p]), top_nodes
    return {}, top_nodes


def build_setup(cfg: RunConfig) -> Setup:
    g = cfg.geometry
    mats = ply_materials(cfg)
    mesh = generate_laminate_mesh(g.length, g.width, g.plies, g.elements, _cracks(cfg), order=g.order)
    bcs = _boundary_conditions(cfg)
    dec = partition(mesh, (cfg.partition.x, cfg.partition.y, cfg.partition.z), mats,
                    boundary_sets=tuple(bcs), ply_behavior=cfg.interface.ply_behavior)
    dec.audit()
    moduli = {}
    for itf in dec.interfaces:
        moduli[itf.id] = float(np.mean([mats[dec.subs[s.sub].ply].E_ref for s in itf.sides]))
    coh = None
    if any(i.behavior == "cohesive" for i in dec.interfaces):
        coh = CohesiveParams(**cfg.interface.cohesive.model_dump())
    policy = PolicyConfig(**cfg.policy.model_dump())
    pert, monitored = _perturbation(cfg, dec)
    loads, fixed = ({}, pert) if not cfg.loading.perturbation_scales else (pert, {})
    if cfg.scenario == "contact_close":
        loads = nodal_force(dec, monitored, [0, 0, cfg.loading.amplitude])
    problem = Problem(dec, bcs, moduli, policy=policy, cohesive=coh, loads=loads, fixed_loads=fixed)
    sv = cfg.solver
    solver_config = SolverConfig(eta_tol=sv.eta_tol, max_iterations=sv.max_iterations, mu=sv.mu,
                                 max_newton=sv.max_newton, newton_tol=sv.newton_tol,
                                 max_bisections=sv.max_bisections, nonlinear=sv.nonlinear,
                                 workers=cfg.workers)
    steps = cfg.loading.steps
    factors = np.linspace(0.0, 1.0, steps + 1)[1:]
    load, disp = _monitors(cfg, monitored)
    return Setup(cfg, problem, solver_config, factors, load, disp, monitored)


def _monitors(cfg: RunConfig, monitored: np.ndarray):
    name, a = cfg.scenario, cfg.loading.amplitude

    def mean_uz(s: LatinSolver) -> float:
        return float(s.node_displacements()[monitored, 2].mean())

    if name == "bending":
        tip = None

        def tip_uz(s: LatinSolver) -> float:
            nonlocal tip
            if tip is None:
                tip = np.flatnonzero(np.abs(s.dec.mesh.nodes[:, 0] - cfg.geometry.length) < 1e-9)
            return float(s.node_displacements()[tip, 2].mean())
        return (lambda s: a * s.factor), tip_uz
    if name == "contact_close":
        return (lambda s: a * s.factor), mean_uz
    if name == "dcb":
        top = f"x0:p{len(cfg.geometry.plies) - 1}"
        return (lambda s: float(s.boundary_force(top)[2])), (lambda s: a * s.factor)
    return (lambda s: -float(s.boundary_force("x1")[0])), mean_uz


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    step: int
    load: float
    displacement: float
    crack: float
    dissipated: float


@dataclass
class RunBundle:
    config: RunConfig
    curve: list[CurvePoint] = field(default_factory=list)
    steps: list[StepResult] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    status: str = "ok"
    failure: str | None = None
    wall_time: float = 0.0
    solver: LatinSolver | None = None

    @property
    def convergence(self) -> list[IterationRecord]:
        return [r for st in self.steps for r in st.records]

    @property
    def converged(self) -> bool:
        return self.status == "ok"

    @property
    def total_iterations(self) -> int:
        return sum(st.iterations for st in self.steps)


def crack_length(solver: LatinSolver, width: float) -> float:
    return solver.broken_area() / width


def snapshot(solver: LatinSolver, step: int) -> dict:
    """Damage maps and nodal displacements after a converged step."""
    return dict(step=step, factor=solver.factor,
                damage={i: solver.damage[i].d.copy() for i in sorted(solver.damage)},
                displacement=solver.node_displacements())


def run_setup(setup: Setup, progress: Callable[[StepResult], None] | None = None,
              stop_on_failure: bool | None = None) -> RunBundle:
    cfg = setup.config
    stop = cfg.solver.stop_on_failure if stop_on_failure is None else stop_on_failure
    t0 = time.perf_counter()
    solver = LatinSolver(setup.problem, setup.solver_config)
    bundle = RunBundle(config=cfg, solver=solver)
    every = cfg.output.snapshot_every
    for k, f in enumerate(setup.factors, start=1):
        res = solver.run_step(float(f))
        bundle.steps.append(res)
        if progress is not None:
            progress(res)
        if not res.converged:
            bundle.status = "failed"
            bundle.failure = (f"step {res.step} (load factor {f:.4g}) failed after {res.iterations} "
                              f"iterations and {res.bisections} bisections: {res.reason}")
            log.warning(bundle.failure)
            if stop:
                break
            continue
        bundle.curve.append(CurvePoint(res.step, setup.load(solver), setup.displacement(solver),
                                       crack_length(solver, cfg.geometry.width), solver.dissipated()))
        if (every and k % every == 0) or (cfg.output.vtk and k == len(setup.factors)):
            bundle.snapshots.append(snapshot(solver, res.step))
    bundle.wall_time = time.perf_counter() - t0
    return bundle


def run_scenario(name_or_config, overrides: dict | None = None,
                 progress: Callable[[StepResult], None] | None = None) -> RunBundle:
    """Build and run a scenario from its name (plus overrides) or a ``RunConfig``."""
    if isinstance(name_or_config, RunConfig):
        cfg = name_or_config
        if overrides:
            cfg = build_config(deep_merge(cfg.to_dict(), overrides))
    else:
        cfg = default_config(name_or_config, copy.deepcopy(overrides))
    return run_setup(build_setup(cfg), progress)
