"""LATIN solver against the monolithic reference and its structural invariants."""
import numpy as np
import pytest

from latinlam.directions import PolicyConfig
from latinlam.interface import BoundaryCondition
from latinlam.io import write_outputs
from latinlam.kernels import Material
from latinlam.latin import LatinSolver, Problem, SolverConfig, latin_error, relax
from latinlam.mesh import generate_laminate_mesh, partition
from latinlam.oracles import monolithic_solve
from latinlam.scenarios import build_setup, default_config, run_scenario

MAT = Material.isotropic(135000.0, 0.3)


def cantilever(nsub, tip=1.0, policy=None, elements=(4, 1, 1), length=4.0):
    mesh = generate_laminate_mesh(length, 1.0, [0.5], elements, order=2)
    bcs = {"x0": BoundaryCondition(("u", "u", "u")), "x1": BoundaryCondition(("f", "f", "f"), (0, 0, tip))}
    dec = partition(mesh, (nsub, 1, 1), [MAT], boundary_sets=tuple(bcs))
    policy = policy or PolicyConfig(macro_continuity=True)
    return Problem(dec, bcs, {i.id: MAT.E_ref for i in dec.interfaces}, policy=policy)


def converge(problem, nonlinear, tol=1e-12, cap=1500):
    s = LatinSolver(problem, SolverConfig(eta_tol=tol, max_iterations=cap, nonlinear=nonlinear,
                                          newton_tol=1e-13, max_newton=5, max_bisections=0))
    res = s.run_step(1.0)
    assert res.converged, res.reason
    return s


@pytest.mark.parametrize("nsub", [1, 2])
@pytest.mark.parametrize("nonlinear,tip", [(False, 1.0), (True, 20.0)])
def test_monolithic_equivalence(nsub, nonlinear, tip):
    problem = cantilever(nsub, tip)
    s = converge(problem, nonlinear)
    ref = monolithic_solve(problem, 1.0, nonlinear=nonlinear)
    u = s.node_displacements()
    assert np.abs(u - ref).max() <= 1e-8 * np.abs(ref).max()


def test_nonlinear_reference_differs_from_linear():
    # guards the previous test against a load too small to exercise the kinematics
    problem = cantilever(1, 20.0)
    lin = monolithic_solve(problem, 1.0, nonlinear=False)
    nl = monolithic_solve(problem, 1.0, nonlinear=True)
    assert np.abs(nl - lin).max() > 1e-3 * np.abs(lin).max()


@pytest.mark.parametrize("continuity", [True, False])
def test_macro_force_jump_after_every_admissibility_stage(continuity):
    problem = cantilever(4, 1.0, PolicyConfig(macro_continuity=continuity, anisotropy=True, slenderness=8.0),
                         elements=(8, 1, 1), length=8.0)
    s = LatinSolver(problem, SolverConfig(nonlinear=True))
    s.factor = 1.0
    for k in range(25):
        s.iterate(first=(k == 0))
        assert s.macro_force_jump() <= 1e-8
        if continuity:
            assert s.macro_displacement_jump() <= 1e-8


def test_relax_and_error_helpers():
    a, b = np.ones(3), np.zeros(3)
    np.testing.assert_allclose(relax(a, b, 0.8), 0.2)
    W = np.ones((2, 3))
    w = np.ones(2)
    assert latin_error([(W, W, W, W, w, 1.0)]) == 0.0
    assert latin_error([(W, W, 0 * W, W, w, 1.0)]) > 0.0


def _small_dcb(**extra):
    over = {"geometry": {"elements": [24, 1, 2]}, "partition": {"x": 4},
            "loading": {"steps": 4, "amplitude": 1.2}, "solver": {"eta_tol": 1e-3}}
    for k, v in extra.items():
        over.setdefault(k, {}).update(v)
    return over


def test_damage_monotone_over_accepted_steps():
    setup = build_setup(default_config("dcb", _small_dcb()))
    s = LatinSolver(setup.problem, setup.solver_config)
    prev = {i: d.d.copy() for i, d in s.damage.items()}
    grew = False
    for f in setup.factors:
        assert s.run_step(float(f)).converged
        for i, d in s.damage.items():
            assert np.all(d.d >= prev[i])
            assert np.all((0 <= d.d) & (d.d <= 1))
            grew |= bool(np.any(d.d > prev[i]))
            prev[i] = d.d.copy()
    assert grew


def test_byte_identical_outputs_across_worker_counts(tmp_path):
    files = {}
    for workers in (1, 3):
        bundle = run_scenario("dcb", dict(_small_dcb(output={"snapshot_every": 2, "vtk": True}), workers=workers))
        out = tmp_path / f"w{workers}"
        write_outputs(bundle, out)
        files[workers] = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "timing.json"}
    assert files[1].keys() == files[3].keys()
    for name in files[1]:
        if name == "config.yaml":
            continue                        # records the worker count itself
        assert files[1][name] == files[3][name], name
