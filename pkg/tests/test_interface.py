"""Interface laws: cohesive damage, contact, perfect bonding, boundary stage."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from latinlam.interface import (BoundaryCondition, CohesiveParams, DamageState, boundary_local_solve,
                                cohesive_local_solve, cohesive_traction, contact_local_solve,
                                damage_from_history, damage_update, deformed_normal, dissipated_energy,
                                driving_force, local_frame, perfect_local_solve)
from conftest import rotation

P = CohesiveParams()
N3 = np.array([0.0, 0.0, 1.0])
T1 = np.array([1.0, 0.0, 0.0])


def spd(rng, n, scale=1e4):
    A = rng.standard_normal((n, 3, 3))
    return scale * (np.einsum("gij,gkj->gik", A, A) + 0.5 * np.eye(3))


@pytest.mark.parametrize("n", [0.3, 0.5, 1.0, 2.0])
def test_mode_one_dissipation_equals_toughness(n):
    p = CohesiveParams(n=n, Y_c=0.4, k_n0=1e5)
    g_fail = np.sqrt(2 * p.Y_c * (n + 1) / n / p.k_n0)

    def traction(g):
        d = damage_from_history(0.5 * p.k_n0 * g * g, p)
        return (1 - d) * p.k_n0 * g
    work = quad(traction, 0.0, g_fail, limit=200, epsabs=1e-14)[0]
    assert work == pytest.approx(p.Y_c, rel=1e-8)
    assert float(dissipated_energy(1.0, p)) == pytest.approx(p.Y_c, rel=1e-14)
    assert float(damage_from_history(0.5 * p.k_n0 * g_fail ** 2, p)) == pytest.approx(1.0, rel=1e-12)


def test_dissipated_energy_along_partial_path():
    # energy dissipated up to damage d: work minus energy still stored
    p = P
    g1 = 0.6 * np.sqrt(2 * p.Y_c * (p.n + 1) / p.n / p.k_n0)
    d1 = float(damage_from_history(0.5 * p.k_n0 * g1 ** 2, p))
    work = quad(lambda g: (1 - damage_from_history(0.5 * p.k_n0 * g * g, p)) * p.k_n0 * g, 0, g1)[0]
    stored = 0.5 * (1 - d1) * p.k_n0 * g1 ** 2
    assert work - stored == pytest.approx(float(dissipated_energy(d1, p)), rel=1e-7)


def test_compression_does_not_damage():
    g = np.array([[0.0, 0.0, -1e-2]])
    assert driving_force(g, P)[0] == 0.0
    st_ = damage_update(g, DamageState.pristine(1), P)
    assert st_.d[0] == 0.0


@given(st.lists(st.tuples(st.floats(-1e-2, 1e-2), st.floats(-1e-2, 1e-2), st.floats(-1e-2, 1e-2)),
                min_size=1, max_size=30))
def test_damage_monotone_over_history(history):
    state = DamageState.pristine(1)
    for g in history:
        new = damage_update(np.array([g]), state, P)
        assert new.d[0] >= state.d[0]
        assert new.Y_max[0] >= state.Y_max[0]
        assert 0.0 <= new.d[0] <= 1.0
        state = new


@given(axis=st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda a: np.linalg.norm(a) > 0.1),
       angle=st.floats(-3.1, 3.1), seed=st.integers(0, 2 ** 31))
def test_cohesive_law_frame_indifferent(axis, angle, seed):
    rng = np.random.default_rng(seed)
    ng = 5
    F = np.eye(3) + 0.05 * rng.standard_normal((ng, 3, 3))
    gap = 2e-3 * rng.standard_normal((ng, 3))
    state = DamageState(d=rng.uniform(0, 0.9, ng), Y_max=np.zeros(ng))
    Q = rotation(axis, angle)
    t, new, _ = cohesive_traction(gap, F, N3, T1, state, P)
    t_r, new_r, _ = cohesive_traction(gap @ Q.T, np.einsum("ij,gjk->gik", Q, F), N3, T1, state, P)
    assert np.abs(t_r - t @ Q.T).max() <= 1e-10 * max(np.abs(t).max(), 1e-30)
    assert np.abs(new_r.d - new.d).max() <= 1e-10


def test_nanson_normal():
    rng = np.random.default_rng(0)
    F = np.eye(3) + 0.1 * rng.standard_normal((4, 3, 3))
    n3, J = deformed_normal(F, N3)
    c = np.cross(F @ np.array([1.0, 0, 0]), F @ np.array([0, 1.0, 0]))
    np.testing.assert_allclose(n3, c / np.linalg.norm(c, axis=1)[:, None], atol=1e-13)
    np.testing.assert_allclose(J, np.linalg.norm(c, axis=1), rtol=1e-12)
    Q, n, _ = local_frame(F, N3, T1)
    np.testing.assert_allclose(np.einsum("gji,gjk->gik", Q, Q), np.broadcast_to(np.eye(3), Q.shape), atol=1e-13)


@given(seed=st.integers(0, 2 ** 31))
def test_contact_local_solve_complementarity(seed):
    rng = np.random.default_rng(seed)
    ng = 8
    W1, W2 = 1e-3 * rng.standard_normal((2, ng, 3))
    F1, F2 = 10 * rng.standard_normal((2, ng, 3))
    K1, K2 = spd(rng, ng), spd(rng, ng)
    n3 = np.broadcast_to(N3, (ng, 3))
    W1h, W2h, F1h, F2h, closed = contact_local_solve(W1, W2, F1, F2, K1, K2, n3)
    gap = np.sum((W2h - W1h) * n3, axis=1)
    fn = np.sum(F1h * n3, axis=1)
    scale = np.abs(W1).max() + np.abs(W2).max()
    assert np.all(gap >= -1e-12 * scale)
    assert np.all(fn <= 0)
    assert np.abs(gap * fn).max() <= 1e-10 * scale * np.abs(F1).max()
    np.testing.assert_allclose(F1h + F2h, 0.0, atol=1e-12)
    # frictionless: no tangential force
    np.testing.assert_allclose(F1h[:, :2], 0.0, atol=1e-14)
    # search-direction relations
    np.testing.assert_allclose(F1h - F1, np.einsum("gij,gj->gi", K1, W1h - W1), atol=1e-8 * np.abs(F1).max())
    np.testing.assert_allclose(F2h - F2, np.einsum("gij,gj->gi", K2, W2h - W2), atol=1e-8 * np.abs(F1).max())


@given(seed=st.integers(0, 2 ** 31))
def test_perfect_local_solve(seed):
    rng = np.random.default_rng(seed)
    ng = 6
    W1, W2 = rng.standard_normal((2, ng, 3))
    F1, F2 = rng.standard_normal((2, ng, 3))
    K1, K2 = spd(rng, ng, 1.0), spd(rng, ng, 1.0)
    W1h, W2h, F1h, F2h = perfect_local_solve(W1, W2, F1, F2, K1, K2)
    np.testing.assert_allclose(W1h, W2h)
    np.testing.assert_allclose(F1h, -F2h)
    np.testing.assert_allclose(F1h - F1, np.einsum("gij,gj->gi", K1, W1h - W1), atol=1e-10)
    np.testing.assert_allclose(F2h - F2, np.einsum("gij,gj->gi", K2, W2h - W2), atol=1e-10)


@given(seed=st.integers(0, 2 ** 31), c=st.floats(2.5, 20.0))
def test_cohesive_local_solve_satisfies_law(seed, c):
    # finite k+ is an isotropic multiple of k0, above the uniqueness bound 4 n = 2
    rng = np.random.default_rng(seed)
    ng = 6
    W1, W2 = 2e-3 * rng.standard_normal((2, ng, 3))
    F1, F2 = 5 * rng.standard_normal((2, ng, 3))
    K1 = K2 = np.broadcast_to(c * P.k_n0 * np.eye(3), (ng, 3, 3)).copy()
    F = np.broadcast_to(np.eye(3), (ng, 3, 3)).copy()
    state = DamageState.pristine(ng)
    W1h, W2h, F1h, F2h, new = cohesive_local_solve(W1, W2, F1, F2, F, N3, T1, state, P, K1, K2)
    t, law_state, _ = cohesive_traction(W2h - W1h, F, N3, T1, state, P)
    np.testing.assert_allclose(F1h, t, atol=1e-8 * max(np.abs(t).max(), 1.0))
    np.testing.assert_allclose(new.d, law_state.d, atol=1e-10)
    np.testing.assert_allclose(F1h - F1, np.einsum("gij,gj->gi", K1, W1h - W1), atol=1e-8 * np.abs(F1).max())


def test_boundary_local_solve():
    bc = BoundaryCondition(("u", "f", "u"), (0.1, 2.0, -0.3))
    W = np.array([[0.0, 0.5, 0.0]])
    F = np.array([[1.0, 1.0, 1.0]])
    k = np.array([10.0, 10.0, 10.0])
    What, Fhat = boundary_local_solve(W, F, k, bc, factor=0.5)
    np.testing.assert_allclose(What[0, [0, 2]], [0.05, -0.15])
    assert Fhat[0, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(Fhat - F, k * (What - W))


def test_params_validation():
    with pytest.raises(ValueError, match="Y_c must be > 0"):
        CohesiveParams(Y_c=0.0)
    with pytest.raises(ValueError, match="alpha"):
        CohesiveParams(alpha=0.5)
