"""Continuum element kernels: consistency of residual, tangent and kinematics."""
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from latinlam.kernels import (InvertedElementError, Material, green_lagrange, hex_reference,
                              internal_force_and_tangent, quad_reference, strain_energy)
from conftest import rotation, small_block

ORTHO = Material.orthotropic(185500, 9900, 9900, 0.34, 0.34, 0.5, 6160, 6160, 3080, angle_deg=30.0)


@pytest.mark.parametrize("order", [1, 2])
def test_shape_functions_partition_of_unity(order):
    N, dN, w = hex_reference(order)
    np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-13)
    assert w.sum() == pytest.approx(8.0, rel=1e-14)
    Nq, dNq, wq = quad_reference(order)[:3]
    np.testing.assert_allclose(Nq.sum(axis=1), 1.0, atol=1e-14)
    assert wq.sum() == pytest.approx(4.0, rel=1e-14)


@pytest.mark.parametrize("order", [1, 2])
def test_volume(order):
    assert small_block(order).volume() == pytest.approx(2.0 * 1.0 * 0.5, rel=1e-13)


@given(seed=st.integers(0, 2 ** 31), scale=st.floats(1e-3, 5e-2), ortho=st.booleans())
def test_tangent_matches_finite_difference(seed, scale, ortho):
    blk = small_block(material=ORTHO if ortho else None)
    rng = np.random.default_rng(seed)
    u = scale * rng.standard_normal(blk.ndof)
    du = rng.standard_normal(blk.ndof)
    try:
        _, K = internal_force_and_tangent(blk, u)
    except InvertedElementError:
        assume(False)         # random nodal noise can fold a quadratic element; no tangent there
    h = 1e-6 * np.linalg.norm(u) / np.linalg.norm(du)
    rp, _ = internal_force_and_tangent(blk, u + h * du, with_tangent=False)
    rm, _ = internal_force_and_tangent(blk, u - h * du, with_tangent=False)
    fd = (rp - rm) / (2 * h)
    assert np.linalg.norm(K @ du - fd) <= 1e-5 * np.linalg.norm(fd)


@given(seed=st.integers(0, 2 ** 31))
def test_residual_is_energy_gradient(seed):
    blk = small_block(order=1, elements=(1, 1, 1))
    rng = np.random.default_rng(seed)
    u = 0.02 * rng.standard_normal(blk.ndof)
    du = rng.standard_normal(blk.ndof)
    r, _ = internal_force_and_tangent(blk, u, with_tangent=False)
    h = 1e-6
    dW = (strain_energy(blk, u + h * du) - strain_energy(blk, u - h * du)) / (2 * h)
    assert dW == pytest.approx(r @ du, rel=1e-6)


@pytest.mark.parametrize("nonlinear", [True, False])
def test_tangent_symmetric(nonlinear):
    blk = small_block(material=ORTHO)
    u = 0.03 * np.random.default_rng(3).standard_normal(blk.ndof)
    _, K = internal_force_and_tangent(blk, u, nonlinear=nonlinear)
    assert abs(K - K.T).max() <= 1e-10 * abs(K).max()


@given(axis=st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda a: np.linalg.norm(a) > 0.1),
       angle=st.floats(-3.0, 3.0), seed=st.integers(0, 2 ** 31))
def test_frame_indifference(axis, angle, seed):
    blk = small_block()
    X = blk.coords
    rng = np.random.default_rng(seed)
    u = 0.02 * rng.standard_normal(X.shape)
    Q = rotation(axis, angle)
    x_rot = (X + u) @ Q.T
    u_rot = x_rot - X
    r, _ = internal_force_and_tangent(blk, u.ravel(), with_tangent=False)
    r_rot, _ = internal_force_and_tangent(blk, u_rot.ravel(), with_tangent=False)
    np.testing.assert_allclose(r_rot.reshape(-1, 3), r.reshape(-1, 3) @ Q.T, atol=1e-8 * np.abs(r).max())
    assert strain_energy(blk, u_rot.ravel()) == pytest.approx(strain_energy(blk, u.ravel()), rel=1e-10)


def test_rigid_motion_is_stress_free():
    blk = small_block()
    Q = rotation([1, 2, 3], 0.7)
    u = blk.coords @ Q.T - blk.coords + np.array([1.0, -2.0, 0.5])
    r, _ = internal_force_and_tangent(blk, u.ravel(), with_tangent=False)
    assert np.abs(r).max() <= 1e-8 * 135000
    H = Q - np.eye(3)
    np.testing.assert_allclose(green_lagrange(H), 0.0, atol=1e-14)


def test_linear_kinematics_patch():
    blk = small_block()
    eps = 1e-3
    u = np.zeros_like(blk.coords)
    u[:, 0] = eps * blk.coords[:, 0]
    r, _ = internal_force_and_tangent(blk, u.ravel(), nonlinear=False, with_tangent=False)
    # internal nodes carry no force in a homogeneous state
    interior = (blk.coords[:, 0] > 1e-9) & (blk.coords[:, 0] < 2 - 1e-9)
    assert np.abs(r.reshape(-1, 3)[interior & (blk.coords[:, 1] > 1e-9) & (blk.coords[:, 1] < 1 - 1e-9)
                                   & (blk.coords[:, 2] > 1e-9) & (blk.coords[:, 2] < 0.5 - 1e-9)]).max() < 1e-8
    total = r.reshape(-1, 3)[blk.coords[:, 0] > 2 - 1e-9, 0].sum()
    C = blk.material.C
    assert total == pytest.approx(C[0, 0] * eps * 0.5, rel=1e-10)


def test_inverted_element_detected():
    blk = small_block(order=1, elements=(1, 1, 1))
    u = -2.0 * blk.coords
    with pytest.raises(InvertedElementError):
        internal_force_and_tangent(blk, u.ravel())


def test_materials_positive_definite():
    assert Material.isotropic(135000, 0.3).is_spd()
    for a in (0.0, 45.0, 90.0):
        m = Material.orthotropic(185500, 9900, 9900, 0.34, 0.34, 0.5, 6160, 6160, 3080, angle_deg=a)
        assert m.is_spd()
        np.testing.assert_allclose(m.C, m.C.T, atol=1e-9)
    m90 = Material.orthotropic(185500, 9900, 9900, 0.34, 0.34, 0.5, 6160, 6160, 3080, angle_deg=90.0)
    m0 = Material.orthotropic(185500, 9900, 9900, 0.34, 0.34, 0.5, 6160, 6160, 3080)
    assert m90.C[1, 1] == pytest.approx(m0.C[0, 0], rel=1e-12)
