"""Mesh generation, partitioning and macro bases."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from latinlam.kernels import Material
from latinlam.mesh import CrackSpec, MeshError, build_macro_basis, generate_laminate_mesh, partition

MAT = Material.isotropic(135000.0, 0.3)


def laminate(order=2, cracks=(), elements=(8, 2, 2), plies=(0.2, 0.2), cuts=(4, 1, 1), sets=("x0", "x1"),
             ply_behavior="perfect"):
    mesh = generate_laminate_mesh(8.0, 1.0, plies, elements, cracks, order=order)
    return partition(mesh, cuts, [MAT] * len(plies), boundary_sets=sets, ply_behavior=ply_behavior)


@pytest.mark.parametrize("order", [1, 2])
def test_node_and_element_counts(order):
    mesh = generate_laminate_mesh(8.0, 1.0, (0.2, 0.2), (8, 2, 2), order=order)
    p = order
    assert len(mesh.elements) == 16 * 2
    assert len(mesh.nodes) == (8 * p + 1) * (2 * p + 1) * (2 * p + 1)
    assert mesh.elements.shape[1] == (p + 1) ** 3
    np.testing.assert_allclose(mesh.nodes.max(axis=0), [8.0, 1.0, 0.4])


def test_partition_audit_and_counts():
    dec = laminate(cuts=(4, 2, 1))
    dec.audit()
    assert len(dec.subs) == 4 * 2 * 2
    vol = sum(s.block.volume() for s in dec.subs)
    assert vol == pytest.approx(8.0 * 1.0 * 0.4, rel=1e-12)
    assert {len(i.sides) for i in dec.interior()} == {2}
    assert sum(i.area for i in dec.boundary("x0")) == pytest.approx(0.4, rel=1e-12)


def test_interface_normals_point_from_side0_to_side1():
    dec = laminate()
    for itf in dec.interior():
        c0 = dec.subs[itf.sides[0].sub].block.coords.mean(axis=0)
        c1 = dec.subs[itf.sides[1].sub].block.coords.mean(axis=0)
        assert (c1 - c0) @ itf.normal > 0


def test_crack_tags_precracked_points():
    crack = CrackSpec.centered(0.2, 8.0, 4.0, "cohesive")
    dec = laminate(cracks=[crack], ply_behavior="cohesive")
    ply = [i for i in dec.interior() if i.ply_boundary is not None]
    pre = np.concatenate([i.points[i.precracked] for i in ply if i.precracked is not None])
    assert pre[:, 0].min() >= 2.0 - 1e-12 and pre[:, 0].max() <= 6.0 + 1e-12
    area = sum(i.weights[i.precracked].sum() for i in ply if i.precracked is not None)
    assert area == pytest.approx(4.0 * 1.0, rel=1e-12)


def test_contact_crack_inside_cohesive_ply_interface():
    crack = CrackSpec(0.2, (0.0, 4.0), None, "contact")
    dec = laminate(cracks=[crack], ply_behavior="cohesive", cuts=(2, 1, 1))
    ply = sorted((i for i in dec.interior() if i.ply_boundary is not None), key=lambda i: i.points[:, 0].min())
    assert [i.behavior for i in ply] == ["contact", "cohesive"]
    assert not ply[1].precracked.any()


@pytest.mark.parametrize("bad", [dict(length=0.0), dict(elements=(0, 1, 2)), dict(elements=(4, 1, 3)),
                                 dict(order=3)])
def test_mesh_rejects_bad_input(bad):
    args = dict(length=8.0, width=1.0, ply_thicknesses=(0.2, 0.2), elements=(4, 1, 2), order=2) | bad
    with pytest.raises(MeshError):
        generate_laminate_mesh(**args)


@pytest.mark.parametrize("order", [1, 2])
def test_macro_basis_orthonormal_and_affine_exact(order):
    dec = laminate(order=order, elements=(8, 2, 4), cuts=(2, 2, 1))
    rng = np.random.default_rng(0)
    for itf in dec.interfaces:
        b = build_macro_basis(itf)
        gram = b.modes.T @ (b.weights[:, None] * b.modes)
        assert np.abs(gram - np.eye(b.count)).max() <= 1e-12
        # any affine field is reproduced exactly by the projection
        A, c = rng.standard_normal((3, 3)), rng.standard_normal(3)
        f = (itf.points @ A.T + c).ravel()
        assert np.abs(b.project(f) - f).max() <= 1e-12 * np.abs(f).max()
        assert b.count == 9


def test_macro_basis_component_subset():
    dec = laminate()
    itf = dec.boundary("x1")[0]
    b = build_macro_basis(itf, components=(2,))
    assert b.count == 3
    assert np.all(b.modes.reshape(itf.ngp, 3, -1)[:, :2] == 0)


@given(nx=st.integers(2, 6), cx=st.integers(1, 3))
def test_partition_is_a_tiling(nx, cx):
    mesh = generate_laminate_mesh(4.0, 1.0, (0.2, 0.2), (2 * nx, 1, 2), order=1)
    dec = partition(mesh, (min(cx, 2 * nx), 1, 1), [MAT, MAT])
    dec.audit()
    elems = np.sort(np.concatenate([s.elements for s in dec.subs]))
    np.testing.assert_array_equal(elems, np.arange(len(mesh.elements)))
