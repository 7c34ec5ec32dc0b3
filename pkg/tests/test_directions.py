"""Search-direction construction and update policies."""
import numpy as np
import pytest

from latinlam.directions import (PolicyConfig, PolicyEngine, anisotropic_micro, baseline, cohesive_minus,
                                 reference_value, unified_contact_value)
from latinlam.interface import DamageState
from latinlam.kernels import Material
from latinlam.mesh import CrackSpec, generate_laminate_mesh, partition

E = 135000.0


def interfaces(behavior="contact"):
    crack = CrackSpec.centered(0.2, 8.0, 8.0, behavior)
    mesh = generate_laminate_mesh(8.0, 1.0, (0.2, 0.2), (8, 1, 2), [crack], order=1)
    dec = partition(mesh, (2, 1, 1), [Material.isotropic(E, 0.3)] * 2,
                    ply_behavior="cohesive" if behavior == "cohesive" else "perfect")
    return dec


def engine(dec, **cfg):
    return PolicyEngine(PolicyConfig(**cfg), {i.id: E for i in dec.interfaces})


def test_baseline_and_anisotropy():
    dec = interfaces()
    itf = dec.interior()[0]
    base = baseline(itf, E)
    np.testing.assert_allclose(base.k_minus, E / itf.length)
    an = anisotropic_micro(base, 10.0)
    np.testing.assert_allclose(an.k_minus[:, 2], E / itf.length)
    np.testing.assert_allclose(an.k_minus[:, :2], E / itf.length / 100.0)
    assert an.ratio == pytest.approx(100.0)
    with pytest.raises(ValueError):
        anisotropic_micro(base, 0.5)


def test_perfect_policy_flags():
    dec = interfaces()
    perfect = [i for i in dec.interior() if i.behavior == "perfect"][0]
    sd = engine(dec, anisotropy=True, slenderness=4.0, macro_continuity=True).initial(perfect)
    assert sd.continuity and sd.ratio == pytest.approx(16.0)
    assert not engine(dec).initial(perfect).continuity


def test_contact_status_update_follows_gaps():
    dec = interfaces()
    itf = [i for i in dec.interior() if i.behavior == "contact"][0]
    eng = engine(dec, contact_mode="status", contact_cadence=5, contact_initial="closed")
    sd = eng.initial(itf)
    kref = reference_value(itf, E)
    np.testing.assert_allclose(sd.k_minus, kref)
    gap = np.where(np.arange(itf.ngp) % 2 == 0, 1e-3, 1e-9)
    assert not eng.contact_update(itf, sd, 3, gap)              # off cadence
    assert eng.contact_update(itf, sd, 5, gap)
    open_ = np.arange(itf.ngp) % 2 == 0
    np.testing.assert_allclose(sd.k_minus[open_], 1e-6 * kref)
    np.testing.assert_allclose(sd.k_minus[~open_], kref)
    assert sd.version == 1
    assert not eng.contact_update(itf, sd, 10, gap)             # unchanged status: no event
    assert [e.kind for e in eng.events] == ["contact_status"]


def test_contact_all_touching_stays_closed():
    dec = interfaces()
    itf = [i for i in dec.interior() if i.behavior == "contact"][0]
    eng = engine(dec, contact_mode="status", contact_cadence=1, contact_initial="open")
    sd = eng.initial(itf)
    eng.contact_update(itf, sd, 1, np.zeros(itf.ngp))
    np.testing.assert_allclose(sd.k_minus, reference_value(itf, E))


def test_unified_contact_value():
    dec = interfaces()
    itf = [i for i in dec.interior() if i.behavior == "contact"][0]
    sd = engine(dec, contact_mode="unified", slenderness=10.0).initial(itf)
    np.testing.assert_allclose(sd.k_minus, unified_contact_value(E, itf.length, 10.0))
    assert unified_contact_value(E, 2.0, 10.0) == pytest.approx(E / 2.0 / 100.0)


def test_cohesive_minus_floor():
    d = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(cohesive_minus(d, 1e5, 1.0), [2e5, 1e5, 1.0])


@pytest.mark.parametrize("strategy", ["A", "B", "C", "D"])
def test_cohesive_strategies(strategy):
    dec = interfaces("cohesive")
    itf = [i for i in dec.interior() if i.behavior == "cohesive"][0]
    eng = PolicyEngine(PolicyConfig(cohesive_strategy=strategy, cohesive_cadence=10), {i.id: E for i in dec.interfaces},
                       k0=1e5)
    state = DamageState.pristine(itf.ngp)
    sd = eng.initial(itf, state)
    assert sd.k_plus is None
    np.testing.assert_allclose(sd.k_minus, 2e5)
    state.d[:] = 0.5
    changed = eng.cohesive_update(itf, sd, 10, state)
    if strategy in ("C", "D"):
        assert changed
        np.testing.assert_allclose(sd.k_minus, 1e5)
    else:
        assert not changed
    # C waits for the cadence, D updates every iteration
    state.d[:] = 0.75
    assert eng.cohesive_update(itf, sd, 11, state) == (strategy == "D")
    state.d[:] = 1.0
    changed = eng.cohesive_update(itf, sd, 20, state)
    floor = 1e-6 * reference_value(itf, E)
    if strategy == "B":
        assert changed
        np.testing.assert_allclose(sd.k_minus, floor)
    if strategy == "A":
        assert not changed


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig(slenderness=0.5)
    with pytest.raises(ValueError):
        PolicyConfig(contact_mode="sometimes")
    with pytest.raises(ValueError):
        PolicyConfig(cohesive_strategy="E")
