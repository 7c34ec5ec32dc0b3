"""Analytic references: frozen values and second-route checks."""
import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings, strategies as st

from latinlam import oracles

E = 135000.0


def test_euler_load_frozen():
    assert oracles.euler_load(E, 1.0, 0.1, 10.0) == pytest.approx(4.441321980490212, rel=1e-12)


def test_euler_load_from_inertia():
    b, h, L = 1.0, 0.1, 10.0
    I = quad(lambda z: z * z, -h / 2, h / 2)[0] * b
    assert oracles.euler_load(E, b, h, L) == pytest.approx(4 * math.pi ** 2 * E * I / L ** 2, rel=1e-12)


def test_local_global_buckling_frozen():
    p_local, p_global = oracles.local_global_buckling(E, 1.0, 0.2, 10.0, 20.0)
    assert p_local == pytest.approx(71.06115168784339, rel=1e-12)
    assert p_global == pytest.approx(44.41321980490212, rel=1e-12)


def test_global_buckling_limits():
    # no crack: the intact laminate of thickness 2 h; crack over the full length: two free plies
    tiny = oracles.local_global_buckling(E, 1.0, 0.2, 1e-9, 20.0)[1]
    assert tiny == pytest.approx(oracles.euler_load(E, 1.0, 0.4, 20.0), rel=1e-8)
    full = oracles.local_global_buckling(E, 1.0, 0.2, 20.0 - 1e-9, 20.0)[1]
    assert full == pytest.approx(2 * oracles.euler_load(E, 1.0, 0.2, 20.0), rel=1e-8)


def test_bruno_frozen():
    p_local = oracles.local_global_buckling(E, 1.0, 0.2, 10.0, 20.0)[0]
    assert oracles.bruno_propagation(0.4, 1.0, p_local, 10.0) == pytest.approx(0.33771922382747627, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 10.0), st.floats(0.1, 5.0), st.floats(1.0, 500.0), st.floats(1.0, 50.0))
def test_bruno_satisfies_quartic(G_c, b0, P, a0):
    w = oracles.bruno_propagation(G_c, b0, P, a0)
    xi = w / a0
    rhs = 4 * G_c * b0 / (math.pi ** 2 * P)
    roots = np.roots([3 / 16, 0, 2, 0, -rhs])
    pos = max(r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 0)
    assert xi == pytest.approx(pos, rel=1e-9)


def test_bruno_small_load_asymptote():
    # (3/16) xi^4 negligible: xi^2 -> 2 G_c b0 / (pi^2 P)
    G_c, b0, P, a0 = 1e-6, 1.0, 100.0, 10.0
    w = oracles.bruno_propagation(G_c, b0, P, a0)
    assert (w / a0) ** 2 == pytest.approx(2 * G_c * b0 / (math.pi ** 2 * P), rel=1e-6)


def test_bruno_zero_toughness():
    assert oracles.bruno_propagation(0.0, 1.0, 10.0, 5.0) == 0.0


@pytest.mark.parametrize("bad", [dict(E=0.0), dict(b=-1.0), dict(h=0.0), dict(L=-2.0)])
def test_euler_rejects_nonpositive(bad):
    args = dict(E=E, b=1.0, h=0.1, L=10.0) | bad
    with pytest.raises(ValueError, match="must be > 0"):
        oracles.euler_load(**args)


def test_dcb_frozen_values():
    m = oracles.DCBModel(E, 2.0, 0.5, 1e5, 0.4)
    assert 1 / m.compliance(10.0) == pytest.approx(7.480122096222174, rel=1e-10)
    P, d = m.peak(10.0)
    assert P == pytest.approx(4.556806983075094, rel=1e-10)
    assert d == pytest.approx(0.6091888507243088, rel=1e-10)


def test_dcb_compliance_second_route():
    m = oracles.DCBModel(E, 2.0, 0.5, 1e5, 0.4)
    for a in (5.0, 10.0, 15.0):
        c = oracles.beam_foundation_compliance(m.EI, 2 * m.k_n0 * m.b, a, 40.0)
        assert c == pytest.approx(m.compliance(a), rel=1e-5)


def test_dcb_peak_second_route():
    closed = oracles.DCBModel(E, 2.0, 0.5, 1e5, 0.4).peak(10.0)[0]
    numeric = oracles.dcb_numeric_peak(E, 2.0, 0.5, 10.0, 1e5, 0.4)
    assert numeric == pytest.approx(closed, rel=1e-4)


def test_dcb_rigid_foundation_limit():
    rigid = oracles.dcb_rigid_limit_force(E, 2.0, 0.5, 10.0, 0.4)
    assert rigid == pytest.approx(4.743416490252569, rel=1e-12)
    stiff = oracles.DCBModel(E, 2.0, 0.5, 1e14, 0.4).peak(10.0)[0]
    assert stiff == pytest.approx(rigid, rel=1e-3)


def test_dcb_curve_shape():
    d = np.linspace(0.0, 3.0, 61)
    P = oracles.dcb_curve(E, 2.0, 0.5, 10.0, 1e5, 0.4, d)
    m = oracles.DCBModel(E, 2.0, 0.5, 1e5, 0.4)
    pre = d <= m.peak(10.0)[1]
    np.testing.assert_allclose(P[pre], d[pre] / m.compliance(10.0), rtol=1e-12)
    assert np.all(np.diff(P[~pre]) < 0)            # softening during propagation
    # energy release rate stays at Y_c on the propagation branch
    for x in d[~pre][::5]:
        a = m.crack_length(x, 10.0)
        G = m.force(x, 10.0) ** 2 * m.compliance_derivative(a) / m.b
        assert G == pytest.approx(0.4, rel=1e-8)


def test_dcb_negative_displacement_rejected():
    with pytest.raises(ValueError):
        oracles.DCBModel(E, 2.0, 0.5, 1e5, 0.4).force(-1.0, 10.0)
