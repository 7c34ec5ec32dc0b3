"""Analytic reference values and independent numerical oracles.

Closed forms: Euler load of a built-in beam, local/global buckling loads of a
delaminated beam, the Bruno propagation condition and the double cantilever
beam on an elastic foundation.  Numerical routes: a Hermite beam on a Winkler
foundation (second route for the DCB compliance) and a monolithic Newton
solver on the undecomposed mesh (reference for the LATIN solver).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .kernels import internal_force_and_tangent


# ---------------------------------------------------------------------------
# Buckling
# ---------------------------------------------------------------------------

def euler_load(E: float, b: float, h: float, L: float) -> float:
    """Critical load of a beam built in at both ends, 4 pi^2 E I / L^2."""
    _positive(E=E, b=b, h=h, L=L)
    return 4.0 * math.pi ** 2 * E * (b * h ** 3 / 12.0) / L ** 2


def local_global_buckling(E: float, b: float, h_ply: float, a0: float, L0: float) -> tuple[float, float]:
    """(P_local, P_global) of a two-ply beam with a central delamination of length a0.

    Local: twice the Euler load of a built-in ply of length a0.  Global: the
    intact part (inertia 8 I0) and the two delaminated plies weighted by
    their length fractions.
    """
    _positive(E=E, b=b, h_ply=h_ply, a0=a0, L0=L0)
    if not a0 < L0:
        raise ValueError("a0 must be < L0")
    I0 = b * h_ply ** 3 / 12.0
    k = 4.0 * math.pi ** 2 * E
    p_local = 2.0 * k * I0 / a0 ** 2
    p_global = (L0 - a0) / L0 * k * 8.0 * I0 / L0 ** 2 + 2.0 * a0 / L0 * k * I0 / L0 ** 2
    return p_local, p_global


def bruno_propagation(G_c: float, b0: float, P_local: float, a0: float) -> float:
    """Transverse mid-span displacement at propagation in local buckling.

    Solves (3/16) xi^4 + 2 xi^2 = 4 G_c b0 / (pi^2 P_local) for xi^2 > 0 and
    returns w = xi a0.
    """
    if G_c < 0:
        raise ValueError("G_c must be >= 0")
    _positive(b0=b0, P_local=P_local, a0=a0)
    rhs = 4.0 * G_c * b0 / (math.pi ** 2 * P_local)
    # (3/16) x^2 + 2 x - rhs = 0, x = xi^2; rationalized root (no cancellation)
    x = 2.0 * rhs / (2.0 + math.sqrt(4.0 + 0.75 * rhs))
    return math.sqrt(x) * a0


# ---------------------------------------------------------------------------
# Double cantilever beam
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DCBModel:
    """One arm of a symmetric DCB resting on the cohesive layer.

    The arm deflects by w relative to the mid-plane, the layer opens by 2w,
    so the foundation modulus per unit length is ``2 k_n0 b``.
    """

    E: float
    b: float
    h_arm: float
    k_n0: float
    Y_c: float

    def __post_init__(self):
        _positive(E=self.E, b=self.b, h_arm=self.h_arm, k_n0=self.k_n0, Y_c=self.Y_c)

    @property
    def EI(self) -> float:
        return self.E * self.b * self.h_arm ** 3 / 12.0

    @property
    def lam(self) -> float:
        return (2.0 * self.k_n0 * self.b / (4.0 * self.EI)) ** 0.25

    def compliance(self, a: float) -> float:
        """Load-point compliance of one arm (semi-infinite foundation)."""
        l = self.lam
        return (a ** 3 + 3 * a ** 2 / l + 3 * a / l ** 2 + 1.5 / l ** 3) / (3.0 * self.EI)

    def compliance_derivative(self, a: float) -> float:
        l = self.lam
        return (3 * a ** 2 + 6 * a / l + 3 / l ** 2) / (3.0 * self.EI)

    def critical_force(self, a: float) -> float:
        """Force per arm at which G = P^2 c'(a) / b reaches Y_c."""
        return math.sqrt(self.Y_c * self.b / self.compliance_derivative(a))

    def crack_length(self, displacement: float, a0: float) -> float:
        """Crack length on the propagation branch for an arm displacement."""
        if displacement <= self.critical_force(a0) * self.compliance(a0):
            return a0

        def f(a):
            return self.critical_force(a) * self.compliance(a) - displacement

        hi = 2.0 * a0
        while f(hi) < 0:
            hi *= 2.0
        return brentq(f, a0, hi, xtol=1e-12)

    def force(self, displacement: float, a0: float) -> float:
        """Force per arm for a prescribed arm displacement (LEFM propagation)."""
        if displacement < 0:
            raise ValueError("displacement must be >= 0")
        a = self.crack_length(displacement, a0)
        return displacement / self.compliance(a)

    def peak(self, a0: float) -> tuple[float, float]:
        """(force, displacement) at propagation onset."""
        P = self.critical_force(a0)
        return P, P * self.compliance(a0)


def dcb_curve(E: float, b: float, h_arm: float, a0: float, k_n0: float, Y_c: float,
              displacement) -> np.ndarray:
    """Force per arm along a displacement program (vectorized over ``displacement``)."""
    m = DCBModel(E, b, h_arm, k_n0, Y_c)
    d = np.atleast_1d(np.asarray(displacement, dtype=float))
    return np.array([m.force(x, a0) for x in d]).reshape(np.shape(displacement))


def dcb_rigid_limit_force(E: float, b: float, h_arm: float, a: float, Y_c: float) -> float:
    """Built-in cantilever DCB (k_n0 -> infinity): P = sqrt(Y_c b E I) / a."""
    _positive(E=E, b=b, h_arm=h_arm, a=a, Y_c=Y_c)
    return math.sqrt(Y_c * b * E * b * h_arm ** 3 / 12.0) / a


def beam_foundation_compliance(EI: float, k_w: float, a: float, bonded: float, n_free: int = 200,
                               n_bonded: int = 400) -> float:
    """Tip compliance of a cantilever of free length ``a`` continued by a
    length ``bonded`` on a Winkler foundation ``k_w`` (Hermite beam elements,
    far end clamped)."""
    xs = np.concatenate([np.linspace(0.0, a, n_free + 1),
                         np.linspace(a, a + bonded, n_bonded + 1)[1:]])
    ne = len(xs) - 1
    nd = 2 * (ne + 1)
    rows, cols, vals = [], [], []
    for e in range(ne):
        h = xs[e + 1] - xs[e]
        k = EI / h ** 3 * np.array([[12, 6 * h, -12, 6 * h],
                                    [6 * h, 4 * h * h, -6 * h, 2 * h * h],
                                    [-12, -6 * h, 12, -6 * h],
                                    [6 * h, 2 * h * h, -6 * h, 4 * h * h]])
        if xs[e] >= a - 1e-12:
            k = k + k_w * h / 420.0 * np.array([[156, 22 * h, 54, -13 * h],
                                                [22 * h, 4 * h * h, 13 * h, -3 * h * h],
                                                [54, 13 * h, 156, -22 * h],
                                                [-13 * h, -3 * h * h, -22 * h, 4 * h * h]])
        dofs = np.arange(2 * e, 2 * e + 4)
        rows.append(np.repeat(dofs, 4))
        cols.append(np.tile(dofs, 4))
        vals.append(k.ravel())
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nd, nd))
    free = np.arange(nd - 2)
    f = np.zeros(nd - 2)
    f[0] = 1.0
    w = spla.spsolve(K[free][:, free].tocsc(), f)
    return float(w[0])


def dcb_numeric_peak(E: float, b: float, h_arm: float, a0: float, k_n0: float, Y_c: float,
                     bonded: float | None = None, da: float = 1e-3) -> float:
    """Onset force from the beam model by central differencing of the compliance."""
    EI = E * b * h_arm ** 3 / 12.0
    k_w = 2.0 * k_n0 * b
    bonded = bonded if bonded is not None else 4.0 * a0
    c = [beam_foundation_compliance(EI, k_w, a0 + s * da, bonded - s * da) for s in (-1, 1)]
    dc = (c[1] - c[0]) / (2.0 * da)
    return math.sqrt(Y_c * b / dc)


# ---------------------------------------------------------------------------
# Monolithic reference solver
# ---------------------------------------------------------------------------

class OracleError(RuntimeError):
    pass


def monolithic_solve(problem, factor: float = 1.0, nonlinear: bool = True, increments: int = 1,
                     tol: float = 1e-12, max_newton: int = 30) -> np.ndarray:
    """Solve the undecomposed problem with Newton; returns nodal displacements (nnode, 3).

    Only perfect interior interfaces are supported (they are simply merged).
    Dirichlet components of boundary patches are imposed on the face nodes,
    force components are integrated with the patch quadrature.
    """
    dec = problem.decomposition
    for itf in dec.interfaces:
        if not itf.is_boundary and itf.behavior != "perfect":
            raise OracleError(f"interface {itf.id} is {itf.behavior}; only perfect interfaces can be merged")
    nnode = len(dec.mesh.nodes)
    ndof = 3 * nnode
    maps = [(3 * s.nodes[:, None] + np.arange(3)).ravel() for s in dec.subs]
    P = [sp.csr_matrix((np.ones(len(m)), (np.arange(len(m)), m)), shape=(len(m), ndof)) for m in maps]

    fixed = np.zeros(ndof, bool)
    u_fix = np.zeros(ndof)
    f_ext = np.zeros(ndof)
    for itf in dec.boundary():
        bc = problem.bcs[itf.facet_set]
        side = itf.sides[0]
        tr = P[side.sub].T @ side.trace.T             # (ndof, 3 ng)
        for c in range(3):
            cols = np.arange(c, 3 * itf.ngp, 3)
            if bc.kinds[c] == "u":
                dofs = np.unique(tr[:, cols].tocoo().row)
                dofs = dofs[dofs % 3 == c]
                fixed[dofs] = True
                u_fix[dofs] = bc.values[c]
            else:
                f_ext += tr[:, cols] @ (itf.weights * bc.values[c])
    point = np.zeros(ndof)
    for s, f in problem.loads.items():
        point[maps[s]] += f
    fixed_point = np.zeros(ndof)
    for s, f in problem.fixed_loads.items():
        fixed_point[maps[s]] += f
    free = np.flatnonzero(~fixed)

    u = np.zeros(ndof)
    for k in range(1, increments + 1):
        lf = factor * k / increments
        u[fixed] = u_fix[fixed] * lf
        rhs = (f_ext + point) * lf + fixed_point
        for it in range(max_newton):
            r = -rhs.copy()
            K = sp.csr_matrix((ndof, ndof))
            for s, sub in enumerate(dec.subs):
                rs, Ks = internal_force_and_tangent(sub.block, u[maps[s]], nonlinear=nonlinear)
                r[maps[s]] += rs
                K = K + P[s].T @ Ks @ P[s]
            res = np.linalg.norm(r[free])
            scale = max(np.linalg.norm(rhs), np.linalg.norm(r + rhs), 1e-30)
            if res <= tol * scale:
                break
            du = spla.spsolve(K[free][:, free].tocsc(), -r[free])
            u[free] += du
            if not nonlinear:
                break
        else:
            raise OracleError(f"Newton did not converge at increment {k} (residual {res:.3e})")
    return u.reshape(nnode, 3)


def _positive(**values):
    for name, v in values.items():
        if not v > 0:
            raise ValueError(f"{name} must be > 0")
