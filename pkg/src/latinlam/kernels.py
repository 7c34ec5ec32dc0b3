"""Total-Lagrangian continuum kernels for tensor-product hexahedra.

Kinematics, Saint-Venant-Kirchhoff stress and the assembled internal force
and consistent tangent of one substructure.  Element arrays are evaluated for
all elements of a block at once; nothing here holds mutable state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

# Voigt ordering used throughout: 11, 22, 33, 23, 13, 12 (engineering shear).
VOIGT = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


class InvertedElementError(RuntimeError):
    """Raised when det(F) <= 0 at a quadrature point."""

    def __init__(self, element: int, detF: float):
        super().__init__(f"inverted element {element}: det(F)={detF:.3e}")
        self.element = element
        self.detF = detF


# ---------------------------------------------------------------------------
# Shape functions
# ---------------------------------------------------------------------------

def lagrange_1d(order: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of equispaced 1-D Lagrange polynomials on [-1, 1]."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    nodes = np.linspace(-1.0, 1.0, order + 1)
    n = order + 1
    N = np.ones((xi.size, n))
    dN = np.zeros((xi.size, n))
    for a in range(n):
        others = [b for b in range(n) if b != a]
        for b in others:
            N[:, a] *= (xi - nodes[b]) / (nodes[a] - nodes[b])
        for c in others:
            term = np.full(xi.size, 1.0 / (nodes[a] - nodes[c]))
            for b in others:
                if b != c:
                    term *= (xi - nodes[b]) / (nodes[a] - nodes[b])
            dN[:, a] += term
    return N, dN


@lru_cache(maxsize=8)
def gauss_1d(npts: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(npts)


@lru_cache(maxsize=8)
def hex_reference(order: int):
    """Reference shape data for a (order+1)^3-node hexahedron.

    Returns ``(N, dN, w)`` at the (order+1)^3 Gauss points, with local node
    index ``a + m*b + m*m*c`` (``m = order+1``) for 1-D indices a, b, c along
    xi, eta, zeta.  ``dN`` has shape (ngp, nnodes, 3).
    """
    m = order + 1
    g, gw = gauss_1d(m)
    N1, dN1 = lagrange_1d(order, g)
    ngp = m ** 3
    N = np.zeros((ngp, ngp))
    dN = np.zeros((ngp, ngp, 3))
    w = np.zeros(ngp)
    for k in range(m):
        for j in range(m):
            for i in range(m):
                q = i + m * j + m * m * k
                w[q] = gw[i] * gw[j] * gw[k]
                for c in range(m):
                    for b in range(m):
                        for a in range(m):
                            n = a + m * b + m * m * c
                            N[q, n] = N1[i, a] * N1[j, b] * N1[k, c]
                            dN[q, n, 0] = dN1[i, a] * N1[j, b] * N1[k, c]
                            dN[q, n, 1] = N1[i, a] * dN1[j, b] * N1[k, c]
                            dN[q, n, 2] = N1[i, a] * N1[j, b] * dN1[k, c]
    return N, dN, w


@lru_cache(maxsize=8)
def quad_reference(order: int):
    """Face (tensor-product quadrilateral) shape data at its Gauss points.

    Returns ``(N, dN, w)`` with ``dN`` of shape (ngp, nnodes, 2).
    """
    m = order + 1
    g, gw = gauss_1d(m)
    N1, dN1 = lagrange_1d(order, g)
    ngp = m * m
    N = np.zeros((ngp, ngp))
    dN = np.zeros((ngp, ngp, 2))
    w = np.zeros(ngp)
    for j in range(m):
        for i in range(m):
            q = i + m * j
            w[q] = gw[i] * gw[j]
            for b in range(m):
                for a in range(m):
                    n = a + m * b
                    N[q, n] = N1[i, a] * N1[j, b]
                    dN[q, n, 0] = dN1[i, a] * N1[j, b]
                    dN[q, n, 1] = N1[i, a] * dN1[j, b]
    return N, dN, w


# ---------------------------------------------------------------------------
# Material
# ---------------------------------------------------------------------------

def _voigt_to_tensor(C: np.ndarray) -> np.ndarray:
    T = np.zeros((3, 3, 3, 3))
    for I, (i, j) in enumerate(VOIGT):
        for J, (k, l) in enumerate(VOIGT):
            for a, b in {(i, j), (j, i)}:
                for c, d in {(k, l), (l, k)}:
                    T[a, b, c, d] = C[I, J]
    return T


def _tensor_to_voigt(T: np.ndarray) -> np.ndarray:
    C = np.zeros((6, 6))
    for I, (i, j) in enumerate(VOIGT):
        for J, (k, l) in enumerate(VOIGT):
            C[I, J] = T[i, j, k, l]
    return C


@dataclass(frozen=True)
class Material:
    """Linear hyperelastic law psi = 1/2 E:K:E in Voigt form (engineering shear)."""

    C: np.ndarray
    rho: float = 0.0
    E_ref: float = 0.0

    @classmethod
    def isotropic(cls, E: float, nu: float, rho: float = 0.0) -> "Material":
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] = lam + 2 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return cls(C=C, rho=rho, E_ref=E)

    @classmethod
    def orthotropic(cls, E1, E2, E3, nu12, nu13, nu23, G12, G13, G23,
                    rho: float = 0.0, angle_deg: float = 0.0) -> "Material":
        """Orthotropic ply; ``angle_deg`` rotates the fibre axis about X3."""
        S = np.zeros((6, 6))
        S[0, 0], S[1, 1], S[2, 2] = 1 / E1, 1 / E2, 1 / E3
        S[0, 1] = S[1, 0] = -nu12 / E1
        S[0, 2] = S[2, 0] = -nu13 / E1
        S[1, 2] = S[2, 1] = -nu23 / E2
        S[3, 3], S[4, 4], S[5, 5] = 1 / G23, 1 / G13, 1 / G12
        C = np.linalg.inv(S)
        C = 0.5 * (C + C.T)
        if angle_deg:
            t = np.deg2rad(angle_deg)
            R = np.array([[np.cos(t), -np.sin(t), 0.0],
                          [np.sin(t), np.cos(t), 0.0],
                          [0.0, 0.0, 1.0]])
            T = np.einsum("ia,jb,kc,ld,abcd->ijkl", R, R, R, R, _voigt_to_tensor(C))
            C = _tensor_to_voigt(T)
            C[np.abs(C) < 1e-9 * np.abs(C).max()] = 0.0
        return cls(C=C, rho=rho, E_ref=max(E1, E2, E3))

    def is_spd(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(0.5 * (self.C + self.C.T)) > 0))


# ---------------------------------------------------------------------------
# Point kinematics / stress
# ---------------------------------------------------------------------------

def green_lagrange(grad_u: np.ndarray) -> np.ndarray:
    """E = 1/2 (H + H^T + H^T H) for displacement gradient(s) H (..., 3, 3)."""
    H = np.asarray(grad_u, dtype=float)
    Ht = np.swapaxes(H, -1, -2)
    return 0.5 * (H + Ht + Ht @ H)


def to_voigt(E: np.ndarray) -> np.ndarray:
    """Strain tensor(s) -> Voigt vector(s) with engineering shear."""
    return np.stack([E[..., 0, 0], E[..., 1, 1], E[..., 2, 2],
                     2 * E[..., 1, 2], 2 * E[..., 0, 2], 2 * E[..., 0, 1]], axis=-1)


def from_voigt_stress(s: np.ndarray) -> np.ndarray:
    S = np.empty(s.shape[:-1] + (3, 3))
    for I, (i, j) in enumerate(VOIGT):
        S[..., i, j] = s[..., I]
        S[..., j, i] = s[..., I]
    return S


def pk2_stress(E: np.ndarray, material: Material) -> np.ndarray:
    """Second Piola-Kirchhoff stress pi = K : E."""
    return from_voigt_stress(to_voigt(E) @ material.C.T)


def stored_energy(E: np.ndarray, material: Material) -> np.ndarray:
    e = to_voigt(E)
    return 0.5 * np.einsum("...i,ij,...j->...", e, material.C, e)


# ---------------------------------------------------------------------------
# Element block and assembly
# ---------------------------------------------------------------------------

@dataclass
class ElementBlock:
    """Quadrature-ready element data for one substructure.

    ``conn`` holds substructure-local node numbers, ``coords`` the local
    reference coordinates.
    """

    coords: np.ndarray
    conn: np.ndarray
    order: int
    material: Material
    dNdX: np.ndarray = field(init=False, repr=False)
    wdet: np.ndarray = field(init=False, repr=False)
    _rows: np.ndarray = field(init=False, repr=False)
    _cols: np.ndarray = field(init=False, repr=False)
    _inv: np.ndarray = field(init=False, repr=False)
    _indptr: np.ndarray = field(init=False, repr=False)
    _indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        N, dN, w = hex_reference(self.order)
        X = self.coords[self.conn]                       # (ne, nn, 3)
        J = np.einsum("gnr,enc->egcr", dN, X)            # dX_c/dxi_r
        det = np.linalg.det(J)
        if np.any(det <= 0):
            raise ValueError("element with non-positive reference Jacobian")
        Jinv = np.linalg.inv(J)                          # dxi_r/dX_c
        self.dNdX = np.einsum("gnr,egrc->egnc", dN, Jinv)
        self.wdet = det * w[None, :]
        nn = self.conn.shape[1]
        edofs = (3 * self.conn[:, :, None] + np.arange(3)).reshape(len(self.conn), 3 * nn)
        rows = np.repeat(edofs, 3 * nn, axis=1).ravel()
        cols = np.tile(edofs, (1, 3 * nn)).ravel()
        ndof = self.ndof
        keys = rows.astype(np.int64) * ndof + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        urow = uniq // ndof
        self._indices = (uniq % ndof).astype(np.int32)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(urow, minlength=ndof))]).astype(np.int32)
        self._inv = inv
        self._edofs = edofs

    @property
    def ndof(self) -> int:
        return 3 * len(self.coords)

    def volume(self) -> float:
        return float(self.wdet.sum())

    def assemble_vector(self, fe: np.ndarray) -> np.ndarray:
        return np.bincount(self._edofs.ravel(), weights=fe.ravel(), minlength=self.ndof)

    def assemble_matrix(self, Ke: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._inv, weights=Ke.ravel(), minlength=len(self._indices))
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.ndof, self.ndof))

    def grad_u(self, u: np.ndarray) -> np.ndarray:
        """Displacement gradient at every Gauss point, shape (ne, ng, 3, 3)."""
        ue = u.reshape(-1, 3)[self.conn]
        return np.matmul(ue.transpose(0, 2, 1)[:, None], self.dNdX)


def _strain_operator(dNdX: np.ndarray, F: np.ndarray | None) -> np.ndarray:
    """B operator mapping element dofs to Voigt strain variations."""
    ne, ng, nn, _ = dNdX.shape
    if F is None:
        F = np.broadcast_to(np.eye(3), (ne, ng, 3, 3))
    B = np.zeros((ne, ng, 6, nn, 3))
    for v, (j, k) in enumerate(VOIGT):
        # B[v, a, i] = F_ij dN_a,k + F_ik dN_a,j  (halved on the diagonal)
        term = F[:, :, None, :, j] * dNdX[:, :, :, k, None]
        if j != k:
            term = term + F[:, :, None, :, k] * dNdX[:, :, :, j, None]
        B[:, :, v] = term
    return B.reshape(ne, ng, 6, nn * 3)


def internal_force_and_tangent(block: ElementBlock, u: np.ndarray, nonlinear: bool = True,
                               body_force: np.ndarray | None = None,
                               with_tangent: bool = True):
    """Residual (internal minus volume external force) and tangent of a block.

    The tangent is the sum of the material part and, for the geometrically
    nonlinear case, the initial-stress part.  Raises InvertedElementError when
    any Gauss point has det(F) <= 0.
    """
    mat = block.material
    ne, ng, nn, _ = block.dNdX.shape
    H = block.grad_u(u)
    if nonlinear:
        F = np.eye(3) + H
        detF = np.linalg.det(F)
        bad = np.flatnonzero((detF <= 0).any(axis=1))
        if bad.size:
            e = int(bad[0])
            raise InvertedElementError(e, float(detF[e].min()))
        E = green_lagrange(H)
    else:
        F = None
        E = 0.5 * (H + np.swapaxes(H, -1, -2))
    S_v = to_voigt(E) @ mat.C.T                     # (ne, ng, 6)
    B = _strain_operator(block.dNdX, F)             # (ne, ng, 6, nd)
    sw = (S_v * block.wdet[:, :, None]).reshape(ne, 1, ng * 6)
    fe = np.matmul(sw, B.reshape(ne, ng * 6, -1))[:, 0]
    if body_force is not None and mat.rho:
        N, _, _ = hex_reference(block.order)
        nodal = np.einsum("gn,eg->en", N, block.wdet) * mat.rho
        fe = fe - (nodal[:, :, None] * np.asarray(body_force)[None, None, :]).reshape(ne, -1)
    residual = block.assemble_vector(fe)
    if not with_tangent:
        return residual, None
    CB = np.matmul(mat.C, B) * block.wdet[:, :, None, None]
    Ke = np.matmul(B.reshape(ne, ng * 6, -1).transpose(0, 2, 1), CB.reshape(ne, ng * 6, -1))
    if nonlinear:
        S = from_voigt_stress(S_v)
        A = np.matmul(block.dNdX, S * block.wdet[:, :, None, None])
        G = np.matmul(A.transpose(0, 2, 1, 3).reshape(ne, nn, ng * 3),
                      block.dNdX.transpose(0, 1, 3, 2).reshape(ne, ng * 3, nn))
        Ke = Ke.reshape(ne, nn, 3, nn, 3)
        for i in range(3):
            Ke[:, :, i, :, i] += G
        Ke = Ke.reshape(ne, 3 * nn, 3 * nn)
    return residual, block.assemble_matrix(Ke)


def strain_energy(block: ElementBlock, u: np.ndarray, nonlinear: bool = True) -> float:
    H = block.grad_u(u)
    E = green_lagrange(H) if nonlinear else 0.5 * (H + np.swapaxes(H, -1, -2))
    return float(np.sum(stored_energy(E, block.material) * block.wdet))


def current_density(block: ElementBlock, u: np.ndarray) -> np.ndarray:
    """Density field rho = rho0 / det(F) at the Gauss points."""
    F = np.eye(3) + block.grad_u(u)
    return block.material.rho / np.linalg.det(F)
