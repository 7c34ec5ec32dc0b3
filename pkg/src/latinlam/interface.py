"""Point-wise interface laws: frame transport, cohesive damage, contact.

All functions are vectorised over interface Gauss points.  Conventions:

* The gap is ``[W] = W_E' - W_E`` where side E is the one the reference
  normal N3 points away from.  Opening is a positive normal gap.
* ``F_E`` is the force per unit reference area exerted on side E by the
  interface, so an opening cohesive spring gives ``n3 . F_E > 0`` and contact
  compression gives ``n3 . F_E <= 0``.  ``F_E' = -F_E`` (action-reaction).
* Search-direction operators are 3x3 matrices per point, expressed in the
  reference frame B0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InterfaceSolveError(RuntimeError):
    """Local interface problem failed to converge at a given point."""

    def __init__(self, message: str, point: int | None = None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class CohesiveParams:
    k_n0: float = 1.0e5
    k_t0: float = 1.0e5
    Y_c: float = 0.4
    alpha: float = 1.0
    n: float = 0.5
    gamma1: float = 1.0
    gamma2: float = 1.0

    def __post_init__(self):
        for name in ("k_n0", "k_t0", "Y_c", "n"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("gamma1, gamma2 must be >= 0")


@dataclass
class DamageState:
    """Damage, history maximum of the driving force and a contact flag per point."""

    d: np.ndarray
    Y_max: np.ndarray

    @classmethod
    def pristine(cls, ngp: int, precracked: np.ndarray | None = None) -> "DamageState":
        d = np.zeros(ngp)
        if precracked is not None:
            d[np.asarray(precracked, dtype=bool)] = 1.0
        return cls(d=d, Y_max=np.zeros(ngp))

    def copy(self) -> "DamageState":
        return DamageState(self.d.copy(), self.Y_max.copy())

    @property
    def broken(self) -> np.ndarray:
        return self.d >= 1.0


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------

def deformed_normal(F: np.ndarray, N3: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nanson transport of the reference normal: n3 = F^-T N3 / |F^-T N3|.

    Returns ``(n3, J_Gamma)`` with ``J_Gamma = det(F) |F^-T N3|``.
    """
    F = np.asarray(F, dtype=float)
    N3 = np.broadcast_to(np.asarray(N3, dtype=float), F.shape[:-1])
    det = np.linalg.det(F)
    if np.any(det <= 0):
        raise InterfaceSolveError("inverted interface element (det F <= 0)",
                                  int(np.flatnonzero(np.atleast_1d(det) <= 0)[0]))
    m = np.linalg.solve(np.swapaxes(F, -1, -2), N3[..., None])[..., 0]
    nrm = np.linalg.norm(m, axis=-1)
    return m / nrm[..., None], det * nrm


def interface_deformation(W_mean: np.ndarray, d_t1, d_t2, tangents: np.ndarray) -> np.ndarray:
    """Deformation gradient of the interface mid-surface at its Gauss points.

    The in-plane derivatives come from the Gauss-point field itself; the
    derivative along the normal is taken as zero, which keeps the deformed
    normal consistent with the cross product of the convected tangents.
    """
    W = W_mean.reshape(-1, 3)
    g1 = d_t1 @ W
    g2 = d_t2 @ W
    F = np.broadcast_to(np.eye(3), (len(W), 3, 3)).copy()
    F += g1[:, :, None] * tangents[0][None, None, :]
    F += g2[:, :, None] * tangents[1][None, None, :]
    return F


def local_frame(F: np.ndarray, N3: np.ndarray, T1: np.ndarray):
    """Rotation Q = [t1 | t2 | n3] from the local frame to B0, and J_Gamma.

    t1 is the convected reference tangent F T1 made orthogonal to n3, which
    makes the frame follow superposed rigid rotations exactly.
    """
    n3, J = deformed_normal(F, N3)
    T1 = np.broadcast_to(np.asarray(T1, dtype=float), n3.shape)
    a = np.einsum("...ij,...j->...i", F, T1)
    a = a - np.sum(a * n3, axis=-1, keepdims=True) * n3
    t1 = a / np.linalg.norm(a, axis=-1, keepdims=True)
    t2 = np.cross(n3, t1)
    Q = np.stack([t1, t2, n3], axis=-1)
    return Q, n3, J


def reference_frame(ngp: int, N3: np.ndarray, T1: np.ndarray):
    N3 = np.asarray(N3, dtype=float)
    T1 = np.asarray(T1, dtype=float)
    Q = np.stack([T1, np.cross(N3, T1), N3], axis=-1)
    return np.broadcast_to(Q, (ngp, 3, 3)).copy(), np.broadcast_to(N3, (ngp, 3)).copy(), np.ones(ngp)


# ---------------------------------------------------------------------------
# Cohesive law
# ---------------------------------------------------------------------------

def driving_force(g_local: np.ndarray, params: CohesiveParams) -> np.ndarray:
    """Equivalent damage driving force from local-frame gaps (t1, t2, n)."""
    g = np.asarray(g_local, dtype=float)
    Yn = 0.5 * params.k_n0 * np.maximum(g[..., 2], 0.0) ** 2
    Y1 = params.gamma1 * 0.5 * params.k_t0 * g[..., 0] ** 2
    Y2 = params.gamma2 * 0.5 * params.k_t0 * g[..., 1] ** 2
    a = params.alpha
    if a == 1.0:
        return Yn + Y1 + Y2
    return (Yn ** a + Y1 ** a + Y2 ** a) ** (1.0 / a)


def damage_from_history(Y_max: np.ndarray, params: CohesiveParams) -> np.ndarray:
    """Power law d = min(1, [n/(n+1) Y_max/Y_c]^n).

    With this prefactor the energy dissipated by a point driven to failure in
    pure mode I is exactly Y_c per unit area.
    """
    n = params.n
    return np.minimum(1.0, (n / (n + 1.0) * np.asarray(Y_max) / params.Y_c) ** n)


def dissipated_energy(d: np.ndarray, params: CohesiveParams) -> np.ndarray:
    """Energy per unit area dissipated to reach damage d along a monotone path."""
    n = params.n
    return params.Y_c * np.asarray(d) ** ((n + 1.0) / n)


def damage_update(g_local: np.ndarray, state: DamageState, params: CohesiveParams) -> DamageState:
    """Irreversible update: Y_max never decreases and neither does d."""
    Y = driving_force(g_local, params)
    Y_max = np.maximum(state.Y_max, Y)
    d = np.maximum(state.d, damage_from_history(Y_max, params))
    return DamageState(d=d, Y_max=Y_max)


def local_stiffness(g_n: np.ndarray, d: np.ndarray, params: CohesiveParams) -> np.ndarray:
    """Diagonal of the local-frame secant stiffness, shape (..., 3)."""
    d = np.asarray(d, dtype=float)
    h = (np.asarray(g_n) > 0).astype(float)
    kt = (1.0 - d) * params.k_t0
    kn = (1.0 - h * d) * params.k_n0
    return np.stack([kt, kt, kn], axis=-1)


def cohesive_traction(gap: np.ndarray, F: np.ndarray, N3: np.ndarray, T1: np.ndarray,
                      state: DamageState, params: CohesiveParams):
    """Reference-configuration cohesive force on side E and the trial damage.

    ``gap`` (ng, 3) in B0.  Returns ``(t_ref, new_state, frame)`` where
    ``t_ref = J_Gamma Q K_loc Q^T gap`` and ``frame = (Q, n3, J)``.
    """
    Q, n3, J = local_frame(F, N3, T1)
    g_loc = np.einsum("gji,gj->gi", Q, gap)
    new = damage_update(g_loc, state, params)
    k = local_stiffness(g_loc[:, 2], new.d, params)
    t = np.einsum("gij,gj->gi", Q, k * g_loc) * J[:, None]
    return t, new, (Q, n3, J)


# ---------------------------------------------------------------------------
# Local-stage solvers
# ---------------------------------------------------------------------------

def _solve3(K, v):
    return np.linalg.solve(K, v[..., None])[..., 0]


def perfect_local_solve(W1, W2, F1, F2, K1, K2):
    """Perfect bonding: common displacement, opposite forces, both k+ relations."""
    rhs = np.einsum("gij,gj->gi", K1, W1) + np.einsum("gij,gj->gi", K2, W2) - F1 - F2
    What = _solve3(K1 + K2, rhs)
    F1h = F1 + np.einsum("gij,gj->gi", K1, What - W1)
    return What, What.copy(), F1h, -F1h


def _gap_predictor(W1, W2, F1, F2, K1, K2):
    C = np.linalg.inv(K1) + np.linalg.inv(K2)
    g0 = (W2 - W1) + _solve3(K1, F1) - _solve3(K2, F2)
    return g0, C


def _recover_sides(W1, W2, F1, F2, K1, K2, F1h):
    W1h = W1 + _solve3(K1, F1h - F1)
    W2h = W2 + _solve3(K2, -F1h - F2)
    return W1h, W2h, F1h, -F1h


def contact_local_solve(W1, W2, F1, F2, K1, K2, n3):
    """Frictionless unilateral contact with the k+ search-direction relations.

    Open trial first (zero force); if its normal gap is negative the closed
    branch (zero normal gap, normal compressive force) is used.
    """
    g0, C = _gap_predictor(W1, W2, F1, F2, K1, K2)
    gn0 = np.sum(g0 * n3, axis=1)
    closed = gn0 < 0
    Cnn = np.einsum("gi,gij,gj->g", n3, C, n3)
    p = np.where(closed, gn0 / Cnn, 0.0)
    if np.any(p > 0):
        raise InterfaceSolveError("contact: no admissible branch (search direction not SPD)",
                                  int(np.flatnonzero(p > 0)[0]))
    F1h = p[:, None] * n3
    return (*_recover_sides(W1, W2, F1, F2, K1, K2, F1h), closed)


def cohesive_local_solve(W1, W2, F1, F2, F_itf, N3, T1, state: DamageState, params: CohesiveParams,
                         K1=None, K2=None, tol: float = 1e-10, max_iter: int = 50):
    """Cohesive local problem.

    With ``K1 is None`` (infinite k+) the displacements are kept and the
    forces follow directly from the law.  Otherwise ``g + C t(g) = g0`` is
    solved point by point by Newton's method with a forward-difference 3x3
    Jacobian and backtracking (the law has a kink at zero normal gap).
    Returns ``(W1h, W2h, F1h, F2h, trial_state)``.
    """
    if K1 is None:
        t, new, _ = cohesive_traction(W2 - W1, F_itf, N3, T1, state, params)
        return W1.copy(), W2.copy(), t, -t, new
    g0, C = _gap_predictor(W1, W2, F1, F2, K1, K2)
    scale = np.maximum(np.linalg.norm(g0, axis=1), 1e-30)

    def residual(g):
        t, new, _ = cohesive_traction(g, F_itf, N3, T1, state, params)
        return g + np.einsum("gij,gj->gi", C, t) - g0, t, new

    g = g0.copy()
    R, t, new = residual(g)
    err = np.linalg.norm(R, axis=1) / scale
    for _ in range(max_iter):
        if np.all(err <= tol):
            break
        h = 1e-7 * scale
        Jac = np.empty((len(g), 3, 3))
        for c in range(3):
            gp = g.copy()
            gp[:, c] += h
            Jac[:, :, c] = (residual(gp)[0] - R) / h[:, None]
        dg = -_solve3(Jac, R)
        step = np.ones(len(g))
        for _ in range(8):
            Rn, tn, newn = residual(g + step[:, None] * dg)
            errn = np.linalg.norm(Rn, axis=1) / scale
            bad = (errn > (1.0 - 1e-4 * step) * err) & (err > tol)
            if not bad.any():
                break
            step = np.where(bad, 0.5 * step, step)
        g = g + step[:, None] * dg
        R, t, new = residual(g)
        err = np.linalg.norm(R, axis=1) / scale
    else:
        if not np.all(err <= tol):
            bad = int(np.argmax(err))
            raise InterfaceSolveError(f"cohesive local Newton did not converge at point {bad} "
                                      f"(residual {err[bad]:.2e})", bad)
    return (*_recover_sides(W1, W2, F1, F2, K1, K2, t), new)


@dataclass(frozen=True)
class BoundaryCondition:
    """Per-component prescription on a boundary patch.

    ``kinds[c]`` is ``"u"`` (displacement prescribed) or ``"f"`` (force per
    unit reference area prescribed).  ``values[c]`` are the prescribed
    values at load factor 1.
    """

    kinds: tuple[str, str, str]
    values: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return np.array([k == "u" for k in self.kinds])


def boundary_local_solve(W, F, k_diag, bc: BoundaryCondition, factor: float = 1.0):
    """Boundary local stage with a reference-frame diagonal search direction.

    Dirichlet components: W_hat = U_d, F_hat = F + k+ (W_hat - W).
    Neumann components: F_hat = F_d, W_hat = W + (F_hat - F) / k+.
    """
    mask = bc.dirichlet_mask
    val = factor * np.asarray(bc.values, dtype=float)
    What = np.where(mask, val, W + (val - F) / k_diag)
    Fhat = np.where(mask, F + k_diag * (val - W), val)
    return What, Fhat
