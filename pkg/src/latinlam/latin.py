"""Mixed multiscale LATIN solver for substructured laminates.

One LATIN iteration is a local stage on every interface, an admissibility
stage (substructure Newton iterations coupled through the macro problem),
relaxation and the error indicator.  Interface fields are kept per interface
as arrays of shape (nsides, ng, 3).
"""
from __future__ import annotations

import copy
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .directions import PolicyConfig, PolicyEngine, SearchDirections
from .interface import (BoundaryCondition, CohesiveParams, DamageState, InterfaceSolveError,
                        boundary_local_solve, cohesive_local_solve, contact_local_solve,
                        dissipated_energy, interface_deformation, local_frame, perfect_local_solve,
                        reference_frame)
from .kernels import InvertedElementError, internal_force_and_tangent
from .mesh import Decomposition, InterfaceGeometry, MacroBasis, build_macro_basis

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """The problem definition cannot be solved (e.g. singular macro problem)."""


class ConvergenceFailure(RuntimeError):
    """A load step did not converge even after bisection."""

    def __init__(self, message: str, records=None):
        super().__init__(message)
        self.records = records or []


class StepFailure(RuntimeError):
    """Internal signal: the current load increment must be cut."""


@dataclass(frozen=True)
class SolverConfig:
    eta_tol: float = 1e-3
    max_iterations: int = 200
    mu: float = 0.8
    max_newton: int = 3
    newton_tol: float = 1e-6
    max_bisections: int = 4
    nonlinear: bool = True
    workers: int = 1
    divergence_eta: float = 1e6

    def __post_init__(self):
        if not 0 < self.mu <= 1:
            raise ValueError("mu must be in (0, 1]")
        if not self.eta_tol > 0 or self.max_iterations < 1 or self.max_newton < 1:
            raise ValueError("eta_tol, max_iterations and max_newton must be positive")
        if self.workers < 1 or self.max_bisections < 0:
            raise ValueError("workers must be >= 1 and max_bisections >= 0")


@dataclass
class Problem:
    """Substructured problem definition.

    ``bcs`` maps outer facet-set names to boundary conditions (their values
    scale with the load factor).  ``loads`` and ``fixed_loads`` hold nodal
    force vectors per substructure; the former scale with the load factor,
    the latter are applied at full value in every step (perturbations).
    ``moduli`` gives the E used in E/L_Gamma per interface id.
    """

    decomposition: Decomposition
    bcs: dict[str, BoundaryCondition]
    moduli: dict[int, float]
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    cohesive: CohesiveParams | None = None
    loads: dict[int, np.ndarray] = field(default_factory=dict)
    fixed_loads: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class IterationRecord:
    step: int
    iteration: int
    eta: float
    newton: int
    macro_solves: int
    wall_time: float

    def as_dict(self, with_time: bool = True) -> dict:
        d = dict(step=self.step, iteration=self.iteration, eta=self.eta, newton=self.newton,
                 macro_solves=self.macro_solves)
        if with_time:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class StepResult:
    step: int
    factor: float
    converged: bool
    iterations: int
    records: list[IterationRecord]
    wall_time: float
    bisections: int = 0
    reason: str | None = None         # why the step failed


@dataclass
class _Side:
    itf: int
    k: int                         # side index in the interface
    trace: sp.csr_matrix
    wq: np.ndarray                 # (3ng,) weights per component
    alpha_idx: np.ndarray          # global macro indices carried by this side
    phi: np.ndarray | None         # (3ng, len(alpha_idx))
    constrained: bool = False
    phi_c: np.ndarray | None = None
    c_alpha: np.ndarray | None = None   # global alpha index per constraint row, -1 if fixed


@dataclass
class _SubCache:
    version: tuple = ()
    lu: object = None
    XZ: np.ndarray | None = None
    XG: np.ndarray | None = None
    Sfac: object = None
    N: np.ndarray | None = None
    D: np.ndarray | None = None
    L: np.ndarray | None = None
    R: sp.csr_matrix | None = None
    Z: np.ndarray | None = None
    G: np.ndarray | None = None
    Sc: np.ndarray | None = None
    aidx: np.ndarray | None = None


@dataclass
class LatinIterate:
    u: list[np.ndarray]
    W: list[np.ndarray]
    F: list[np.ndarray]
    What: list[np.ndarray]
    Fhat: list[np.ndarray]

    def copy(self) -> "LatinIterate":
        return LatinIterate(*(list(a.copy() for a in getattr(self, n)) for n in ("u", "W", "F", "What", "Fhat")))


def relax(prev: np.ndarray, new: np.ndarray, mu: float) -> np.ndarray:
    """s_n = mu * s_new + (1 - mu) * s_prev."""
    if not 0 < mu <= 1:
        raise ValueError("mu must be in (0, 1]")
    return mu * new + (1.0 - mu) * prev


def latin_error(pairs) -> float:
    """Error indicator between admissible and local-stage fields.

    ``pairs`` yields ``(W, F, What, Fhat, weights, kbar)`` per interface side
    with Gauss-point arrays (ng, 3).  Returns 0 when both numerator and
    denominator vanish and ``inf`` when only the denominator does.
    """
    num = den = 0.0
    for W, F, Wh, Fh, w, kb in pairs:
        num += np.sum(w * (np.sum((F - Fh) ** 2, axis=-1) / kb + kb * np.sum((W - Wh) ** 2, axis=-1)))
        den += np.sum(w * (np.sum((F + Fh) ** 2, axis=-1) / (2 * kb) + kb * np.sum((W + Wh) ** 2, axis=-1) / 2))
    if den <= 0:
        return 0.0 if num <= 0 else float("inf")
    return float(np.sqrt(num / den))


def _block3(K: np.ndarray, wq: np.ndarray | None = None) -> sp.bsr_matrix:
    ng = len(K)
    data = K if wq is None else K * wq.reshape(ng, 3)[:, :, None]
    return sp.bsr_matrix((data, np.arange(ng), np.arange(ng + 1)), shape=(3 * ng, 3 * ng))


def _bmv(K: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("gij,gj->gi", K, v)


class LatinSolver:
    def __init__(self, problem: Problem, config: SolverConfig = SolverConfig()):
        self.problem = problem
        self.config = config
        dec = problem.decomposition
        self.dec = dec
        self.itfs: list[InterfaceGeometry] = dec.interfaces
        self.policy = PolicyEngine(problem.policy, problem.moduli,
                                   k0=problem.cohesive.k_n0 if problem.cohesive else 1.0e5)
        self.bc_of: dict[int, BoundaryCondition] = {}
        for itf in self.itfs:
            if itf.is_boundary:
                if itf.facet_set not in problem.bcs:
                    raise ConfigurationError(f"boundary interface on {itf.facet_set} has no condition")
                self.bc_of[itf.id] = problem.bcs[itf.facet_set]
            if itf.behavior == "cohesive" and problem.cohesive is None:
                raise ConfigurationError("cohesive interfaces need cohesive parameters")
        self.damage: dict[int, DamageState] = {
            i.id: DamageState.pristine(i.ngp, i.precracked) for i in self.itfs if i.behavior == "cohesive"}
        self.trial_damage = {k: v.copy() for k, v in self.damage.items()}
        self.directions: dict[int, SearchDirections] = {
            i.id: self.policy.initial(i, self.damage.get(i.id)) for i in self.itfs}
        self.kbar = {i.id: problem.moduli[i.id] / i.length for i in self.itfs}
        self._build_macro()
        self._caches = [_SubCache() for _ in dec.subs]
        self._macro_cache = None
        self._K0: dict[int, sp.csr_matrix] = {}
        ndofs = [s.ndof for s in dec.subs]
        zeros = [np.zeros((len(i.sides), i.ngp, 3)) for i in self.itfs]
        self.state = LatinIterate(u=[np.zeros(n) for n in ndofs], W=[z.copy() for z in zeros],
                                  F=[z.copy() for z in zeros], What=[z.copy() for z in zeros],
                                  Fhat=[z.copy() for z in zeros])
        self.factor = 0.0
        self.global_iteration = 0
        self.step_index = 0
        self.counters = dict(factorizations=0, macro_factorizations=0, macro_solves=0,
                             invalidations=0)
        self._frames: dict[int, tuple] = {}
        self.contact_closed: dict[int, np.ndarray] = {}

    # ------------------------------------------------------------------
    # setup
    # ------------------------------------------------------------------
    def _build_macro(self):
        cont = self.problem.policy.macro_continuity
        n = 0
        self.basis: dict[int, MacroBasis] = {}
        self.alpha_of: dict[int, np.ndarray] = {}
        self.full_basis: dict[int, MacroBasis] = {}
        self.constrained: dict[int, bool] = {}
        for itf in self.itfs:
            comps = (0, 1, 2)
            if itf.is_boundary:
                bc = self.bc_of[itf.id]
                comps = tuple(c for c in range(3) if bc.kinds[c] == "f")
            cons = cont and ((not itf.is_boundary and itf.behavior == "perfect")
                             or (itf.is_boundary and not comps))
            self.constrained[itf.id] = cons
            if cons:
                self.full_basis[itf.id] = build_macro_basis(itf)
            if comps:
                b = build_macro_basis(itf, comps)
                self.basis[itf.id] = b
                self.alpha_of[itf.id] = np.arange(n, n + b.count)
                n += b.count
            else:
                self.alpha_of[itf.id] = np.zeros(0, dtype=int)
        self.n_macro = n
        self.sides: list[list[_Side]] = [[] for _ in self.dec.subs]
        for itf in self.itfs:
            wq = np.repeat(itf.weights, 3)
            for k, side in enumerate(itf.sides):
                b = self.basis.get(itf.id)
                s = _Side(itf=itf.id, k=k, trace=side.trace, wq=wq, alpha_idx=self.alpha_of[itf.id],
                          phi=None if b is None else b.modes)
                if self.constrained[itf.id]:
                    s.constrained = True
                    s.phi_c = self.full_basis[itf.id].modes
                    s.c_alpha = (self.alpha_of[itf.id] if len(self.alpha_of[itf.id]) == s.phi_c.shape[1]
                                 else -np.ones(s.phi_c.shape[1], dtype=int))
                self.sides[side.sub].append(s)

    # ------------------------------------------------------------------
    # frames and operators
    # ------------------------------------------------------------------
    def _update_frames(self):
        """Interface frames from the mean displacement of the current s."""
        st = self.state
        self._frames = {}
        for itf in self.itfs:
            if itf.is_boundary or not self.config.nonlinear:
                Q, n3, J = reference_frame(itf.ngp, itf.normal, itf.tangents[0])
                F = np.broadcast_to(np.eye(3), (itf.ngp, 3, 3))
            else:
                Wm = st.W[itf.id].mean(axis=0)
                F = interface_deformation(Wm, itf.d_t1, itf.d_t2, itf.tangents)
                Q, n3, J = local_frame(F, itf.normal, itf.tangents[0])
            self._frames[itf.id] = (Q, n3, J, F)

    def _operator(self, itf_id: int, diag: np.ndarray) -> np.ndarray:
        Q = self._frames[itf_id][0]
        return np.einsum("gik,gk,gjk->gij", Q, diag, Q)

    def _k_minus(self, itf_id: int) -> np.ndarray:
        return self._operator(itf_id, self.directions[itf_id].k_minus)

    # ------------------------------------------------------------------
    # local stage
    # ------------------------------------------------------------------
    def local_stage(self):
        st = self.state
        for itf in self.itfs:
            i = itf.id
            W, F = st.W[i], st.F[i]
            sd = self.directions[i]
            Q, n3, J, Fitf = self._frames[i]
            if itf.behavior == "boundary":
                bc = self.bc_of[i]
                kd = self._boundary_diag(itf, sd.k_plus)
                Wh, Fh = boundary_local_solve(W[0], F[0], kd, bc, self.factor)
                st.What[i][0], st.Fhat[i][0] = Wh, Fh
                continue
            Kp = self._operator(i, sd.k_plus) if sd.k_plus is not None else None
            if itf.behavior == "perfect":
                out = perfect_local_solve(W[0], W[1], F[0], F[1], Kp, Kp)
            elif itf.behavior == "contact":
                *out, closed = contact_local_solve(W[0], W[1], F[0], F[1], Kp, Kp, n3)
                self.contact_closed[i] = closed
            else:
                out = self._cohesive_local(itf, W, F, Kp, Fitf, n3)
            st.What[i][0], st.What[i][1], st.Fhat[i][0], st.Fhat[i][1] = out

    def _cohesive_local(self, itf, W, F, Kp, Fitf, n3):
        i = itf.id
        params = self.problem.cohesive
        committed = self.damage[i]
        broken = committed.broken
        Wh0, Wh1, Fh0, Fh1, trial = cohesive_local_solve(
            W[0], W[1], F[0], F[1], Fitf, itf.normal, itf.tangents[0], committed, params,
            K1=Kp, K2=Kp)
        if broken.any():
            Kc = Kp if Kp is not None else self._k_minus(i)
            b = broken
            cW0, cW1, cF0, cF1, closed = contact_local_solve(W[0][b], W[1][b], F[0][b], F[1][b],
                                                             Kc[b], Kc[b], n3[b])
            Wh0[b], Wh1[b], Fh0[b], Fh1[b] = cW0, cW1, cF0, cF1
            trial.d[b] = 1.0
        self.trial_damage[i] = trial
        return Wh0, Wh1, Fh0, Fh1

    @staticmethod
    def _boundary_diag(itf, kdiag):
        """Local (t1, t2, n) diagonal mapped onto reference axes."""
        out = np.empty_like(kdiag)
        t1 = int(np.argmax(np.abs(itf.tangents[0])))
        t2 = int(np.argmax(np.abs(itf.tangents[1])))
        out[:, t1], out[:, t2], out[:, itf.axis] = kdiag[:, 0], kdiag[:, 1], kdiag[:, 2]
        return out

    def _side_K(self, itf_id: int) -> np.ndarray:
        itf = self.itfs[itf_id]
        sd = self.directions[itf_id]
        if itf.is_boundary:
            kd = self._boundary_diag(itf, sd.k_minus)
            K = np.zeros((itf.ngp, 3, 3))
            K[:, np.arange(3), np.arange(3)] = kd
            return K
        return self._k_minus(itf_id)

    # ------------------------------------------------------------------
    # admissibility stage
    # ------------------------------------------------------------------
    def _external(self, sub: int) -> np.ndarray | None:
        f = None
        if sub in self.problem.loads:
            f = self.factor * self.problem.loads[sub]
        if sub in self.problem.fixed_loads:
            f = self.problem.fixed_loads[sub] if f is None else f + self.problem.fixed_loads[sub]
        return f

    def _version(self, sub: int):
        return tuple(self.directions[s.itf].version for s in self.sides[sub])

    def _sub_operators(self, sub: int, Ks: dict):
        """Robin matrix, macro coupling Z, constraint rows G and L-blocks for one sub."""
        sides = self.sides[sub]
        ndof = self.dec.subs[sub].ndof
        R = sp.csr_matrix((ndof, ndof))
        Z_cols, G_rows, PKP, Sc_rows = [], [], [], []
        alpha_idx = np.concatenate([s.alpha_idx for s in sides]) if sides else np.zeros(0, dtype=int)
        for s in sides:
            K = Ks[s.itf]
            WK = _block3(K, s.wq)
            WKB = (WK @ s.trace).tocsr()
            R = R + s.trace.T @ WKB
            if s.phi is not None:
                WKphi = WK @ s.phi
                Z_cols.append(s.trace.T @ WKphi)
                PKP.append(s.phi.T @ WKphi)
            if s.constrained:
                G_rows.append((s.trace.T @ (s.wq[:, None] * s.phi_c)).T)
        na = len(alpha_idx)
        Z = np.hstack(Z_cols) if Z_cols else np.zeros((ndof, 0))
        G = np.vstack(G_rows) if G_rows else np.zeros((0, ndof))
        PKPm = sla.block_diag(*PKP) if PKP else np.zeros((0, 0))
        # selection of alpha by constraint rows
        Sc = np.zeros((G.shape[0], na))
        row = 0
        pos = {int(a): j for j, a in enumerate(alpha_idx)}
        for s in sides:
            if s.constrained:
                for r, a in enumerate(s.c_alpha):
                    if a >= 0:
                        Sc[row + r, pos[int(a)]] = 1.0
                row += len(s.c_alpha)
        return R.tocsr(), Z, G, PKPm, Sc, alpha_idx

    def _tangent(self, sub: int, with_tangent: bool = True):
        s = self.dec.subs[sub]
        u = self.state.u[sub]
        if self.config.nonlinear:
            return internal_force_and_tangent(s.block, u, nonlinear=True, with_tangent=with_tangent)
        if sub not in self._K0:
            _, self._K0[sub] = internal_force_and_tangent(s.block, np.zeros(s.ndof), nonlinear=False)
        return self._K0[sub] @ u, self._K0[sub]

    def _rhs(self, sub: int, Ks: dict, r_int: np.ndarray) -> np.ndarray:
        """Newton right-hand side with alpha = 0 and nu = 0."""
        st = self.state
        cache = self._caches[sub]
        b = -r_int - cache.R @ st.u[sub]
        fext = self._external(sub)
        if fext is not None:
            b = b + fext
        for sd in self.sides[sub]:
            K = Ks[sd.itf]
            b = b + sd.trace.T @ (sd.wq * (st.Fhat[sd.itf][sd.k] + _bmv(K, st.What[sd.itf][sd.k])).ravel())
        return b

    def _residual(self, sub: int, Ks: dict) -> float:
        """Relative equilibrium residual of a substructure at the current u."""
        r_int, _ = self._tangent(sub, with_tangent=False)
        b = self._rhs(sub, Ks, r_int)
        Ru = self._caches[sub].R @ self.state.u[sub]
        scale = np.linalg.norm(r_int) + np.linalg.norm(Ru) + np.linalg.norm(b + r_int + Ru)
        return float(np.linalg.norm(b + self._macro_force_term(sub, Ks)) / max(scale, 1e-300))

    def _sub_newton_setup(self, sub: int, Ks: dict):
        """Factorise A = K_t + Robin and condense onto the macro unknowns."""
        cfg = self.config
        cache = self._caches[sub]
        s = self.dec.subs[sub]
        u = self.state.u[sub]
        version = self._version(sub)
        r_int, Kt = self._tangent(sub)
        reuse = (not cfg.nonlinear) and cache.version == version and cache.lu is not None
        if not reuse:
            if cache.lu is not None:
                self.counters["invalidations"] += 1
            R, Z, G, PKP, Sc, aidx = self._sub_operators(sub, Ks)
            A = (Kt + R).tocsc()
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
            self.counters["factorizations"] += 1
            XZ = lu.solve(Z) if Z.shape[1] else np.zeros((s.ndof, 0))
            XG = lu.solve(np.ascontiguousarray(G.T)) if G.shape[0] else np.zeros((s.ndof, 0))
            if G.shape[0]:
                S = G @ XG
                # indefinite once the tangent softens past a bifurcation: LU, not Cholesky
                Sfac = sla.lu_factor(0.5 * (S + S.T))
                N = sla.lu_solve(Sfac, Sc - G @ XZ)
                D = XZ + XG @ N
                L = PKP - Z.T @ D + Sc.T @ N
            else:
                Sfac, N, D = None, np.zeros((0, Z.shape[1])), XZ
                L = PKP - Z.T @ XZ
            cache.version, cache.lu, cache.XZ, cache.XG = version, lu, XZ, XG
            cache.Sfac, cache.N, cache.D, cache.L, cache.R = Sfac, N, D, 0.5 * (L + L.T), R
            cache.Z, cache.G, cache.Sc, cache.aidx = Z, G, Sc, aidx
        st = self.state
        b = self._rhs(sub, Ks, r_int)
        Ft_parts, c_parts = [], []
        for sd in self.sides[sub]:
            K = Ks[sd.itf]
            Wh = st.What[sd.itf][sd.k]
            Fh = st.Fhat[sd.itf][sd.k]
            Bu = (sd.trace @ u).reshape(-1, 3)
            if sd.phi is not None:
                Ft_parts.append(sd.phi.T @ (sd.wq * (Fh - _bmv(K, Bu - Wh)).ravel()))
            if sd.constrained:
                c_parts.append(sd.phi_c.T @ (sd.wq * (Wh - Bu).ravel()))
        xb = cache.lu.solve(b)
        if cache.G.shape[0]:
            c = np.concatenate(c_parts)
            nu0 = sla.lu_solve(cache.Sfac, c - cache.G @ xb)
            du0 = xb + cache.XG @ nu0
        else:
            nu0 = np.zeros(0)
            du0 = xb
        Ft = np.concatenate(Ft_parts) if Ft_parts else np.zeros(0)
        Ft = Ft - cache.Z.T @ du0 + cache.Sc.T @ nu0
        return dict(du0=du0, nu0=nu0, Ft=Ft)

    def _macro_force_term(self, sub, Ks):
        """Interface force contribution of the current alpha / nu (for residual checks)."""
        alpha = getattr(self, "_alpha", None)
        nu = getattr(self, "_nu", {}).get(sub)
        ndof = self.dec.subs[sub].ndof
        out = np.zeros(ndof)
        if alpha is None:
            return out
        row = 0
        for sd in self.sides[sub]:
            if sd.phi is not None and len(sd.alpha_idx):
                K = Ks[sd.itf]
                v = _bmv(K, (sd.phi @ alpha[sd.alpha_idx]).reshape(-1, 3)).ravel()
                out += sd.trace.T @ (sd.wq * v)
            if sd.constrained and nu is not None:
                m = sd.phi_c.shape[1]
                out += sd.trace.T @ (sd.wq * (sd.phi_c @ nu[row:row + m]))
                row += m
        return out

    def _map(self, fn, items):
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    def admissibility_stage(self) -> tuple[int, int]:
        """Newton iterations on all substructures coupled by the macro problem.

        Returns ``(newton_iterations, macro_solves)``.
        """
        cfg = self.config
        Ks = {itf.id: self._side_K(itf.id) for itf in self.itfs}
        nsub = len(self.dec.subs)
        self._alpha = None
        self._nu = {}
        newton = 0
        macro_solves = 0
        for it in range(cfg.max_newton if cfg.nonlinear else 1):
            try:
                if it > 0:
                    rel = max(self._map(lambda s: self._residual(s, Ks), range(nsub)))
                    if not np.isfinite(rel):
                        raise StepFailure("Newton residual is not finite")
                    if rel < cfg.newton_tol:
                        break
                res = self._map(lambda s: self._sub_newton_setup(s, Ks), range(nsub))
            except InvertedElementError as exc:
                raise StepFailure(str(exc)) from exc
            alpha = self._solve_macro(res)
            macro_solves += 1
            newton += 1
            self._recover(res, alpha, Ks)
        return newton, macro_solves

    def _solve_macro(self, res) -> np.ndarray:
        n = self.n_macro
        if n == 0:
            return np.zeros(0)
        rhs = np.zeros(n)
        for itf in self.itfs:
            if itf.is_boundary and len(self.alpha_of[itf.id]):
                bc = self.bc_of[itf.id]
                Fd = np.broadcast_to(self.factor * np.asarray(bc.values, dtype=float), (itf.ngp, 3))
                b = self.basis[itf.id]
                rhs[self.alpha_of[itf.id]] += b.coefficients(Fd.ravel())
        for sub, r in enumerate(res):
            aidx = self._caches[sub].aidx
            np.add.at(rhs, aidx, -r["Ft"])
        versions = tuple(self._version(s) for s in range(len(self.dec.subs)))
        if self.config.nonlinear or self._macro_cache is None or self._macro_cache[0] != versions:
            rows, cols, vals = [], [], []
            for sub in range(len(self.dec.subs)):
                c = self._caches[sub]
                if len(c.aidx):
                    rows.append(np.repeat(c.aidx, len(c.aidx)))
                    cols.append(np.tile(c.aidx, len(c.aidx)))
                    vals.append(c.L.ravel())
            L = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
            try:
                lu = spla.splu(L)
            except RuntimeError as exc:
                raise ConfigurationError(f"macro problem is singular ({exc}); "
                                         "missing boundary or continuity constraints") from exc
            diag_u = np.abs(lu.U.diagonal())
            if diag_u.min() <= 1e-13 * diag_u.max():
                raise ConfigurationError("macro problem is singular; missing boundary or continuity constraints")
            self.counters["macro_factorizations"] += 1
            self._macro_cache = (versions, lu, L)
        alpha = self._macro_cache[1].solve(rhs)
        self.counters["macro_solves"] += 1
        return alpha

    def _recover(self, res, alpha, Ks):
        st = self.state
        self._alpha = alpha
        for sub, r in enumerate(res):
            c = self._caches[sub]
            a = alpha[c.aidx]
            du = r["du0"] + c.D @ a
            nu = r["nu0"] + c.N @ a if c.G.shape[0] else np.zeros(0)
            self._nu[sub] = nu
            st.u[sub] = st.u[sub] + du
            u = st.u[sub]
            row = 0
            for sd in self.sides[sub]:
                K = Ks[sd.itf]
                W = (sd.trace @ u).reshape(-1, 3)
                F = st.Fhat[sd.itf][sd.k] - _bmv(K, W - st.What[sd.itf][sd.k])
                if sd.phi is not None and len(sd.alpha_idx):
                    F = F + _bmv(K, (sd.phi @ alpha[sd.alpha_idx]).reshape(-1, 3))
                if sd.constrained:
                    m = sd.phi_c.shape[1]
                    F = F + (sd.phi_c @ nu[row:row + m]).reshape(-1, 3)
                    row += m
                st.W[sd.itf][sd.k] = W
                st.F[sd.itf][sd.k] = F

    # ------------------------------------------------------------------
    # diagnostics
    # ------------------------------------------------------------------
    def error(self) -> float:
        st = self.state

        def pairs():
            for itf in self.itfs:
                kb = self.kbar[itf.id]
                for k in range(len(itf.sides)):
                    yield st.W[itf.id][k], st.F[itf.id][k], st.What[itf.id][k], st.Fhat[itf.id][k], itf.weights, kb
        return latin_error(pairs())

    def macro_force_jump(self) -> float:
        """max over interior interfaces of |P_M(F_E + F_E')| / |P_M F_E|."""
        worst = 0.0
        for itf in self.itfs:
            if itf.is_boundary:
                continue
            b = self.full_basis.get(itf.id) or build_macro_basis(itf)
            F = self.state.F[itf.id]
            s = b.coefficients((F[0] + F[1]).ravel())
            ref = np.linalg.norm(b.coefficients(F[0].ravel()))
            if ref > 0:
                worst = max(worst, np.linalg.norm(s) / ref)
        return worst

    def macro_displacement_jump(self) -> float:
        worst = 0.0
        for itf in self.itfs:
            if itf.is_boundary or not self.constrained[itf.id]:
                continue
            b = self.full_basis[itf.id]
            W = self.state.W[itf.id]
            j = np.linalg.norm(b.coefficients((W[1] - W[0]).ravel()))
            ref = max(np.linalg.norm(b.coefficients(W[0].ravel())), 1e-300)
            worst = max(worst, j / ref)
        return worst

    # ------------------------------------------------------------------
    # iteration and stepping
    # ------------------------------------------------------------------
    def iterate(self, first: bool) -> tuple[float, int, int]:
        """One LATIN iteration; returns (eta, newton iterations, macro solves)."""
        cfg = self.config
        prev = self.state.copy() if not first and cfg.mu < 1 else None
        self._update_frames()
        try:
            self.local_stage()
        except InterfaceSolveError as exc:
            raise StepFailure(str(exc)) from exc
        if self._contact_policies(self.global_iteration + 1):
            # the admissible fields are rebuilt with the new operators; relaxing
            # towards the old ones would reintroduce the stale contact forces
            prev = None
        newton, macro = self.admissibility_stage()
        if prev is not None:
            st = self.state
            for i in range(len(st.W)):
                st.W[i] = relax(prev.W[i], st.W[i], cfg.mu)
                st.F[i] = relax(prev.F[i], st.F[i], cfg.mu)
            for s in range(len(st.u)):
                st.u[s] = relax(prev.u[s], st.u[s], cfg.mu)
        eta = self.error()
        self.global_iteration += 1
        self._apply_policies()
        return eta, newton, macro

    def _contact_policies(self, it: int) -> bool:
        """Contact status refresh (contact interfaces and broken cohesive points)
        from the local-stage gaps, before the admissibility stage."""
        changed = False
        gaps, broken = {}, {}
        for itf in self.itfs:
            if itf.behavior == "cohesive":
                b = self.trial_damage[itf.id].d >= 1.0
                if not b.any():
                    continue
                broken[itf.id] = b
            elif itf.behavior != "contact":
                continue
            Wh = self.state.What[itf.id]
            gaps[itf.id] = np.sum((Wh[1] - Wh[0]) * self._frames[itf.id][1], axis=1)
        if not gaps:
            return False
        scale = max(float(np.max(g[broken[i]] if i in broken else g)) for i, g in gaps.items())
        for i, gap in gaps.items():
            itf, sd = self.itfs[i], self.directions[i]
            if i in broken:
                hit = self.policy.broken_update(itf, sd, it, gap, broken[i], scale)
            else:
                hit = self.policy.contact_update(itf, sd, it, gap, scale)
            changed |= bool(hit)
        return changed

    def _apply_policies(self):
        it = self.global_iteration
        for itf in self.itfs:
            if itf.behavior == "cohesive":
                self.policy.cohesive_update(itf, self.directions[itf.id], it, self.trial_damage[itf.id])

    def _snapshot(self):
        return (self.state.copy(), {k: v.copy() for k, v in self.damage.items()},
                copy.deepcopy(self.directions), self.factor)

    def _restore(self, snap):
        self.state = snap[0].copy()
        self.damage = {k: v.copy() for k, v in snap[1].items()}
        self.trial_damage = {k: v.copy() for k, v in self.damage.items()}
        self.directions = copy.deepcopy(snap[2])
        self.factor = snap[3]
        self._caches = [_SubCache() for _ in self.dec.subs]
        self._macro_cache = None

    def _solve_increment(self, factor: float, step: int, records: list) -> bool:
        cfg = self.config
        self.factor = factor
        for n in range(cfg.max_iterations):
            t0 = time.perf_counter()
            eta, newton, macro = self.iterate(first=(n == 0))
            records.append(IterationRecord(step, n + 1, eta, newton, macro, time.perf_counter() - t0))
            if not np.isfinite(eta) or eta > cfg.divergence_eta:
                raise StepFailure(f"LATIN error diverged (eta={eta:.3e})")
            if eta < cfg.eta_tol:
                self.damage = {k: v.copy() for k, v in self.trial_damage.items()}
                return True
        return False

    def _advance(self, target: float, step: int, records: list, depth: int) -> tuple[bool, int]:
        """Reach ``target`` from the current factor, halving the increment on failure."""
        start = self.factor
        snap = self._snapshot()
        reason = f"eta did not drop below {self.config.eta_tol:g} within {self.config.max_iterations} iterations"
        try:
            if self._solve_increment(target, step, records):
                return True, 0
        except StepFailure as exc:
            reason = str(exc)
        self._failure = reason
        if depth >= self.config.max_bisections:
            log.info("step %d: %s", step, reason)
            return False, 0
        log.info("step %d: %s; bisecting increment %.4g -> %.4g", step, reason, start, target)
        self._restore(snap)
        mid = 0.5 * (start + target)
        ok, n1 = self._advance(mid, step, records, depth + 1)
        if not ok:
            return False, n1 + 1
        ok, n2 = self._advance(target, step, records, depth + 1)
        return ok, n1 + n2 + 1

    def run_step(self, factor: float) -> StepResult:
        """Advance the load factor to ``factor``.

        On failure the state is rolled back to the start of the step.
        """
        self.step_index += 1
        step = self.step_index
        t0 = time.perf_counter()
        records: list[IterationRecord] = []
        snap = self._snapshot()
        self._failure = None
        ok, bisections = self._advance(factor, step, records, 0)
        if not ok:
            self._restore(snap)
        return StepResult(step, factor, ok, len(records), records, time.perf_counter() - t0, bisections,
                          None if ok else self._failure)

    # ------------------------------------------------------------------
    # measurements
    # ------------------------------------------------------------------
    def boundary_force(self, facet_set: str) -> np.ndarray:
        """Resultant interface force exerted on the structure over a facet set."""
        tot = np.zeros(3)
        for itf in self.dec.boundary(facet_set):
            tot += itf.weights @ self.state.F[itf.id][0]
        return tot

    def dissipated(self) -> float:
        if self.problem.cohesive is None:
            return 0.0
        total = 0.0
        for itf in self.itfs:
            if itf.behavior != "cohesive":
                continue
            d = self.damage[itf.id].d
            pre = itf.precracked if itf.precracked is not None else np.zeros(itf.ngp, bool)
            total += float(itf.weights[~pre] @ dissipated_energy(d[~pre], self.problem.cohesive))
        return total

    def contact_state(self, admissible: bool = True) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """(normal gap, normal force on side 0) per contact interface.

        ``admissible`` selects the admissible fields (W, F); otherwise the
        local-stage fields are used, which satisfy the contact law exactly.
        """
        st = self.state
        W, F = (st.W, st.F) if admissible else (st.What, st.Fhat)
        out = {}
        for itf in self.itfs:
            if itf.behavior != "contact":
                continue
            n3 = self._frames[itf.id][1] if itf.id in self._frames else itf.normals()
            w = W[itf.id]
            out[itf.id] = (np.sum((w[1] - w[0]) * n3, axis=1), np.sum(F[itf.id][0] * n3, axis=1))
        return out

    def broken_area(self) -> float:
        """Delaminated reference area: fully damaged cohesive points plus unbonded (contact) ply interfaces."""
        area = 0.0
        for itf in self.itfs:
            if itf.behavior == "cohesive":
                area += itf.weights @ (self.damage[itf.id].d >= 1.0)
            elif itf.behavior == "contact" and itf.ply_boundary is not None:
                area += itf.weights.sum()
        return float(area)

    def node_displacements(self) -> np.ndarray:
        mesh = self.dec.mesh
        out = np.zeros((len(mesh.nodes), 3))
        for s in self.dec.subs:
            out[s.nodes] = self.state.u[s.id].reshape(-1, 3)
        return out
