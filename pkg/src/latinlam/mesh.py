"""Structured laminate meshes, ply-respecting partitions and interface data.

Everything here is built once and then treated as read-only by the solver.
Meshes are axis-aligned boxes: X1 along the length, X2 across the width and
X3 through the thickness, with plies stacked along X3.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .kernels import ElementBlock, Material, quad_reference

AXES = ("x", "y", "z")
FACET_SETS = ("x0", "x1", "y0", "y1", "z0", "z1")
BEHAVIORS = ("perfect", "cohesive", "contact", "boundary")


class MeshError(ValueError):
    """Rejected geometry, crack or partition input."""


def _on_grid(values, grid, tol):
    idx = np.searchsorted(grid, np.asarray(values) - tol)
    idx = np.clip(idx, 0, len(grid) - 1)
    ok = np.abs(grid[idx] - values) <= tol
    return idx, ok


@dataclass(frozen=True)
class CrackSpec:
    """Initial delamination on the ply-ply plane at height ``z``.

    ``behavior`` is ``"contact"`` (frictionless contact) or ``"cohesive"``
    (cohesive law starting fully damaged).  ``y_range=None`` means through
    the width.
    """

    z: float
    x_range: tuple[float, float]
    y_range: tuple[float, float] | None = None
    behavior: str = "contact"

    @classmethod
    def centered(cls, z: float, length: float, a0: float, behavior: str = "contact") -> "CrackSpec":
        return cls(z=z, x_range=(0.5 * (length - a0), 0.5 * (length + a0)), behavior=behavior)


@dataclass
class ReferenceMesh:
    length: float
    width: float
    ply_thicknesses: tuple[float, ...]
    order: int
    x_edges: np.ndarray
    y_edges: np.ndarray
    z_edges: np.ndarray
    nodes: np.ndarray
    elements: np.ndarray
    ply_id: np.ndarray
    ply_z_index: np.ndarray          # element-layer index of each ply boundary
    crack_masks: dict = field(default_factory=dict)   # ply boundary -> (nx, ny) array of codes
    cracks: tuple = ()

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.x_edges) - 1, len(self.y_edges) - 1, len(self.z_edges) - 1

    @property
    def node_shape(self) -> tuple[int, int, int]:
        nx, ny, nz = self.shape
        p = self.order
        return p * nx + 1, p * ny + 1, p * nz + 1

    @property
    def thickness(self) -> float:
        return float(sum(self.ply_thicknesses))

    def element_id(self, ex, ey, ez):
        nx, ny, nz = self.shape
        return (np.asarray(ex) * ny + np.asarray(ey)) * nz + np.asarray(ez)

    def node_id(self, i, j, k):
        _, Ny, Nz = self.node_shape
        return (np.asarray(i) * Ny + np.asarray(j)) * Nz + np.asarray(k)

    def element_jacobians(self) -> np.ndarray:
        dx = np.diff(self.x_edges)
        dy = np.diff(self.y_edges)
        dz = np.diff(self.z_edges)
        return (dx[:, None, None] * dy[None, :, None] * dz[None, None, :]).ravel() / 8.0

    def facet_set(self, name: str) -> np.ndarray:
        """Element ids having a face on the named outer boundary."""
        if name not in FACET_SETS:
            raise MeshError(f"unknown facet set {name!r}")
        nx, ny, nz = self.shape
        ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        axis = AXES.index(name[0])
        last = (nx, ny, nz)[axis] - 1
        sel = (ex, ey, ez)[axis] == (0 if name[1] == "0" else last)
        return np.sort(self.element_id(ex[sel], ey[sel], ez[sel]))


def generate_laminate_mesh(length: float, width: float, ply_thicknesses: Sequence[float],
                           elements: Sequence[int], cracks: Sequence[CrackSpec] = (),
                           order: int = 1) -> ReferenceMesh:
    """Build a structured hex mesh of a laminate.

    ``elements = (nx, ny, nz)`` with ``nz`` the total count through the
    thickness, divided equally among plies.
    """
    plies = tuple(float(t) for t in ply_thicknesses)
    if not (length > 0 and width > 0) or not plies or min(plies) <= 0:
        raise MeshError("all dimensions must be > 0")
    if not np.all(np.isfinite([length, width, *plies])):
        raise MeshError("dimensions must be finite")
    nx, ny, nz = (int(n) for n in elements)
    if min(nx, ny, nz) < 1:
        raise MeshError("element counts must be >= 1")
    if nz % len(plies):
        raise MeshError(f"{nz} elements through the thickness cannot be split equally among {len(plies)} plies")
    if order not in (1, 2):
        raise MeshError("element order must be 1 or 2")
    per_ply = nz // len(plies)
    x_edges = np.linspace(0.0, length, nx + 1)
    y_edges = np.linspace(0.0, width, ny + 1)
    ply_tops = np.concatenate([[0.0], np.cumsum(plies)])
    z_edges = np.concatenate([np.linspace(ply_tops[i], ply_tops[i + 1], per_ply + 1)[:-1]
                              for i in range(len(plies))] + [[ply_tops[-1]]])
    p = order

    def refine(e):
        pts = [np.linspace(e[i], e[i + 1], p + 1)[:-1] for i in range(len(e) - 1)]
        return np.concatenate(pts + [[e[-1]]])

    xs, ys, zs = refine(x_edges), refine(y_edges), refine(z_edges)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    Ny, Nz = len(ys), len(zs)
    m = p + 1
    a = np.arange(m)
    la, lb, lc = np.meshgrid(a, a, a, indexing="ij")
    # local order a + m*b + m*m*c
    la, lb, lc = (arr.transpose(2, 1, 0).ravel() for arr in (la, lb, lc))
    ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ex, ey, ez = ex.ravel(), ey.ravel(), ez.ravel()
    I = p * ex[:, None] + la[None, :]
    J = p * ey[:, None] + lb[None, :]
    K = p * ez[:, None] + lc[None, :]
    conn = (I * Ny + J) * Nz + K
    ply_id = ez // per_ply

    mesh = ReferenceMesh(length=float(length), width=float(width), ply_thicknesses=plies, order=p,
                         x_edges=x_edges, y_edges=y_edges, z_edges=z_edges, nodes=nodes,
                         elements=conn, ply_id=ply_id,
                         ply_z_index=np.arange(1, len(plies)) * per_ply, cracks=tuple(cracks))
    for crack in cracks:
        _tag_crack(mesh, crack)
    return mesh


CRACK_CODES = {"contact": 1, "cohesive": 2}


def _tag_crack(mesh: ReferenceMesh, crack: CrackSpec) -> None:
    if crack.behavior not in CRACK_CODES:
        raise MeshError(f"crack behavior must be 'contact' or 'cohesive', got {crack.behavior!r}")
    tol = 1e-9 * max(mesh.length, mesh.thickness)
    ply_tops = np.cumsum(mesh.ply_thicknesses)[:-1]
    hit = np.flatnonzero(np.abs(ply_tops - crack.z) <= tol)
    if not hit.size:
        raise MeshError(f"crack plane z={crack.z} is not a ply-ply interface")
    boundary = int(hit[0])
    x0, x1 = crack.x_range
    y0, y1 = crack.y_range if crack.y_range is not None else (0.0, mesh.width)
    if not (0 <= x0 < x1 <= mesh.length + tol and 0 <= y0 < y1 <= mesh.width + tol):
        raise MeshError("crack rectangle must lie inside the plate and have positive extent")
    (ix, okx) = _on_grid(np.array([x0, x1]), mesh.x_edges, tol)
    (iy, oky) = _on_grid(np.array([y0, y1]), mesh.y_edges, tol)
    if not (okx.all() and oky.all()):
        raise MeshError("crack edges must coincide with element boundaries")
    nx, ny, _ = mesh.shape
    mask = mesh.crack_masks.setdefault(boundary, np.zeros((nx, ny), dtype=np.int8))
    mask[ix[0]:ix[1], iy[0]:iy[1]] = CRACK_CODES[crack.behavior]


# ---------------------------------------------------------------------------
# Partition
# ---------------------------------------------------------------------------

@dataclass
class Substructure:
    id: int
    ranges: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    ply: int
    elements: np.ndarray
    nodes: np.ndarray              # global node ids, local order
    block: ElementBlock
    _node_origin: tuple = field(default=(0, 0, 0), repr=False)
    _node_shape: tuple = field(default=(0, 0, 0), repr=False)

    @property
    def ndof(self) -> int:
        return 3 * len(self.nodes)

    @property
    def node_shape(self) -> tuple[int, int, int]:
        return self._node_shape

    def local_node(self, i, j, k):
        """Local node id from global node-grid indices."""
        (i0, j0, k0), (_, ny, nz) = self._node_origin, self._node_shape
        return ((np.asarray(i) - i0) * ny + (np.asarray(j) - j0)) * nz + (np.asarray(k) - k0)


@dataclass
class InterfaceSide:
    sub: int
    trace: sp.csr_matrix           # (3*ng, ndof_sub): W = trace @ u


@dataclass
class InterfaceGeometry:
    """Matched Gauss points of one interface (or a boundary patch).

    Gauss-point vectors are stored flat with index ``3*g + c``.  ``normal``
    points from side 0 towards side 1 (from ``sides[0]`` into the outside
    for boundary patches).
    """

    id: int
    behavior: str
    sides: list[InterfaceSide]
    axis: int
    facet_set: str | None
    points: np.ndarray             # (ng, 3) reference coordinates
    weights: np.ndarray            # (ng,) reference area weights
    normal: np.ndarray             # (3,) N3
    tangents: np.ndarray           # (2, 3) T1, T2 (in-plane reference axes)
    d_t1: sp.csr_matrix            # surface derivative along T1 of GP fields
    d_t2: sp.csr_matrix
    length: float                  # characteristic length L_Gamma
    ply_boundary: int | None = None
    precracked: np.ndarray | None = None   # (ng,) bool

    @property
    def ngp(self) -> int:
        return len(self.weights)

    @property
    def is_boundary(self) -> bool:
        return len(self.sides) == 1

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def subs(self) -> tuple[int, ...]:
        return tuple(s.sub for s in self.sides)

    def normals(self) -> np.ndarray:
        return np.broadcast_to(self.normal, (self.ngp, 3))


@dataclass
class Decomposition:
    mesh: ReferenceMesh
    subs: list[Substructure]
    interfaces: list[InterfaceGeometry]
    cuts: tuple[np.ndarray, np.ndarray, np.ndarray]

    def interior(self) -> list[InterfaceGeometry]:
        return [i for i in self.interfaces if not i.is_boundary]

    def boundary(self, name: str | None = None) -> list[InterfaceGeometry]:
        return [i for i in self.interfaces if i.is_boundary and (name is None or i.facet_set == name)]

    def sub_interfaces(self, sub: int) -> list[tuple[int, int]]:
        """(interface id, side index) pairs touching a substructure, in id order."""
        out = []
        for itf in self.interfaces:
            for k, side in enumerate(itf.sides):
                if side.sub == sub:
                    out.append((itf.id, k))
        return out

    def audit(self) -> None:
        """Raise MeshError if the partition or interface topology is inconsistent."""
        ne = len(self.mesh.elements)
        counts = np.zeros(ne, dtype=int)
        for s in self.subs:
            counts[s.elements] += 1
            if np.unique(self.mesh.ply_id[s.elements]).size != 1:
                raise MeshError(f"substructure {s.id} spans a ply interface")
        if not np.all(counts == 1):
            raise MeshError("substructures do not partition the element set")
        for itf in self.interior():
            a, b = itf.sides
            Xa = itf.sides[0].trace @ self.subs[a.sub].block.coords.ravel()
            Xb = itf.sides[1].trace @ self.subs[b.sub].block.coords.ravel()
            if not (np.allclose(Xa, itf.points.ravel(), atol=1e-9) and np.allclose(Xb, Xa, atol=1e-9)):
                raise MeshError(f"interface {itf.id}: facet pairing is not coincident")
        # every interior block face belongs to exactly one interface
        nx, ny, nz = (len(c) - 1 for c in self.cuts)
        expected = (nx - 1) * ny * nz + nx * (ny - 1) * nz + nx * ny * (nz - 1)
        if len(self.interior()) != expected:
            raise MeshError("interior interface count does not match the block grid")


def _resolve_cuts(spec, edges, tol, name) -> np.ndarray:
    """Block boundaries as element-edge indices along one direction."""
    n = len(edges) - 1
    if spec is None:
        spec = 1
    if np.isscalar(spec):
        count = int(spec)
        if count < 1 or count > n:
            raise MeshError(f"{name}: number of substructures must be in [1, {n}]")
        sizes = [len(c) for c in np.array_split(np.arange(n), count)]
        return np.concatenate([[0], np.cumsum(sizes)])
    coords = np.asarray(spec, dtype=float)
    idx, ok = _on_grid(coords, edges, tol)
    if not ok.all():
        raise MeshError(f"{name}: cut plane at {coords[~ok][0]} intersects elements")
    return np.unique(np.concatenate([[0, n], idx]))


def partition(mesh: ReferenceMesh, cuts_per_direction, materials: Sequence[Material] | Material,
              boundary_sets: Sequence[str] = (), ply_behavior: str = "perfect") -> Decomposition:
    """Split a mesh into a tensor grid of ply-respecting substructures.

    ``cuts_per_direction = (cx, cy, cz)``: each entry is a substructure count
    (elements split as evenly as possible) or an explicit list of interior
    cut coordinates, which must lie on element boundaries.  Ply boundaries are
    always cuts; ``cz`` further subdivides each ply.  ``materials`` gives one
    material per ply (or one for all).  ``boundary_sets`` lists outer facet
    sets that receive boundary interfaces; a suffix such as ``"x0:p1"``
    restricts the set to the faces of one ply.
    """
    if ply_behavior not in ("perfect", "cohesive", "contact"):
        raise MeshError(f"unknown ply interface behavior {ply_behavior!r}")
    nply = len(mesh.ply_thicknesses)
    mats = list(materials) if isinstance(materials, (list, tuple)) else [materials] * nply
    if len(mats) != nply:
        raise MeshError(f"expected {nply} materials, got {len(mats)}")
    tol = 1e-9 * max(mesh.length, mesh.thickness)
    cx, cy, cz = (list(cuts_per_direction) + [None, None, None])[:3]
    bx = _resolve_cuts(cx, mesh.x_edges, tol, "x")
    by = _resolve_cuts(cy, mesh.y_edges, tol, "y")
    per_ply = mesh.shape[2] // nply
    ply_edges = np.arange(nply + 1) * per_ply
    if cz is None or np.isscalar(cz):
        count = int(cz or 1)
        if count < 1 or count > per_ply:
            raise MeshError(f"z: number of substructures per ply must be in [1, {per_ply}]")
        sizes = [len(c) for c in np.array_split(np.arange(per_ply), count)]
        within = np.concatenate([[0], np.cumsum(sizes)])
        bz = np.unique(np.concatenate([e + within for e in ply_edges[:-1]] + [[ply_edges[-1]]]))
    else:
        bz = _resolve_cuts(cz, mesh.z_edges, tol, "z")
        bz = np.unique(np.concatenate([bz, ply_edges]))
    parsed_sets = [_parse_boundary_set(name, nply) for name in boundary_sets]

    p = mesh.order
    subs: list[Substructure] = []
    grid_id = -np.ones((len(bx) - 1, len(by) - 1, len(bz) - 1), dtype=int)
    for ix in range(len(bx) - 1):
        for iy in range(len(by) - 1):
            for iz in range(len(bz) - 1):
                r = ((bx[ix], bx[ix + 1]), (by[iy], by[iy + 1]), (bz[iz], bz[iz + 1]))
                ex, ey, ez = np.meshgrid(np.arange(*r[0]), np.arange(*r[1]), np.arange(*r[2]), indexing="ij")
                elems = mesh.element_id(ex.ravel(), ey.ravel(), ez.ravel())
                ply = int(mesh.ply_id[elems[0]])
                gi, gj, gk = (np.arange(p * a, p * b + 1) for a, b in r)
                I, J, K = np.meshgrid(gi, gj, gk, indexing="ij")
                gnodes = mesh.node_id(I.ravel(), J.ravel(), K.ravel())
                shape = (len(gi), len(gj), len(gk))
                lookup = np.full(len(mesh.nodes), -1, dtype=np.int64)
                lookup[gnodes] = np.arange(len(gnodes))
                conn = lookup[mesh.elements[elems]]
                block = ElementBlock(mesh.nodes[gnodes], conn, p, mats[ply])
                s = Substructure(id=len(subs), ranges=r, ply=ply, elements=elems, nodes=gnodes, block=block,
                                 _node_origin=(gi[0], gj[0], gk[0]), _node_shape=shape)
                grid_id[ix, iy, iz] = s.id
                subs.append(s)

    edges = (mesh.x_edges, mesh.y_edges, mesh.z_edges)
    interfaces: list[InterfaceGeometry] = []

    def face(sub: Substructure, axis: int, upper: bool):
        return _face_data(mesh, sub, axis, upper, edges)

    for axis in range(3):
        shape = grid_id.shape
        for idx in np.ndindex(*shape):
            if idx[axis] + 1 >= shape[axis]:
                continue
            nb = list(idx)
            nb[axis] += 1
            lo, hi = subs[grid_id[idx]], subs[grid_id[tuple(nb)]]
            fa = face(lo, axis, True)
            fb = face(hi, axis, False)
            behavior, ply_b, pre = "perfect", None, None
            if axis == 2 and lo.ply != hi.ply:
                ply_b = lo.ply
                behavior, pre = _ply_interface_behavior(mesh, ply_b, lo.ranges, ply_behavior, fa["n_per_facet"])
            interfaces.append(_make_interface(len(interfaces), behavior, [(lo.id, fa), (hi.id, fb)],
                                              axis, None, ply_b, pre))
    for name, base, ply_only in parsed_sets:
        axis = AXES.index(base[0])
        upper = base[1] == "1"
        for s in subs:
            lim = s.ranges[axis][1] if upper else s.ranges[axis][0]
            if lim != (mesh.shape[axis] if upper else 0):
                continue
            if ply_only is not None and s.ply != ply_only:
                continue
            f = face(s, axis, upper)
            interfaces.append(_make_interface(len(interfaces), "boundary", [(s.id, f)], axis, name, None, None,
                                              flip=not upper))
    return Decomposition(mesh=mesh, subs=subs, interfaces=interfaces, cuts=(bx, by, bz))


def _parse_boundary_set(name: str, nply: int):
    """``"x0"`` or a ply-restricted ``"x0:p1"`` -> (name, facet set, ply or None)."""
    base, _, qual = name.partition(":")
    if base not in FACET_SETS:
        raise MeshError(f"unknown facet set {name!r}")
    if not qual:
        return name, base, None
    if not (qual.startswith("p") and qual[1:].isdigit() and int(qual[1:]) < nply):
        raise MeshError(f"bad ply qualifier in facet set {name!r}")
    return name, base, int(qual[1:])


def _ply_interface_behavior(mesh, ply_b, ranges, ply_behavior, n_per_facet):
    mask = mesh.crack_masks.get(ply_b)
    (x0, x1), (y0, y1), _ = ranges
    local = mask[x0:x1, y0:y1] if mask is not None else np.zeros((x1 - x0, y1 - y0), dtype=np.int8)
    cracked = local > 0
    pre = np.repeat(cracked.ravel(), n_per_facet)
    codes = np.unique(local[cracked]).tolist()
    if cracked.all() and codes == [CRACK_CODES["contact"]]:
        return "contact", pre
    if ply_behavior == "cohesive":
        # bonded facets, cohesive cracks and partial contact cracks are damage states
        return "cohesive", pre
    if not cracked.any():
        return ply_behavior, pre
    if cracked.all():
        return ("cohesive" if codes == [CRACK_CODES["cohesive"]] else "contact"), pre
    raise MeshError("a substructure interface mixes cracked and bonded facets; "
                    "align the x/y cuts with the crack front")


def _face_data(mesh: ReferenceMesh, sub: Substructure, axis: int, upper: bool, edges):
    """Trace operator, Gauss points and weights of one substructure face."""
    p = mesh.order
    m = p + 1
    Nf, dNf, wf = quad_reference(p)
    Vinv = np.linalg.inv(Nf)
    t_axes = [a for a in range(3) if a != axis]
    r = sub.ranges
    e_fixed = r[axis][1] if upper else r[axis][0]
    g_fixed = p * e_fixed
    rows, cols, vals = [], [], []
    pts, wts = [], []
    d1_blocks, d2_blocks = [], []
    ng = m * m
    gp_count = 0
    ra, rb = r[t_axes[0]], r[t_axes[1]]
    a_loc = np.arange(m)
    fa, fb = np.meshgrid(a_loc, a_loc, indexing="ij")
    fa, fb = fa.T.ravel(), fb.T.ravel()          # face local node order a + m*b
    for e1 in range(*ra):
        for e2 in range(*rb):
            h1 = edges[t_axes[0]][e1 + 1] - edges[t_axes[0]][e1]
            h2 = edges[t_axes[1]][e2 + 1] - edges[t_axes[1]][e2]
            gidx = [None, None, None]
            gidx[axis] = np.full(ng, g_fixed)
            gidx[t_axes[0]] = p * e1 + fa
            gidx[t_axes[1]] = p * e2 + fb
            lnodes = sub.local_node(*gidx)
            gnodes = mesh.node_id(*gidx)
            X = mesh.nodes[gnodes]
            pts.append(Nf @ X)
            wts.append(wf * h1 * h2 / 4.0)
            for c in range(3):
                r_idx = 3 * (gp_count + np.arange(ng))[:, None] + c
                rows.append(np.broadcast_to(r_idx, (ng, ng)).ravel())
                cols.append(np.broadcast_to(3 * lnodes[None, :] + c, (ng, ng)).ravel())
                vals.append(Nf.ravel())
            d1_blocks.append(dNf[:, :, 0] @ Vinv * (2.0 / h1))
            d2_blocks.append(dNf[:, :, 1] @ Vinv * (2.0 / h2))
            gp_count += ng
    trace = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(3 * gp_count, sub.ndof))
    trace.eliminate_zeros()
    return dict(trace=trace, points=np.vstack(pts), weights=np.concatenate(wts),
                d1=sp.block_diag(d1_blocks, format="csr"), d2=sp.block_diag(d2_blocks, format="csr"),
                t_axes=t_axes, n_per_facet=ng,
                extent=(edges[t_axes[0]][ra[1]] - edges[t_axes[0]][ra[0]],
                        edges[t_axes[1]][rb[1]] - edges[t_axes[1]][rb[0]]))


def _make_interface(iid, behavior, sides, axis, facet_set, ply_b, pre, flip=False):
    f0 = sides[0][1]
    normal = np.zeros(3)
    normal[axis] = -1.0 if flip else 1.0
    tangents = np.zeros((2, 3))
    tangents[0, f0["t_axes"][0]] = 1.0
    tangents[1, f0["t_axes"][1]] = 1.0
    pts = f0["points"]
    size = float(max(f0["extent"]))
    return InterfaceGeometry(
        id=iid, behavior=behavior,
        sides=[InterfaceSide(sub=s, trace=f["trace"]) for s, f in sides],
        axis=axis, facet_set=facet_set, points=pts, weights=f0["weights"], normal=normal,
        tangents=tangents, d_t1=f0["d1"], d_t2=f0["d2"], length=size, ply_boundary=ply_b,
        precracked=pre)



# ---------------------------------------------------------------------------
# Macro basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MacroBasis:
    """Orthonormal affine modes on one interface, shape (3*ng, nmodes)."""

    modes: np.ndarray
    weights: np.ndarray            # (3*ng,) quadrature weights repeated per component

    @property
    def count(self) -> int:
        return self.modes.shape[1]

    def project(self, f: np.ndarray) -> np.ndarray:
        return self.modes @ (self.modes.T @ (self.weights * f))

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        return self.modes.T @ (self.weights * f)


def build_macro_basis(itf: InterfaceGeometry, components: Sequence[int] = (0, 1, 2)) -> MacroBasis:
    """Affine macro modes {e_i, xi1 e_i, xi2 e_i} orthonormalised in L2(Gamma0).

    ``components`` restricts the modes to some displacement components (used
    on boundaries where only some components carry prescribed forces).
    """
    w = itf.weights
    area = w.sum()
    if not area > 0:
        raise MeshError(f"interface {itf.id} has zero area")
    centroid = (w @ itf.points) / area
    xi = (itf.points - centroid) @ itf.tangents.T        # (ng, 2)
    ng = itf.ngp
    W = np.repeat(w, 3)
    raw = []
    for shape in (np.ones(ng), xi[:, 0], xi[:, 1]):
        for c in components:
            v = np.zeros((ng, 3))
            v[:, c] = shape
            raw.append(v.ravel())
    modes = []
    for v in raw:
        q = v.copy()
        for _ in range(2):
            for b in modes:
                q -= b * (b @ (W * q))
        nrm = np.sqrt(q @ (W * q))
        if nrm <= 1e-12 * np.sqrt(v @ (W * v)):
            continue
        modes.append(q / nrm)
    return MacroBasis(modes=np.column_stack(modes), weights=W)
