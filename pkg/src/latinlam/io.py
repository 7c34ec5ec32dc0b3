"""Output writers: load curve CSV, convergence JSON lines, VTK snapshots, manifest.

Everything except ``timing.json`` is a deterministic function of the run, so
two identical runs give byte-identical files.  Each file carries the
configuration hash.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, dump_config

CURVE_HEADER = "step,load_N,disp_mm,crack_mm,dissipated_Nmm"
VTK_HEXAHEDRON = 12


class OutputError(OSError):
    """A file or directory could not be written; the message names the path."""


def _num(x: float) -> str:
    return format(float(x), ".12g")


def curve_csv(curve, digest: str) -> str:
    lines = [f"# config_sha256={digest}", CURVE_HEADER]
    for p in curve:
        lines.append(",".join([str(int(p.step)), _num(p.load), _num(p.displacement), _num(p.crack),
                               _num(p.dissipated)]))
    return "\n".join(lines) + "\n"


def read_curve(path) -> np.ndarray:
    """Curve rows as a float array of shape (n, 5)."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()[2:]
    return np.array([[float(v) for v in r.split(",")] for r in rows if r], dtype=float).reshape(-1, 5)


def convergence_jsonl(steps, digest: str) -> str:
    out = [json.dumps({"config_sha256": digest}, sort_keys=True)]
    for res in steps:
        for rec in res.records:
            out.append(json.dumps(rec.as_dict(with_time=False), sort_keys=True))
    return "\n".join(out) + "\n"


def vtk_unstructured(mesh, displacement: np.ndarray | None = None, title: str = "laminate") -> str:
    """Legacy ASCII VTK grid: all mesh nodes as points, linear hexahedra on the
    element corners, displacement as point data and ply index as cell data."""
    p = mesh.order
    m = p + 1
    corners = [a + m * b + m * m * c for c, b, a in
               [(0, 0, 0), (0, 0, p), (0, p, p), (0, p, 0), (p, 0, 0), (p, 0, p), (p, p, p), (p, p, 0)]]
    cells = mesh.elements[:, corners]
    n = len(mesh.nodes)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [" ".join(_num(v) for v in x) for x in mesh.nodes]
    lines.append(f"CELLS {len(cells)} {9 * len(cells)}")
    lines += ["8 " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_HEXAHEDRON)] * len(cells)
    lines += [f"CELL_DATA {len(cells)}", "SCALARS ply int 1", "LOOKUP_TABLE default"]
    lines += [str(int(i)) for i in mesh.ply_id]
    if displacement is not None:
        lines += [f"POINT_DATA {n}", "VECTORS displacement double"]
        lines += [" ".join(_num(v) for v in u) for u in np.asarray(displacement).reshape(n, 3)]
    return "\n".join(lines) + "\n"


def snapshot_json(snap: dict, digest: str) -> str:
    body = {"config_sha256": digest, "step": snap["step"], "factor": float(snap["factor"]),
            "damage": {str(k): [float(x) for x in v] for k, v in snap["damage"].items()}}
    return json.dumps(body, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_outputs(bundle, directory=None) -> list[Path]:
    """Write every artifact of a run bundle; returns the written paths."""
    cfg = bundle.config
    out = Path(directory if directory is not None else cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    digest = config_hash(cfg)
    files = [
        _write(out / "config.yaml", dump_config(cfg)),
        _write(out / "curve.csv", curve_csv(bundle.curve, digest)),
        _write(out / "convergence.jsonl", convergence_jsonl(bundle.steps, digest)),
    ]
    mesh = bundle.solver.dec.mesh if bundle.solver is not None else None
    for snap in bundle.snapshots:
        files.append(_write(out / f"damage_{snap['step']:04d}.json", snapshot_json(snap, digest)))
        if cfg.output.vtk and mesh is not None:
            files.append(_write(out / f"deformed_{snap['step']:04d}.vtk",
                                vtk_unstructured(mesh, snap["displacement"], f"{cfg.scenario} {digest}")))
    timing = {"config_sha256": digest, "wall_time_s": bundle.wall_time,
              "steps": [{"step": r.step, "wall_time_s": r.wall_time} for r in bundle.steps]}
    files.append(_write(out / "timing.json", json.dumps(timing, indent=1, sort_keys=True) + "\n"))
    manifest = {"config_sha256": digest, "scenario": cfg.scenario, "status": bundle.status,
                "failure": bundle.failure, "steps": len(bundle.steps),
                "total_iterations": bundle.total_iterations, "version": __version__,
                "files": [f.name for f in files]}
    files.append(_write(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n"))
    return files
