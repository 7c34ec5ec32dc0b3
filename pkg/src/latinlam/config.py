"""Run configuration schema (YAML on disk, validated with pydantic)."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """Schema violation; the message names the key and the constraint."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class CrackConfig(_Strict):
    a0: float = Field(gt=0, description="crack length along X1 (mm)")
    ply_boundary: int = Field(0, ge=0, description="index of the ply-ply plane, 0 = lowest")
    position: Literal["center", "start"] = "center"
    behavior: Literal["contact", "cohesive"] = "contact"


class GeometryConfig(_Strict):
    length: float = Field(gt=0)
    width: float = Field(gt=0)
    plies: list[float] = Field(min_length=1)
    elements: tuple[int, int, int]
    order: Literal[1, 2] = 2
    cracks: list[CrackConfig] = Field(default_factory=list)

    @field_validator("plies")
    @classmethod
    def _positive_plies(cls, v):
        if any(t <= 0 for t in v):
            raise ValueError("must be > 0")
        return v

    @field_validator("elements")
    @classmethod
    def _positive_counts(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("must be >= 1")
        return v


class PartitionConfig(_Strict):
    x: int | list[float] = 1
    y: int | list[float] = 1
    z: int = Field(1, ge=1, description="substructures per ply through the thickness")


class MaterialConfig(_Strict):
    kind: Literal["isotropic", "orthotropic"] = "isotropic"
    E: float = Field(135000.0, gt=0)
    nu: float = Field(0.3, gt=-1.0, lt=0.5)
    rho: float = Field(0.0, ge=0)
    E1: float = Field(185500.0, gt=0)
    E2: float = Field(9900.0, gt=0)
    E3: float = Field(9900.0, gt=0)
    nu12: float = 0.34
    nu13: float = 0.34
    nu23: float = 0.5
    G12: float = Field(6160.0, gt=0)
    G13: float = Field(6160.0, gt=0)
    G23: float = Field(3080.0, gt=0)
    layup: list[float] = Field(default_factory=list, description="ply angles in degrees (orthotropic)")


class CohesiveConfig(_Strict):
    k_n0: float = Field(1.0e5, gt=0)
    k_t0: float = Field(1.0e5, gt=0)
    Y_c: float = Field(0.4, gt=0)
    alpha: float = Field(1.0, ge=1)
    n: float = Field(0.5, gt=0)
    gamma1: float = Field(1.0, ge=0)
    gamma2: float = Field(1.0, ge=0)


class InterfaceConfig(_Strict):
    ply_behavior: Literal["perfect", "cohesive"] = "perfect"
    cohesive: CohesiveConfig = Field(default_factory=CohesiveConfig)


class LoadingConfig(_Strict):
    steps: int = Field(1, ge=0)
    amplitude: float = 1.0
    perturbation: float = 0.0
    perturbation_scales: bool = False
    imperfection: float = 0.0     # net transverse force on the upper ply centre (N), seeds non-symmetric modes


class PolicyBlock(_Strict):
    anisotropy: bool = False
    slenderness: float = Field(1.0, ge=1)
    macro_continuity: bool = False
    scale: float = Field(1.0, gt=0)
    contact_mode: Literal["unified", "status", "fixed"] = "unified"
    contact_cadence: int = Field(10, ge=1)
    contact_initial: Literal["closed", "open"] = "closed"
    contact_epsilon: float = Field(1e-6, gt=0)
    contact_threshold: float = Field(1e-3, ge=0, lt=1)
    cohesive_strategy: Literal["A", "B", "C", "D"] = "C"
    cohesive_cadence: int = Field(100, ge=1)
    cohesive_k_plus: Optional[float] = Field(None, gt=0)


class SolverBlock(_Strict):
    eta_tol: float = Field(1e-3, gt=0)
    max_iterations: int = Field(200, ge=1)
    mu: float = Field(0.8, gt=0, le=1)
    max_newton: int = Field(3, ge=1)
    newton_tol: float = Field(1e-6, gt=0)
    max_bisections: int = Field(4, ge=0)
    nonlinear: bool = True
    stop_on_failure: bool = True


class OutputConfig(_Strict):
    directory: str = "out"
    vtk: bool = False
    snapshot_every: int = Field(0, ge=0)


class RunConfig(_Strict):
    scenario: str
    geometry: GeometryConfig
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    material: MaterialConfig = Field(default_factory=MaterialConfig)
    interface: InterfaceConfig = Field(default_factory=InterfaceConfig)
    loading: LoadingConfig = Field(default_factory=LoadingConfig)
    policy: PolicyBlock = Field(default_factory=PolicyBlock)
    solver: SolverBlock = Field(default_factory=SolverBlock)
    output: OutputConfig = Field(default_factory=OutputConfig)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _crack_planes(self):
        nb = len(self.geometry.plies) - 1
        for c in self.geometry.cracks:
            if c.ply_boundary >= nb:
                raise ValueError(f"crack ply_boundary {c.ply_boundary} needs at least {c.ply_boundary + 2} plies")
        if self.geometry.elements[2] % len(self.geometry.plies):
            raise ValueError("elements[2] must be a multiple of the number of plies")
        kp, coh = self.policy.cohesive_k_plus, self.interface.cohesive
        if kp is not None:
            # the softening slope reaches 2 n k0; with k+ = kp k_n0 on both sides the
            # local cohesive problem has a unique solution only if kp k_n0 > 4 n max(k0)
            bound = 4.0 * coh.n * max(coh.k_n0, coh.k_t0) / coh.k_n0
            if not kp > bound:
                raise ValueError(f"policy.cohesive_k_plus must be > {bound:g} for a unique local cohesive solution")
        return self

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        return config_hash(self)


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"]
        ctx = err.get("ctx", {})
        if err["type"] == "greater_than":
            msg = f"must be > {ctx['gt']}"
        elif err["type"] == "greater_than_equal":
            msg = f"must be >= {ctx['ge']}"
        elif err["type"] == "less_than":
            msg = f"must be < {ctx['lt']}"
        elif err["type"] == "less_than_equal":
            msg = f"must be <= {ctx['le']}"
        elif err["type"] == "extra_forbidden":
            msg = "unknown key"
        elif msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        lines.append(f"{loc} {msg}" if loc else msg)
    return "; ".join(lines)


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def build_config(data: dict) -> RunConfig:
    """Fill scenario defaults under ``data`` and validate."""
    from .scenarios import scenario_defaults

    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    name = data.get("scenario")
    if name is None:
        raise ConfigError("scenario is required")
    try:
        base = scenario_defaults(name)
    except KeyError as exc:
        raise ConfigError(f"scenario unknown name {name!r}") from exc
    merged = deep_merge(base, data)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def parse_config(source) -> RunConfig:
    """Read YAML from a path, a file object or a string; validate and fill defaults."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = str(source)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return build_config(data or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the model definition; execution settings (workers, output) are left out."""
    data = cfg.to_dict()
    data.pop("workers")
    data.pop("output")
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def json_schema() -> dict:
    return RunConfig.model_json_schema()


def set_key(data: dict, dotted: str, value) -> dict:
    """Return a copy of ``data`` with ``a.b.c = value`` set."""
    out = copy.deepcopy(data)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out
