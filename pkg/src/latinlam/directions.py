"""Search-direction policies.

Operators are stored per interface as local-frame diagonals (t1, t2, n) per
Gauss point; the solver rotates them into B0 with the current interface
frame.  ``None`` for ``k_plus`` means the infinite value (displacements kept
in the local stage).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .interface import DamageState
from .mesh import InterfaceGeometry

log = logging.getLogger(__name__)

CONTACT_MODES = ("unified", "status", "fixed")
COHESIVE_STRATEGIES = ("A", "B", "C", "D")


@dataclass(frozen=True)
class PolicyConfig:
    anisotropy: bool = False
    slenderness: float = 1.0          # L0/h0 of the structure (or of a ply for contact)
    macro_continuity: bool = False
    scale: float = 1.0                # multiplier on the E/L_Gamma base value
    contact_mode: str = "unified"
    contact_cadence: int = 10
    contact_initial: str = "closed"
    contact_epsilon: float = 1e-6
    contact_threshold: float = 1e-3   # open if normal gap > threshold * largest contact gap
    cohesive_strategy: str = "C"
    cohesive_cadence: int = 100
    cohesive_k_plus: float | None = None   # None: infinite; otherwise multiple of k_n0

    def __post_init__(self):
        if self.slenderness < 1:
            raise ValueError("slenderness must be >= 1")
        if self.contact_mode not in CONTACT_MODES:
            raise ValueError(f"contact_mode must be one of {CONTACT_MODES}")
        if self.contact_initial not in ("closed", "open"):
            raise ValueError("contact_initial must be 'closed' or 'open'")
        if self.cohesive_strategy not in COHESIVE_STRATEGIES:
            raise ValueError(f"cohesive_strategy must be one of {COHESIVE_STRATEGIES}")
        if self.contact_cadence < 1 or self.cohesive_cadence < 1:
            raise ValueError("cadences must be >= 1")
        if not self.scale > 0 or not self.contact_epsilon > 0:
            raise ValueError("scale and contact_epsilon must be > 0")

    @property
    def anisotropy_ratio(self) -> float:
        return self.slenderness ** 2 if self.anisotropy else 1.0


@dataclass
class SearchDirections:
    """Operators of one interface (shared by its sides)."""

    k_plus: np.ndarray | None       # (ng, 3) local diagonals, None = infinite
    k_minus: np.ndarray             # (ng, 3)
    continuity: bool = False        # infinite macro value (exact constraint)
    version: int = 0                # bumped whenever k_minus changes

    @property
    def ratio(self) -> float:
        return float(np.max(self.k_minus[:, 2] / self.k_minus[:, 0]))


@dataclass(frozen=True)
class PolicyEvent:
    iteration: int
    interface: int
    kind: str
    old: float
    new: float

    def as_dict(self) -> dict:
        return dict(iteration=self.iteration, interface=self.interface, kind=self.kind,
                    old=self.old, new=self.new)


def reference_value(itf: InterfaceGeometry, E: float) -> float:
    if not itf.length > 0:
        raise ValueError(f"interface {itf.id}: L_Gamma must be > 0")
    return E / itf.length


def baseline(itf: InterfaceGeometry, E: float) -> SearchDirections:
    """Isotropic E/L_Gamma for k+, k-m and k-M."""
    k = np.full((itf.ngp, 3), reference_value(itf, E))
    return SearchDirections(k_plus=k.copy(), k_minus=k)


def anisotropic_micro(base: SearchDirections, slenderness: float) -> SearchDirections:
    """Divide the tangential values by slenderness^2; the normal one is unchanged."""
    if slenderness < 1:
        raise ValueError("slenderness must be >= 1")
    r = np.array([1.0 / slenderness ** 2, 1.0 / slenderness ** 2, 1.0])
    kp = None if base.k_plus is None else base.k_plus * r
    return SearchDirections(k_plus=kp, k_minus=base.k_minus * r, continuity=base.continuity,
                            version=base.version)


def macro_continuity(directions: SearchDirections) -> SearchDirections:
    return SearchDirections(k_plus=directions.k_plus, k_minus=directions.k_minus, continuity=True,
                            version=directions.version)


def unified_contact_value(E: float, L_gamma: float, slenderness: float) -> float:
    return (E / L_gamma) / slenderness ** 2


def cohesive_minus(d: np.ndarray, k0: float, floor: float) -> np.ndarray:
    """Per-point k- = 2 k0 (1 - d), kept above ``floor``."""
    return np.maximum(2.0 * k0 * (1.0 - np.asarray(d)), floor)


@dataclass
class PolicyEngine:
    """Produces initial operators and applies the configured updates."""

    config: PolicyConfig
    moduli: dict[int, float]                 # interface id -> E used in E/L_Gamma
    k0: float = 1.0e5                        # cohesive initial stiffness
    events: list[PolicyEvent] = field(default_factory=list)

    def initial(self, itf: InterfaceGeometry, damage: DamageState | None = None) -> SearchDirections:
        cfg = self.config
        E = self.moduli[itf.id] * cfg.scale
        kref = reference_value(itf, E)
        if itf.behavior in ("perfect", "boundary"):
            sd = baseline(itf, E)
            if cfg.anisotropy:
                sd = anisotropic_micro(sd, cfg.slenderness)
            if cfg.macro_continuity:
                sd = macro_continuity(sd)
            return sd
        if itf.behavior == "contact":
            k = self._contact_values(itf, None, initial=True)
            return SearchDirections(k_plus=k.copy(), k_minus=k)
        if itf.behavior == "cohesive":
            d = damage.d if damage is not None else np.zeros(itf.ngp)
            floor = cfg.contact_epsilon * kref
            if cfg.cohesive_strategy in ("C", "D"):
                km = cohesive_minus(d, self.k0, floor)
            else:
                km = np.full(itf.ngp, 2.0 * self.k0)
                if cfg.cohesive_strategy == "B" and np.all(d >= 1):
                    km[:] = floor
            km = np.repeat(km[:, None], 3, axis=1)
            if cfg.cohesive_strategy in ("C", "D"):
                broken = d >= 1.0
                km[broken] = self._contact_values(itf, None, initial=True)[broken]
            kp = None if cfg.cohesive_k_plus is None else np.full((itf.ngp, 3), cfg.cohesive_k_plus * self.k0)
            return SearchDirections(k_plus=kp, k_minus=km)
        raise ValueError(f"unknown interface behavior {itf.behavior!r}")

    def _contact_values(self, itf, open_mask, initial=False) -> np.ndarray:
        cfg = self.config
        E = self.moduli[itf.id] * cfg.scale
        kref = reference_value(itf, E)
        if cfg.contact_mode == "unified":
            return np.full((itf.ngp, 3), unified_contact_value(E, itf.length, cfg.slenderness))
        if initial:
            open_mask = np.full(itf.ngp, cfg.contact_initial == "open")
        k = np.where(open_mask, cfg.contact_epsilon * kref, kref)
        return np.repeat(k[:, None], 3, axis=1)

    def contact_update(self, itf: InterfaceGeometry, sd: SearchDirections, iteration: int,
                       normal_gap: np.ndarray, gap_scale: float | None = None) -> bool:
        """Status-mode refresh at multiples of the cadence.  Returns True if changed.

        A point is open when its gap exceeds ``contact_threshold * gap_scale``;
        ``gap_scale`` defaults to the largest gap of this interface.  Points
        that almost touch would otherwise get the near-zero value and stall.
        """
        cfg = self.config
        if cfg.contact_mode != "status" or iteration % cfg.contact_cadence:
            return False
        k = self._contact_values(itf, self._open_mask(normal_gap, gap_scale))
        return self._apply(itf, sd, iteration, "contact_status", k, k)

    def broken_update(self, itf: InterfaceGeometry, sd: SearchDirections, iteration: int,
                      normal_gap: np.ndarray, broken: np.ndarray, gap_scale: float | None = None) -> bool:
        """Contact policy on the fully damaged points of a cohesive interface (strategies C, D)."""
        cfg = self.config
        if cfg.cohesive_strategy not in ("C", "D") or not broken.any():
            return False
        if cfg.contact_mode == "status":
            if iteration % cfg.contact_cadence:
                return False
            k = self._contact_values(itf, self._open_mask(normal_gap, gap_scale))
        elif cfg.contact_mode == "unified":
            k = self._contact_values(itf, None)
        else:
            return False
        km = sd.k_minus.copy()
        km[broken] = k[broken]
        return self._apply(itf, sd, iteration, "broken_contact", sd.k_plus, km)

    def _open_mask(self, normal_gap, gap_scale):
        if gap_scale is None:
            gap_scale = float(np.max(normal_gap, initial=0.0))
        if gap_scale <= 0:
            return np.zeros(normal_gap.shape, bool)
        return normal_gap > self.config.contact_threshold * gap_scale

    def cohesive_update(self, itf: InterfaceGeometry, sd: SearchDirections, iteration: int,
                        damage: DamageState) -> bool:
        cfg = self.config
        s = cfg.cohesive_strategy
        kref = reference_value(itf, self.moduli[itf.id] * cfg.scale)
        floor = cfg.contact_epsilon * kref
        if s == "A":
            return False
        if s == "B":
            if not np.all(damage.d >= 1) or np.all(sd.k_minus == floor):
                return False
            km = np.full(itf.ngp, floor)
        else:
            if s == "C" and iteration % cfg.cohesive_cadence:
                return False
            km = cohesive_minus(damage.d, self.k0, floor)
        km = np.repeat(km[:, None], 3, axis=1)
        if s in ("C", "D"):
            # broken points are contact points; their values follow broken_update
            broken = damage.d >= 1.0
            km[broken] = sd.k_minus[broken]
        return self._apply(itf, sd, iteration, f"cohesive_{s}", sd.k_plus, km)

    def _apply(self, itf, sd, iteration, kind, kp, km) -> bool:
        if np.array_equal(km, sd.k_minus) and (kp is None or np.array_equal(kp, sd.k_plus)):
            return False
        ev = PolicyEvent(iteration, itf.id, kind, float(sd.k_minus.mean()), float(km.mean()))
        self.events.append(ev)
        log.debug("search direction update %s", ev)
        sd.k_plus = None if kp is None else np.array(kp, copy=True)
        sd.k_minus = np.array(km, copy=True)
        sd.version += 1
        return True
