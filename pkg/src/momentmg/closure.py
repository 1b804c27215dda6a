"""Relaxation-model physics: gas parameters, the anisotropic-Gaussian
closure, collision and body-force source coefficients, and both collision
frequency laws."""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .basis import MomentCoeffs, macro_from_coeffs
from .indexing import tables

__all__ = [
    "GasModel", "ExternalForce", "collision_frequency", "es_expansion",
    "collision_coeffs", "force_coeffs",
]

POWER_LAW = "power"
HARD_SPHERE = "hard_sphere"


@dataclass(frozen=True)
class GasModel:
    """Prandtl/Knudsen pair plus the viscosity law behind the collision
    frequency.  ``prandtl == 1`` degenerates to plain BGK relaxation."""

    prandtl: float
    knudsen: float
    law: str = POWER_LAW
    visc_exponent: float = 0.81

    def __post_init__(self):
        if not self.prandtl > 0.0:
            raise ValueError(f"Prandtl number must be positive, got {self.prandtl}")
        if not self.knudsen > 0.0:
            raise ValueError(f"Knudsen number must be positive, got {self.knudsen}")
        if self.law not in (POWER_LAW, HARD_SPHERE):
            raise ValueError(f"unknown collision-frequency law {self.law!r}")

    @property
    def law_id(self) -> int:
        return 0 if self.law == POWER_LAW else 1


@dataclass(frozen=True)
class ExternalForce:
    """Constant body acceleration."""

    accel: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.accel, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(a)):
            raise ValueError(f"force components must be finite, got {a}")
        a.setflags(write=False)
        object.__setattr__(self, "accel", a)

    @classmethod
    def none(cls) -> "ExternalForce":
        return cls(np.zeros(3))


def collision_frequency(gas: GasModel, rho: float, theta: float) -> float:
    """Average collision frequency for the configured viscosity law."""
    if not (rho > 0.0 and theta > 0.0):
        raise ValueError(f"need positive density and temperature, got "
                         f"rho={rho}, theta={theta}")
    return float(K.frequency(gas.prandtl, gas.knudsen, gas.law_id,
                             gas.visc_exponent, rho, theta))


def es_expansion(f: MomentCoeffs, prandtl: float) -> MomentCoeffs:
    """Coefficients of the anisotropic Gaussian attractor in ``f``'s anchor.

    Built by the two-level recursion seeded with the stress of ``f``; at
    ``prandtl == 1`` every entry beyond the mass one vanishes and the result
    is the plain Maxwellian.
    """
    if not prandtl > 0.0:
        raise ValueError(f"Prandtl number must be positive, got {prandtl}")
    macro = macro_from_coeffs(f)   # rejects raw input / nonpositive density
    tab = tables(f.order)
    fac = (1.0 - 1.0 / prandtl) / macro.rho
    mm = fac * macro.sigma
    dmu = np.zeros(3)
    out = K.gauss_expand(macro.rho, dmu, mm, tab.alphas, tab.down, tab.canon)
    return MomentCoeffs(f.anchor, out, compliant=True)


def collision_coeffs(f: MomentCoeffs, gas: GasModel) -> MomentCoeffs:
    """Relaxation source ``nu (f_eq - f)``; the mass, momentum and energy
    rows vanish identically (collisional invariants)."""
    macro = macro_from_coeffs(f)
    nu = collision_frequency(gas, macro.rho, macro.theta)
    eq = es_expansion(f, gas.prandtl)
    return MomentCoeffs(f.anchor, nu * (eq.coeffs - f.coeffs), compliant=False)


def force_coeffs(f: MomentCoeffs, force: ExternalForce) -> MomentCoeffs:
    """Body-force source: each component shifts the coefficient ladder down
    one step in its direction."""
    tab = tables(f.order)
    n = tab.size
    out = np.zeros(n)
    for d in range(3):
        a = force.accel[d]
        if a == 0.0:
            continue
        dn = tab.down[d]
        for b in range(n):
            if dn[b] >= 0:
                out[b] += a * f.coeffs[dn[b]]
    return MomentCoeffs(f.anchor, out, compliant=False)
