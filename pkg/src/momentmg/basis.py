"""Hermite basis layer: anchors, coefficient containers, moment extraction
and the anchor-change projection.

A distribution approximant is a coefficient vector over the order-M Hermite
basis attached to an anchor velocity/temperature pair.  "Compliant" vectors
have their anchor equal to their own macroscopic state, which is equivalent
to the first-order coefficients vanishing and the second-order trace summing
to zero.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .indexing import MultiIndex, enumerate_indices, space_size, tables

__all__ = [
    "BasisAnchor", "MomentCoeffs", "MacroState",
    "hermite_value", "hermite_extreme_root", "maxwellian",
    "macro_from_coeffs", "raw_moment", "project", "stream_coeffs",
    "enumerate_indices", "space_size",
]

COMPLIANCE_RTOL = 1e-10


def hermite_value(n: int, x: float) -> float:
    """Probabilists' Hermite polynomial He_n evaluated by the three-term
    recurrence."""
    if n < 0:
        raise ValueError(f"polynomial order must be non-negative, got {n}")
    hm, h = 1.0, x
    if n == 0:
        return hm
    for k in range(1, n):
        hm, h = h, x * h - k * hm
    return h


@lru_cache(maxsize=None)
def hermite_extreme_root(n: int) -> float:
    """Largest root of He_n (the spectral radius factor of the truncated
    transport operator comes from this at n = order + 1)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    nodes, _ = np.polynomial.hermite_e.hermegauss(n)
    return float(nodes.max())


@dataclass(frozen=True)
class BasisAnchor:
    """Velocity/temperature pair fixing one expansion space."""

    u: np.ndarray
    theta: float
    order: int

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).reshape(3).copy()
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        if not self.theta > 0.0:
            raise ValueError(f"anchor temperature must be positive, got {self.theta}")
        if self.order <= 2:
            raise ValueError(f"moment order must exceed 2, got {self.order}")

    @property
    def size(self) -> int:
        return space_size(self.order)

    def close_to(self, other: "BasisAnchor", rtol: float = 1e-12) -> bool:
        return (
            self.order == other.order
            and abs(self.theta - other.theta) <= rtol * max(self.theta, other.theta)
            and bool(np.all(np.abs(self.u - other.u) <= rtol * (1.0 + np.abs(self.u)).max()))
        )


@dataclass
class MomentCoeffs:
    """Dense coefficient vector over one anchor.

    ``compliant`` marks vectors whose anchor is their own macroscopic state;
    raw vectors (fluxes, residuals, mid-update iterates) carry ``False``.
    """

    anchor: BasisAnchor
    coeffs: np.ndarray
    compliant: bool = field(default=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        if c.shape[0] != self.anchor.size:
            raise ValueError(
                f"coefficient length {c.shape[0]} does not match order "
                f"{self.anchor.order} (expected {self.anchor.size})")
        self.coeffs = c

    @property
    def order(self) -> int:
        return self.anchor.order

    def copy(self) -> "MomentCoeffs":
        return MomentCoeffs(self.anchor, self.coeffs.copy(), self.compliant)

    def check_compliance(self, rtol: float = COMPLIANCE_RTOL) -> bool:
        tab = tables(self.order)
        sp = tab.special
        rho = self.coeffs[0]
        if not rho > 0.0:
            return False
        scale = abs(rho) * max(1.0, self.anchor.theta)
        first = max(abs(self.coeffs[sp[d]]) for d in range(3))
        trace = abs(self.coeffs[sp[3]] + self.coeffs[sp[4]] + self.coeffs[sp[5]])
        return first <= rtol * scale and trace <= rtol * scale


@dataclass(frozen=True)
class MacroState:
    """Density, velocity, temperature, deviatoric stress and heat flux."""

    rho: float
    u: np.ndarray
    theta: float
    sigma: np.ndarray
    q: np.ndarray


def maxwellian(rho: float, u, theta: float, order: int) -> MomentCoeffs:
    """Equilibrium state: unit mass coefficient, all higher ones zero."""
    if not rho > 0.0:
        raise ValueError(f"density must be positive, got {rho}")
    anchor = BasisAnchor(np.asarray(u, dtype=np.float64), float(theta), order)
    coeffs = np.zeros(anchor.size)
    coeffs[0] = rho
    return MomentCoeffs(anchor, coeffs, compliant=True)


def macro_from_coeffs(f: MomentCoeffs) -> MacroState:
    """Macroscopic state of a compliant vector (raw input is rejected)."""
    if not f.check_compliance():
        raise ValueError("macro_from_coeffs requires a compliant coefficient vector")
    tab = tables(f.order)
    off = tab.offset
    c = f.coeffs
    rho = float(c[0])
    sigma = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            e = [0, 0, 0]
            e[i] += 1
            e[j] += 1
            sigma[i, j] = (1.0 + (i == j)) * c[off(tuple(e))]
    q = np.empty(3)
    for i in range(3):
        e3 = [0, 0, 0]
        e3[i] = 3
        acc = 2.0 * c[off(tuple(e3))]
        for d in range(3):
            e = [0, 0, 0]
            e[d] = 2
            e[i] += 1
            acc += c[off(tuple(e))]
        q[i] = acc
    return MacroState(rho=rho, u=f.anchor.u.copy(), theta=f.anchor.theta,
                      sigma=sigma, q=q)


def raw_moment(f: MomentCoeffs, beta: MultiIndex) -> float:
    """Exact polynomial moment ``int xi^beta f`` for ``|beta| <= order``."""
    b1, b2, b3 = (int(v) for v in beta)
    if min(b1, b2, b3) < 0 or b1 + b2 + b3 > f.order:
        raise ValueError(f"moment index {beta} outside order-{f.order} range")
    tab = tables(f.order)
    u = f.anchor.u
    th = f.anchor.theta
    p1 = K.pmat_1d(u[0], th, f.order)
    p2 = K.pmat_1d(u[1], th, f.order)
    p3 = K.pmat_1d(u[2], th, f.order)
    alphas = tab.alphas
    row = p1[b1, alphas[:, 0]] * p2[b2, alphas[:, 1]] * p3[b3, alphas[:, 2]]
    return float(row @ f.coeffs)


def project(f: MomentCoeffs, anchor: BasisAnchor) -> MomentCoeffs:
    """Re-expand ``f`` in another anchor, matching all moments up to order.

    The result is flagged compliant only when the target anchor coincides
    with the state's own macroscopic velocity and temperature.
    """
    if anchor.order != f.order:
        raise ValueError("projection cannot change the moment order")
    tab = tables(f.order)
    out = K.project_coeffs(
        f.coeffs, f.anchor.u[0], f.anchor.u[1], f.anchor.u[2], f.anchor.theta,
        anchor.u[0], anchor.u[1], anchor.u[2], anchor.theta,
        f.order, tab.alphas)
    result = MomentCoeffs(anchor, out)
    result.compliant = result.check_compliance()
    return result


def stream_coeffs(f: MomentCoeffs) -> MomentCoeffs:
    """Coefficients of the normal-direction transport ``xi_1 f`` in the same
    anchor; the top degree drops its raising term (hyperbolic truncation)."""
    tab = tables(f.order)
    out = K.stream_apply(f.coeffs, f.anchor.u[0], f.anchor.theta,
                         tab.alphas, tab.up, tab.down)
    return MomentCoeffs(f.anchor, out, compliant=False)


def reanchor(f: MomentCoeffs) -> MomentCoeffs:
    """Project a raw vector into the anchor of its own macroscopic state."""
    tab = tables(f.order)
    rho, v1, v2, v3, th = K.raw_macro(
        f.coeffs, f.anchor.u[0], f.anchor.u[1], f.anchor.u[2], f.anchor.theta,
        tab.special)
    if not (rho > 0.0 and th > 0.0):
        raise ValueError(f"state has nonpositive density or temperature "
                         f"(rho={rho}, theta={th})")
    target = BasisAnchor(np.array([v1, v2, v3]), th, f.order)
    out = project(f, target)
    out.compliant = True
    return out
