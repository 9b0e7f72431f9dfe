"""Explicit constants, hypothesis certificate and decay envelopes for the ZK box problem."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import grid as G
from .errors import CompatibilityError, ValidationError

THEOREM_STATEMENT = "theorem_statement"
ESTIMATE_III = "estimate_iii"
C1_CONVENTIONS = (THEOREM_STATEMENT, ESTIMATE_III)

K1 = 2.0**17 / 3.0


@dataclass(frozen=True)
class PhysParams:
    c_s: float
    L: float
    B_y: float
    B_z: float

    def __post_init__(self):
        for name in ("c_s", "L", "B_y", "B_z"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, float(v))


@dataclass(frozen=True)
class TheoryConstants:
    K1: float
    K2: float
    K3: float
    K4: float
    C1: float
    chi: float
    c1_convention: str

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Condition:
    passed: bool
    margin: float


@dataclass(frozen=True)
class HypothesisCertificate:
    cond_K2: Condition
    cond_u0: Condition
    cond_J0: Condition

    @property
    def overall(self) -> bool:
        return self.cond_K2.passed and self.cond_u0.passed and self.cond_J0.passed

    def as_dict(self):
        d = {k: asdict(getattr(self, k)) for k in ("cond_K2", "cond_u0", "cond_J0")}
        d["overall"] = self.overall
        return d


def k2(L, B_y, B_z) -> float:
    return math.pi**2 * (7 / (8 * B_y**2) + 7 / (8 * B_z**2) + 23 / (8 * L**2))


def c1(c_s, u0_l2, convention=THEOREM_STATEMENT) -> float:
    base = 1 + c_s + 2.0**11 / 3 * u0_l2**4
    if convention == THEOREM_STATEMENT:
        return base
    if convention == ESTIMATE_III:
        return 0.4 * base
    raise ValidationError(f"unknown C1 convention {convention!r}; use one of {C1_CONVENTIONS}")


def compute_constants(p: PhysParams, u0_l2: float,
                      convention: str = THEOREM_STATEMENT) -> TheoryConstants:
    if not (math.isfinite(u0_l2) and u0_l2 >= 0):
        raise ValidationError(f"u0_l2 must be finite and >= 0, got {u0_l2!r}")
    K2 = k2(p.L, p.B_y, p.B_z)
    C1 = c1(p.c_s, u0_l2, convention)
    K3 = 3**3 * 2.0**16 * (1 + p.L) ** 4 * (2 * C1**2 + 1)
    K4 = 3**3 * 2.0**19 / 25 * (1 + p.L) ** 6
    chi = K2 / (4 * (1 + p.L))
    return TheoryConstants(K1, K2, K3, K4, C1, chi, convention)


def check_hypotheses(c: TheoryConstants, c_s: float, u0_l2: float, J0: float) -> HypothesisCertificate:
    for name, v in (("c_s", c_s), ("u0_l2", u0_l2), ("J0", J0)):
        if not (math.isfinite(v) and v >= 0):
            raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")
    m_k2 = c.K2 - 4 * c_s
    m_u0 = c.K2 / (4 * c.K3) - u0_l2**4
    m_j0 = c.K2 / (4 * c.K4) - J0**2
    return HypothesisCertificate(
        Condition(m_k2 >= 0, m_k2), Condition(m_u0 >= 0, m_u0), Condition(m_j0 >= 0, m_j0))


def decay_envelope(initial_value: float, rate: float, t):
    """``initial_value * exp(-rate t)``; vectorizes over ``t``."""
    if initial_value < 0 or rate < 0:
        raise ValidationError("envelope needs initial_value >= 0 and rate >= 0")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError(f"envelope time must be >= 0, got {t!r}")
    out = initial_value * np.exp(-rate * t_arr)
    return float(out) if out.ndim == 0 else out


def compatibility_residual(u0: G.Field3) -> float:
    """Max-norm of the discrete ``d_x u0`` on the face x = L."""
    return float(np.max(np.abs(G.x_end_slope(u0))))


def compatibility_tolerance(u0: G.Field3) -> float:
    g = u0.grid
    scale = max(float(np.max(np.abs(G.deriv(u0, ax).values))) for ax in range(3))
    return 10.0 * g.h_x**2 * scale


def check_compatible(u0: G.Field3) -> None:
    """Raise CompatibilityError unless u0 vanishes on the boundary and u0_x(L) ~ 0."""
    if u0.bc_tag != G.DIRICHLET:
        raise CompatibilityError("initial data must carry the dirichlet_all tag", float("nan"))
    res = compatibility_residual(u0)
    tol = compatibility_tolerance(u0)
    if res > tol:
        raise CompatibilityError(f"d_x u0 at x=L exceeds tolerance {tol:.3e}", res)


def compute_J0(u0: G.Field3, p: PhysParams) -> float:
    """``((1+x), u0^2 + [(c_s+u0) u0_x + Lap u0_x]^2)`` with grid derivatives."""
    check_compatible(u0)
    u0x = G.deriv(u0, "x")
    flux = (p.c_s + u0.values) * u0x.values + G.laplacian(u0x).values
    integrand = u0.values**2 + flux**2
    return G.weighted_integral(G.Field3(u0.grid, integrand))
