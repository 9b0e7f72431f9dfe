"""Randomized property suites for the Steklov and interpolation inequalities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as G
from .errors import ValidationError

MAX_MODES = 5
MAX_FREQ = 3
INTERP_TOL = 1e-8


@dataclass(frozen=True)
class IneqReport:
    """Worst ``lhs / rhs`` over a sample suite; ``passed`` iff it is ``<= 1 + tolerance``."""

    n_samples: int
    worst_ratio: float
    worst_sample_id: int
    passed: bool
    tolerance: float = 0.0

    def as_dict(self):
        return {"n_samples": self.n_samples, "worst_ratio": self.worst_ratio,
                "worst_sample_id": self.worst_sample_id, "passed": self.passed,
                "tolerance": self.tolerance}


def theta(q: float) -> float:
    """Interpolation exponent ``3 (1/2 - 1/q)`` for ``2 <= q <= 6``."""
    if not (math.isfinite(q) and 2 <= q <= 6):
        raise ValidationError(f"q must lie in [2, 6], got {q!r}")
    return 3.0 * (0.5 - 1.0 / q)


def _require_nonzero_dirichlet(f: G.Field3) -> None:
    if f.bc_tag != G.DIRICHLET:
        raise ValidationError("field must carry the dirichlet_all tag")
    if not np.any(f.values):
        raise ValidationError("field is identically zero")


def steklov_ratio(f: G.Field3, axis) -> float:
    """Rayleigh quotient ``||d_axis f||^2 / ||f||^2``."""
    _require_nonzero_dirichlet(f)
    return G.l2_sq(G.deriv(f, axis)) / G.l2_sq(f)


def steklov_bound(grid: G.Grid3, axis, slack: float = 5.0) -> float:
    """``(pi / side)^2 (1 - slack h^2)`` with ``h`` the spacing along ``axis``."""
    ax = G._axis(axis)
    side, h = grid.lengths[ax], grid.spacings[ax]
    return (math.pi / side) ** 2 * (1.0 - slack * h**2)


def interpolation_ratio(f: G.Field3, q: float) -> float:
    """``||f||_q / (4^theta ||grad f||^theta ||f||^(1-theta))``."""
    _require_nonzero_dirichlet(f)
    th = theta(q)
    l2 = G.norm(f, "L2")
    rhs = 4.0**th * math.sqrt(G.grad_sq(f)) ** th * l2 ** (1 - th)
    return G.lq_norm(f, q) / rhs


def sine_mode(grid: G.Grid3, kx: int, ky: int, kz: int) -> G.Field3:
    L, By, Bz = grid.lengths
    return G.Field3.from_function(
        grid,
        lambda x, y, z: (np.sin(kx * np.pi * x / L) * np.sin(ky * np.pi * y / By)
                         * np.sin(kz * np.pi * z / Bz)),
        G.DIRICHLET)


def random_fields(grid: G.Grid3, n_samples: int, seed: int = 0):
    """Yield ``n_samples`` reproducible sums of at most five tensor sine modes."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    L, By, Bz = grid.lengths
    X, Y, Z = grid.mesh()
    for _ in range(n_samples):
        n_modes = int(rng.integers(1, MAX_MODES + 1))
        freqs = rng.integers(1, MAX_FREQ + 1, size=(n_modes, 3))
        coefs = rng.uniform(-1.0, 1.0, size=n_modes)
        vals = np.zeros(grid.shape)
        for (kx, ky, kz), c in zip(freqs, coefs):
            vals = vals + c * (np.sin(kx * np.pi * X / L) * np.sin(ky * np.pi * Y / By)
                               * np.sin(kz * np.pi * Z / Bz))
        vals[grid.boundary_mask] = 0.0
        yield G.Field3(grid, vals, G.DIRICHLET)


def _report(ratios, tolerance: float) -> IneqReport:
    ratios = np.asarray(ratios, dtype=float)
    i = int(np.argmax(ratios))
    worst = float(ratios[i])
    return IneqReport(len(ratios), worst, i, worst <= 1.0 + tolerance, tolerance)


def steklov_suite(grid: G.Grid3, n_samples: int = 100, seed: int = 0,
                  slack: float = 5.0) -> dict[str, IneqReport]:
    """Per-axis reports of ``bound / steklov_ratio`` over the random family.

    A ratio above 1 means the discrete Rayleigh quotient fell below the
    relaxed bound ``(pi/side)^2 (1 - slack h^2)``.
    """
    if slack < 0:
        raise ValidationError("slack must be >= 0")
    fields = list(random_fields(grid, n_samples, seed))
    out = {}
    for name in G.AXES:
        bound = steklov_bound(grid, name, slack)
        out[name] = _report([bound / steklov_ratio(f, name) for f in fields], 0.0)
    return out


def interpolation_suite(grid: G.Grid3, n_samples: int = 100, seed: int = 0,
                        qs=(3, 4), tolerance: float = INTERP_TOL) -> dict[int, IneqReport]:
    fields = list(random_fields(grid, n_samples, seed))
    return {q: _report([interpolation_ratio(f, q) for f in fields], tolerance) for q in qs}
