"""IMEX Crank-Nicolson solver for u_t + (c_s + u) u_x + Lap u_x = f on the box.

Boundary conditions: u = 0 on the whole boundary and u_x(L, y, z) = 0.
Unknowns are the interior nodes.  In x the third derivative uses the centered
5-point stencil; the ghost value left of x = 0 is eliminated by cubic
extrapolation through the boundary node, and the ghost right of x = L by the
centered condition ``u_{N+2} = u_N`` (that is, ``u_x(L) = 0``).  In y and z the
3-point Dirichlet Laplacian is used, which a type-I DST diagonalizes exactly;
the implicit system then splits into one banded x-system per (y, z) mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as G
from .errors import DivergenceError, SingularSystemError, ValidationError
from .theory import PhysParams, check_compatible

PICARD = "picard"
EXTRAPOLATED = "extrapolated"
NONLINEAR_MODES = (PICARD, EXTRAPOLATED)
LINEAR_SOLVERS = ("dst", "direct")


# ---------------------------------------------------------------- initial data

def make_initial_bump(grid: G.Grid3, amplitude: float) -> G.Field3:
    """``a sin^2(pi x/L) sin(pi y/B_y) sin(pi z/B_z)``; compatible by construction."""
    if not math.isfinite(amplitude):
        raise ValidationError(f"amplitude must be finite, got {amplitude!r}")
    kx, ky, kz = (math.pi / s for s in grid.lengths)
    return G.Field3.from_function(
        grid,
        lambda x, y, z: amplitude * np.sin(kx * x) ** 2 * np.sin(ky * y) * np.sin(kz * z),
        G.DIRICHLET,
    )


@dataclass(frozen=True)
class ManufacturedSolution:
    """The family ``u_m = a exp(-lam t) sin^2(pi x/L) sin(pi y/B_y) sin(pi z/B_z)``."""

    amplitude: float
    lam: float = 1.0

    def _parts(self, grid, t):
        kx, ky, kz = (math.pi / s for s in grid.lengths)
        X, Y, Z = grid.mesh()
        decay = self.amplitude * math.exp(-self.lam * t)
        yz = np.sin(ky * Y) * np.sin(kz * Z)
        return kx, ky, kz, X, decay, yz

    def values(self, grid: G.Grid3, t: float) -> np.ndarray:
        kx, _, _, X, decay, yz = self._parts(grid, t)
        u = decay * np.sin(kx * X) ** 2 * yz
        u = np.broadcast_to(u, grid.shape).copy()
        u[grid.boundary_mask] = 0.0
        return u

    def field(self, grid: G.Grid3, t: float) -> G.Field3:
        return G.Field3(grid, self.values(grid, t), G.DIRICHLET)

    def forcing(self, grid: G.Grid3, c_s: float, t: float) -> np.ndarray:
        kx, ky, kz, X, decay, yz = self._parts(grid, t)
        u = decay * np.sin(kx * X) ** 2 * yz
        s2 = np.sin(2 * kx * X)
        u_x = decay * kx * s2 * yz
        lap_u_x = -decay * kx * (4 * kx**2 + ky**2 + kz**2) * s2 * yz
        f = -self.lam * u + (c_s + u) * u_x + lap_u_x
        return np.broadcast_to(f, grid.shape).copy()


def mms_forcing(manufactured: ManufacturedSolution, c_s: float):
    """Return ``f(grid, t)`` that makes ``manufactured`` an exact solution."""
    def evaluate(grid: G.Grid3, t: float) -> np.ndarray:
        return manufactured.forcing(grid, c_s, t)
    return evaluate


# --------------------------------------------------------------- equation RHS

def compute_ut(u: G.Field3, c_s: float, forcing_at_t=None, nonlinear: bool = True) -> G.Field3:
    """``u_t = -(c_s + u) u_x - Lap u_x + f`` evaluated with grid operators.

    With ``nonlinear=False`` the ``u u_x`` term is dropped (linearized runs).
    """
    u_x = G.deriv(u, "x")
    speed = c_s + u.values if nonlinear else c_s
    ut = -speed * u_x.values - G.laplacian(u_x).values
    if forcing_at_t is not None:
        f = forcing_at_t.values if isinstance(forcing_at_t, G.Field3) else forcing_at_t
        ut = ut + f
    return G.Field3(u.grid, ut, G.FREE)


# ------------------------------------------------------------ x operators

_LEFT_GHOST = {0: 4.0, 1: -6.0, 2: 4.0, 3: -1.0}


def x_operators(n_x: int, h: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Interior third-derivative and first-derivative matrices in x."""
    N = n_x - 2
    d3 = sp.lil_matrix((N, N))
    dx = sp.lil_matrix((N, N))

    def put(mat, row, node, coef):
        if 1 <= node <= N:
            mat[row, node - 1] += coef

    c3 = 1.0 / (2 * h**3)
    for i in range(1, N + 1):
        r = i - 1
        for node, w in ((i + 2, 1.0), (i + 1, -2.0), (i - 1, 2.0), (i - 2, -1.0)):
            if node == -1:
                for src, g in _LEFT_GHOST.items():
                    put(d3, r, src, w * g * c3)
            elif node == N + 2:
                put(d3, r, N, w * c3)
            else:
                put(d3, r, node, w * c3)
        put(dx, r, i + 1, 0.5 / h)
        put(dx, r, i - 1, -0.5 / h)
    return d3.tocsr(), dx.tocsr()


def dirichlet_second_difference(n: int, h: float) -> sp.csr_matrix:
    N = n - 2
    return sp.diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]) / h**2


def dirichlet_eigenvalues(n: int, h: float) -> np.ndarray:
    """Eigenvalues of :func:`dirichlet_second_difference`, in DST-I mode order."""
    N = n - 2
    m = np.arange(1, N + 1)
    return -4.0 / h**2 * np.sin(np.pi * m / (2 * (N + 1))) ** 2


def linear_operator(grid: G.Grid3, c_s: float) -> sp.csr_matrix:
    """``c_s D_x + D_x Lap`` on interior nodes, lexicographic (x fastest) order."""
    d3, dx = x_operators(grid.n_x, grid.h_x)
    iy = sp.identity(grid.n_y - 2, format="csr")
    iz = sp.identity(grid.n_z - 2, format="csr")
    dyy = dirichlet_second_difference(grid.n_y, grid.h_y)
    dzz = dirichlet_second_difference(grid.n_z, grid.h_z)
    m = sp.kron(iz, sp.kron(iy, d3 + c_s * dx))
    m = m + sp.kron(iz, sp.kron(dyy, dx)) + sp.kron(dzz, sp.kron(iy, dx))
    return m.tocsr()


class ImplicitSolver:
    """Factored ``I + dt/2 M``; solves are exact up to round-off.

    ``method="dst"`` factors the block-diagonal system obtained after a type-I
    DST in y and z; ``method="direct"`` factors the assembled physical matrix.
    """

    def __init__(self, grid: G.Grid3, c_s: float, dt: float, method: str = "dst"):
        if method not in LINEAR_SOLVERS:
            raise ValidationError(f"unknown linear solver {method!r}")
        self.grid, self.c_s, self.dt, self.method = grid, c_s, dt, method
        self.interior_shape = (grid.n_x - 2, grid.n_y - 2, grid.n_z - 2)
        self.matrix = linear_operator(grid, c_s)
        n = self.matrix.shape[0]
        if method == "direct":
            a = sp.identity(n, format="csc") + 0.5 * dt * self.matrix.tocsc()
            self._lu = _factor(a, "COLAMD")
        else:
            d3, dx = x_operators(grid.n_x, grid.h_x)
            lam_y = dirichlet_eigenvalues(grid.n_y, grid.h_y)
            lam_z = dirichlet_eigenvalues(grid.n_z, grid.h_z)
            mu = (lam_z[:, None] + lam_y[None, :]).ravel()
            nx = grid.n_x - 2
            base = sp.identity(nx) + 0.5 * dt * (d3 + c_s * dx)
            blocks = sp.kron(sp.identity(mu.size), base) + sp.kron(sp.diags(0.5 * dt * mu), dx)
            self._lu = _factor(blocks.tocsc(), "NATURAL")

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``M u`` for an interior array."""
        out = self.matrix @ u.ravel(order="F")
        return out.reshape(self.interior_shape, order="F")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            x = self._lu.solve(rhs.ravel(order="F"))
            return x.reshape(self.interior_shape, order="F")
        hat = scipy.fft.dstn(rhs, type=1, axes=(1, 2), norm="ortho")
        x = self._lu.solve(hat.ravel(order="F")).reshape(self.interior_shape, order="F")
        return scipy.fft.idstn(x, type=1, axes=(1, 2), norm="ortho")


def _factor(a, ordering):
    try:
        lu = spla.splu(a, permc_spec=ordering)
    except RuntimeError as exc:
        raise SingularSystemError(f"Crank-Nicolson matrix is singular: {exc}") from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise SingularSystemError("Crank-Nicolson matrix is singular")
    return lu


@lru_cache(maxsize=4)
def implicit_solver(grid: G.Grid3, c_s: float, dt: float, method: str = "dst") -> ImplicitSolver:
    return ImplicitSolver(grid, c_s, dt, method)


def nonlinear_term(v: np.ndarray, h: float) -> np.ndarray:
    """Centered ``(1/2) d_x (v^2)`` on interior values, zero boundary."""
    sq = np.zeros((v.shape[0] + 2,) + v.shape[1:])
    sq[1:-1] = v * v
    return (sq[2:] - sq[:-2]) / (4 * h)


# ------------------------------------------------------------------- stepping

@dataclass(frozen=True)
class SolverConfig:
    params: PhysParams
    grid: G.Grid3
    dt: float
    t_end: float
    nonlinear_mode: str = PICARD
    picard_max_iter: int = 50
    picard_tol: float = 1e-10
    forcing: Optional[ManufacturedSolution] = None
    record_every: int = 1
    nonlinear: bool = True
    linear_solver: str = "dst"
    startup_steps: int = 2

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValidationError(f"t_end must be >= 0, got {self.t_end!r}")
        if self.nonlinear_mode not in NONLINEAR_MODES:
            raise ValidationError(f"nonlinear_mode must be one of {NONLINEAR_MODES}")
        if int(self.picard_max_iter) != self.picard_max_iter or self.picard_max_iter < 1:
            raise ValidationError("picard_max_iter must be an integer >= 1")
        if not self.picard_tol > 0:
            raise ValidationError("picard_tol must be > 0")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValidationError("record_every must be an integer >= 1")
        if int(self.startup_steps) != self.startup_steps or self.startup_steps < 0:
            raise ValidationError("startup_steps must be an integer >= 0")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValidationError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if (self.params.L, self.params.B_y, self.params.B_z) != self.grid.lengths:
            raise ValidationError("grid lengths do not match PhysParams")
        self.n_steps  # validates t_end / dt

    @property
    def n_steps(self) -> int:
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValidationError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return int(n)

    def forcing_at(self, t: float) -> Optional[np.ndarray]:
        if self.forcing is None:
            return None
        return self.forcing.forcing(self.grid, self.params.c_s, t)


@dataclass(frozen=True)
class SimState:
    t: float
    u: G.Field3
    trace_accum: float = 0.0
    step_index: int = 0
    trace_x0: float = 0.0
    u_prev: Optional[np.ndarray] = field(default=None, repr=False)
    u_t_cache: Optional[G.Field3] = field(default=None, repr=False)
    picard_iterations: int = 0


def initial_state(u0: G.Field3) -> SimState:
    check_compatible(u0)
    return SimState(t=0.0, u=u0, trace_x0=G.trace_x0_sq(u0))


def _interior(a: np.ndarray) -> np.ndarray:
    return a[1:-1, 1:-1, 1:-1]


def _embed(grid: G.Grid3, interior: np.ndarray) -> np.ndarray:
    full = np.zeros(grid.shape)
    full[1:-1, 1:-1, 1:-1] = interior
    return full


def _picard(op, rhs, coef, mid_of, guess, cfg, t_new):
    """Solve ``x = op.solve(rhs - coef * N(mid_of(x)))`` by fixed-point iteration."""
    h = cfg.grid.h_x
    increments = []
    for it in range(1, cfg.picard_max_iter + 1):
        x = op.solve(rhs - coef * nonlinear_term(mid_of(guess), h))
        inc = float(np.max(np.abs(x - guess)))
        increments.append(inc)
        if inc <= cfg.picard_tol * float(np.max(np.abs(x))):
            return x, it
        guess = x
    raise DivergenceError("Picard iteration did not converge", increments, t=t_new)


def _forcing_interior(cfg, t):
    return _interior(cfg.forcing_at(t))


def _cn_step(op, u_n, u_prev, t_old, cfg):
    dt = cfg.dt
    t_new = t_old + dt
    rhs = u_n - 0.5 * dt * op.apply(u_n)
    if cfg.forcing is not None:
        rhs = rhs + 0.5 * dt * (_forcing_interior(cfg, t_old) + _forcing_interior(cfg, t_new))
    if not cfg.nonlinear:
        return op.solve(rhs), 1
    if cfg.nonlinear_mode == EXTRAPOLATED and u_prev is not None:
        mid = 1.5 * u_n - 0.5 * u_prev
        return op.solve(rhs - dt * nonlinear_term(mid, cfg.grid.h_x)), 1
    guess = 2 * u_n - u_prev if u_prev is not None else u_n
    return _picard(op, rhs, dt, lambda x: 0.5 * (u_n + x), guess, cfg, t_new)


def _be_half_step(op, u_n, t_old, cfg):
    # (I + dt/2 M) is the CN factorization, i.e. backward Euler with step dt/2
    tau = 0.5 * cfg.dt
    t_new = t_old + tau
    rhs = u_n if cfg.forcing is None else u_n + tau * _forcing_interior(cfg, t_new)
    if not cfg.nonlinear:
        return op.solve(rhs), 1
    return _picard(op, rhs, tau, lambda x: x, u_n, cfg, t_new)


def step(state: SimState, cfg: SolverConfig) -> SimState:
    """Advance one step of size ``cfg.dt``.

    The first ``cfg.startup_steps`` steps are taken as two backward-Euler
    half-steps each (Rannacher start-up), which damps the stiff dispersive
    modes that Crank-Nicolson alone leaves undamped; later steps are CN.
    """
    grid, dt = cfg.grid, cfg.dt
    op = implicit_solver(grid, cfg.params.c_s, dt, cfg.linear_solver)
    k = state.step_index
    u_n = _interior(state.u.values)

    if k < cfg.startup_steps:
        t_half = k * dt + 0.5 * dt
        u_half, it1 = _be_half_step(op, u_n, k * dt, cfg)
        tr_half = G.trace_x0_sq(G.Field3(grid, _embed(grid, u_half)))
        u_new, it2 = _be_half_step(op, u_half, t_half, cfg)
        iterations = it1 + it2
        quad = 0.25 * dt * (state.trace_x0 + 2 * tr_half)
    else:
        u_new, iterations = _cn_step(op, u_n, state.u_prev, k * dt, cfg)
        quad = 0.5 * dt * state.trace_x0

    if not np.all(np.isfinite(u_new)):
        raise DivergenceError("non-finite solution", [], t=(k + 1) * dt)
    u_field = G.Field3(grid, _embed(grid, u_new), G.DIRICHLET)
    tr = G.trace_x0_sq(u_field)
    quad += (0.25 if k < cfg.startup_steps else 0.5) * dt * tr
    return SimState(
        t=(k + 1) * dt,
        u=u_field,
        trace_accum=state.trace_accum + quad,
        step_index=k + 1,
        trace_x0=tr,
        u_prev=u_n,
        picard_iterations=iterations,
    )


def with_ut(state: SimState, cfg: SolverConfig) -> SimState:
    """Attach the equation-derived ``u_t`` at ``state.t``."""
    ut = compute_ut(state.u, cfg.params.c_s, cfg.forcing_at(state.t), cfg.nonlinear)
    return replace(state, u_t_cache=ut)


def simulate(cfg: SolverConfig, u0: G.Field3) -> Iterator[SimState]:
    """Yield states (with ``u_t`` attached) at t = 0, every ``record_every`` steps, and t_end."""
    if u0.grid != cfg.grid:
        raise ValidationError("initial field lives on a different grid than the config")
    state = initial_state(u0)
    yield with_ut(state, cfg)
    n = cfg.n_steps
    for k in range(1, n + 1):
        state = step(state, cfg)
        if k % cfg.record_every == 0 or k == n:
            yield with_ut(state, cfg)


def run(cfg: SolverConfig, u0: G.Field3):
    """Integrate to ``t_end``; returns ``(final_state, records)``."""
    from .diagnostics import record

    series = []
    state = None
    for state in simulate(cfg, u0):
        series.append(record(state, cfg.params.c_s))
    return state, series
