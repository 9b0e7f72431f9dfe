"""Uniform collocated grid on the box (0,L) x (0,B_y) x (0,B_z).

Fields are stored as arrays of shape ``(n_x, n_y, n_z)`` indexed ``[i, j, k]``;
the lexicographic node order used for flat vectors has ``x`` varying fastest
(``values.ravel(order="F")``).  All operators are second order and pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError

AXES = {"x": 0, "y": 1, "z": 2}
DIRICHLET = "dirichlet_all"
FREE = "free"
MIN_NODES = 5


@dataclass(frozen=True)
class Grid3:
    L: float
    B_y: float
    B_z: float
    n_x: int
    n_y: int
    n_z: int

    def __post_init__(self):
        for name in ("L", "B_y", "B_z"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive finite length, got {v!r}")
        for name in ("n_x", "n_y", "n_z"):
            v = getattr(self, name)
            if int(v) != v or v < MIN_NODES:
                raise ValidationError(f"{name} must be an integer >= {MIN_NODES}, got {v!r}")
            object.__setattr__(self, name, int(v))
        for name in ("L", "B_y", "B_z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_y, self.n_z)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.L, self.B_y, self.B_z)

    @property
    def h_x(self) -> float:
        return self.L / (self.n_x - 1)

    @property
    def h_y(self) -> float:
        return self.B_y / (self.n_y - 1)

    @property
    def h_z(self) -> float:
        return self.B_z / (self.n_z - 1)

    @property
    def spacings(self) -> tuple[float, float, float]:
        return (self.h_x, self.h_y, self.h_z)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.h_x

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.n_y) * self.h_y

    @cached_property
    def z(self) -> np.ndarray:
        return np.arange(self.n_z) * self.h_z

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays ``X, Y, Z``."""
        return (self.x[:, None, None], self.y[None, :, None], self.z[None, None, :])

    @cached_property
    def weights(self) -> np.ndarray:
        """Tensor-product trapezoidal weights, shape ``(n_x, n_y, n_z)``."""
        wx, wy, wz = (_trapezoid_weights(n, h) for n, h in zip(self.shape, self.spacings))
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]

    @cached_property
    def face_weights(self) -> np.ndarray:
        """2D trapezoidal weights on the cross-section S, shape ``(n_y, n_z)``."""
        wy = _trapezoid_weights(self.n_y, self.h_y)
        wz = _trapezoid_weights(self.n_z, self.h_z)
        return wy[:, None] * wz[None, :]

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[[0, -1], :, :] = True
        mask[:, [0, -1], :] = True
        mask[:, :, [0, -1]] = True
        return mask

    def zeros(self, bc_tag: str = DIRICHLET) -> "Field3":
        return Field3(self, np.zeros(self.shape), bc_tag)


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def make_grid(L, B_y, B_z, n_x, n_y, n_z) -> Grid3:
    return Grid3(L, B_y, B_z, n_x, n_y, n_z)


@dataclass(frozen=True)
class Field3:
    """Node values of a scalar field, tagged with its intended boundary condition."""

    grid: Grid3
    values: np.ndarray = field(repr=False)
    bc_tag: str = FREE

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.size != self.grid.n_x * self.grid.n_y * self.grid.n_z:
            raise ValidationError(
                f"field has {vals.size} values, grid has {np.prod(self.grid.shape)} nodes")
        vals = vals.reshape(self.grid.shape, order="F") if vals.ndim == 1 else vals
        if vals.shape != self.grid.shape:
            raise ValidationError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        if self.bc_tag not in (DIRICHLET, FREE):
            raise ValidationError(f"unknown bc_tag {self.bc_tag!r}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field contains NaN or Inf")
        if self.bc_tag == DIRICHLET and np.any(vals[self.grid.boundary_mask] != 0.0):
            raise ValidationError("dirichlet_all field has nonzero boundary values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        """Values in lexicographic order, x fastest."""
        return self.values.ravel(order="F")

    @classmethod
    def from_function(cls, grid: Grid3, fn, bc_tag: str = FREE) -> "Field3":
        X, Y, Z = grid.mesh()
        vals = np.broadcast_to(fn(X, Y, Z), grid.shape).astype(np.float64)
        if bc_tag == DIRICHLET:
            vals = vals.copy()
            vals[grid.boundary_mask] = 0.0
        return cls(grid, vals, bc_tag)


def _axis(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ValidationError(f"unknown axis {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValidationError(f"unknown axis {axis!r}")
    return axis


def _d1(a: np.ndarray, h: float, ax: int) -> np.ndarray:
    a = np.moveaxis(a, ax, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2 * h)
    out[0] = (-3 * a[0] + 4 * a[1] - a[2]) / (2 * h)
    out[-1] = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * h)
    return np.moveaxis(out, 0, ax)


def _d2(a: np.ndarray, h: float, ax: int) -> np.ndarray:
    a = np.moveaxis(a, ax, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, ax)


def deriv(f: Field3, axis) -> Field3:
    """First derivative: centered inside, second-order one-sided on the boundary."""
    ax = _axis(axis)
    return Field3(f.grid, _d1(f.values, f.grid.spacings[ax], ax), FREE)


def deriv2(f: Field3, axis) -> Field3:
    """Second derivative: 3-point centered inside, 4-point one-sided on the boundary."""
    ax = _axis(axis)
    return Field3(f.grid, _d2(f.values, f.grid.spacings[ax], ax), FREE)


def partial(f: Field3, x: int = 0, y: int = 0, z: int = 0) -> Field3:
    """Mixed partial derivative of the given orders.

    Order two along one axis uses :func:`deriv2`; other orders compose
    :func:`deriv` and :func:`deriv2`.
    """
    vals = f.values
    for ax, order in enumerate((x, y, z)):
        h = f.grid.spacings[ax]
        for _ in range(order // 2):
            vals = _d2(vals, h, ax)
        if order % 2:
            vals = _d1(vals, h, ax)
    return Field3(f.grid, vals, FREE)


def laplacian(f: Field3) -> Field3:
    g = f.grid
    vals = sum(_d2(f.values, h, ax) for ax, h in enumerate(g.spacings))
    return Field3(g, vals, FREE)


def integrate(f: Field3) -> float:
    """Tensor-product trapezoidal quadrature over D."""
    return _integrate_array(f.grid, f.values)


def _integrate_array(grid: Grid3, a: np.ndarray) -> float:
    return float(np.sum(grid.weights * a))


def weighted_integral(f: Field3) -> float:
    """``((1+x), f)``: integral of (1+x) f over D."""
    X, _, _ = f.grid.mesh()
    return _integrate_array(f.grid, (1.0 + X) * f.values)


def weighted_l2_sq(f: Field3) -> float:
    """``((1+x), f^2)``."""
    X, _, _ = f.grid.mesh()
    return _integrate_array(f.grid, (1.0 + X) * f.values**2)


def l2_sq(f: Field3) -> float:
    return _integrate_array(f.grid, f.values**2)


def grad_sq(f: Field3) -> float:
    """``||grad f||^2``."""
    return sum(l2_sq(deriv(f, ax)) for ax in range(3))


def norm(f: Field3, kind: str = "L2") -> float:
    kind = kind.upper()
    if kind == "L2":
        return np.sqrt(l2_sq(f))
    if kind in ("L3", "L4"):
        return lq_norm(f, int(kind[1]))
    if kind == "H1":
        return np.sqrt(l2_sq(f) + grad_sq(f))
    if kind == "H2":
        return np.sqrt(h2_sq(f))
    raise ValidationError(f"unknown norm kind {kind!r}")


def lq_norm(f: Field3, q: float) -> float:
    if q == 2:
        return np.sqrt(l2_sq(f))
    return _integrate_array(f.grid, np.abs(f.values) ** q) ** (1.0 / q)


SECOND_ORDERS = ((2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1))


def h2_sq(f: Field3) -> float:
    """Squared H^2 norm: L^2 part, gradient, and the six distinct second derivatives."""
    second = sum(l2_sq(partial(f, *orders)) for orders in SECOND_ORDERS)
    return l2_sq(f) + grad_sq(f) + second


def _face_slope(vals: np.ndarray, h: float, face: str) -> np.ndarray:
    if face == "x0":
        return (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
    if face == "xL":
        return (3 * vals[-1] - 4 * vals[-2] + vals[-3]) / (2 * h)
    raise ValidationError(f"unknown face {face!r}")


def trace_face_sq(f: Field3, face: str = "x0", y: int = 0, z: int = 0) -> float:
    """Integral over S of (d_x d_y^y d_z^z f)^2 on an x-face.

    The y/z derivatives are taken first with :func:`partial`, then the x
    derivative with a second-order one-sided stencil at the face.
    """
    g = f.grid
    vals = partial(f, 0, y, z).values if (y or z) else f.values
    slope = _face_slope(vals, g.h_x, face)
    return float(np.sum(g.face_weights * slope**2))


def trace_x0_sq(f: Field3) -> float:
    """``int_S u_x(0,y,z)^2 dy dz``."""
    return trace_face_sq(f, "x0")


def x_end_slope(f: Field3) -> np.ndarray:
    """One-sided discrete ``d_x f`` on the face x = L."""
    return _face_slope(f.values, f.grid.h_x, "xL")
