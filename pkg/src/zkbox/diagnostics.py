"""Functional time series, identity/envelope checks, decay fits, two-run experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import grid as G
from .errors import ValidationError
from .solver import SolverConfig, compute_ut, simulate
from .theory import decay_envelope

CSV_COLUMNS = ("t", "l2_sq", "w_l2_sq", "trace_x0", "trace_accum", "ux_sq", "uy_sq",
               "uz_sq", "h2_sq", "ut_w_sq", "second_yz", "uxx_sq")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    l2_sq: float
    w_l2_sq: float
    trace_x0: float
    trace_accum: float
    ux_sq: float
    uy_sq: float
    uz_sq: float
    h2_sq: float
    ut_w_sq: float
    second_yz: float
    uxx_sq: float
    traces_2nd: dict = field(default_factory=dict)
    traces_3rd: dict = field(default_factory=dict)

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)

    @classmethod
    def from_row(cls, values: dict) -> "DiagnosticsRecord":
        return cls(**{c: float(values[c]) for c in CSV_COLUMNS})


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    window: tuple[float, float]


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    worst_ratio: float
    worst_t: float = float("nan")


Selector = Union[str, Callable[[DiagnosticsRecord], float]]


def _select(series, selector: Selector) -> np.ndarray:
    if isinstance(selector, str):
        return np.array([getattr(r, selector) for r in series], dtype=float)
    return np.array([selector(r) for r in series], dtype=float)


def _times(series) -> np.ndarray:
    return np.array([r.t for r in series], dtype=float)


def record(state, c_s: float) -> DiagnosticsRecord:
    """All tracked functionals of ``state``; ``u_t`` comes from the equation."""
    u = state.u
    ut = state.u_t_cache if state.u_t_cache is not None else compute_ut(u, c_s)
    u_yy = G.partial(u, 0, 2, 0)
    u_zz = G.partial(u, 0, 0, 2)
    u_yz = G.partial(u, 0, 1, 1)
    second_yz = G.weighted_integral(
        G.Field3(u.grid, u_yy.values**2 + u_zz.values**2 + u_yz.values**2))
    return DiagnosticsRecord(
        t=float(state.t),
        l2_sq=G.l2_sq(u),
        w_l2_sq=G.weighted_l2_sq(u),
        trace_x0=G.trace_x0_sq(u),
        trace_accum=float(state.trace_accum),
        ux_sq=G.l2_sq(G.deriv(u, "x")),
        uy_sq=G.l2_sq(G.deriv(u, "y")),
        uz_sq=G.l2_sq(G.deriv(u, "z")),
        h2_sq=G.h2_sq(u),
        ut_w_sq=G.weighted_l2_sq(ut),
        second_yz=second_yz,
        uxx_sq=G.l2_sq(G.partial(u, 2, 0, 0)),
        traces_2nd={"u_xy": G.trace_face_sq(u, "x0", y=1),
                    "u_xz": G.trace_face_sq(u, "x0", z=1)},
        traces_3rd={"u_xyy": G.trace_face_sq(u, "x0", y=2),
                    "u_xzz": G.trace_face_sq(u, "x0", z=2),
                    "u_xyz": G.trace_face_sq(u, "x0", y=1, z=1)},
    )


def energy_identity_residual(series: Sequence[DiagnosticsRecord]) -> tuple[float, float]:
    """Max over records of ``|l2_sq(t) + trace_accum(t) - l2_sq(0)|`` and its normalized form."""
    if not series:
        raise ValidationError("empty series")
    l0 = series[0].l2_sq
    res = max(abs(r.l2_sq + r.trace_accum - l0) for r in series)
    return res, (res / l0 if l0 > 0 else 0.0)


def check_envelope(series, selector: Selector, initial: float, rate: float,
                   slack: float = 0.05) -> CheckResult:
    """Check ``functional(t) <= (1 + slack) * initial * exp(-rate t)`` at every record."""
    if not series:
        raise ValidationError("empty series")
    values = _select(series, selector)
    times = _times(series)
    env = decay_envelope(initial, rate, times)
    ratios = np.empty_like(values)
    for i, (v, e) in enumerate(zip(values, env)):
        if e > 0:
            ratios[i] = v / e
        else:
            ratios[i] = 0.0 if v == 0 else math.inf
    i_worst = int(np.argmax(ratios))
    worst = float(ratios[i_worst])
    return CheckResult(worst <= 1 + slack, worst, float(times[i_worst]))


def default_window(series) -> tuple[float, float]:
    t_end = series[-1].t
    return (0.2 * t_end, t_end)


def fit_decay_rate(series, selector: Selector, window=None) -> DecayFit:
    """Least-squares slope of ``log(functional)`` against t inside ``window``."""
    if not series:
        raise ValidationError("empty series")
    lo, hi = window if window is not None else default_window(series)
    times = _times(series)
    values = _select(series, selector)
    mask = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    if mask.sum() < 2:
        raise ValidationError(f"window [{lo}, {hi}] holds fewer than two records")
    t, v = times[mask], values[mask]
    bad = t[~(v > 0)]
    if bad.size:
        raise ValidationError(f"non-positive values at t = {bad.tolist()}")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    if ss_tot == 0:
        slope = 0.0
    return DecayFit(float(-slope), float(r2), (float(lo), float(hi)))


def check_boundedness(series, selector: Selector, bound: float) -> CheckResult:
    """Mode A: ``functional(t) <= bound`` at every record."""
    if not series:
        raise ValidationError("empty series")
    values = _select(series, selector)
    i = int(np.argmax(values))
    return CheckResult(bool(np.all(values <= bound)), float(values[i]), series[i].t)


def check_eux_bound(series, C1: float, L: float) -> CheckResult:
    """Mode B: ``||u_x||^2 <= C1 ||u||^2 + (2/5)(1+L) ((1+x), u_t^2)`` at every record.

    ``worst_ratio`` is the largest ``lhs / rhs`` (0 where both vanish).
    """
    if not series:
        raise ValidationError("empty series")
    worst, worst_t, ok = 0.0, series[0].t, True
    for r in series:
        rhs = C1 * r.l2_sq + 0.4 * (1 + L) * r.ut_w_sq
        lhs = r.ux_sq
        ok = ok and lhs <= rhs
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        if ratio > worst:
            worst, worst_t = ratio, r.t
    return CheckResult(ok, worst, worst_t)


def trace_monotone(series) -> bool:
    acc = [r.trace_accum for r in series]
    return all(b >= a for a, b in zip(acc, acc[1:]))


def _amplification(cfg: SolverConfig, ref: list, u0_a: G.Field3, u0_b: G.Field3) -> float:
    w0 = G.weighted_l2_sq(G.Field3(cfg.grid, u0_a.values - u0_b.values))
    worst = 0.0
    for ua, sb in zip(ref, simulate(cfg, u0_b)):
        w = G.weighted_l2_sq(G.Field3(cfg.grid, ua - sb.u.values))
        if w0 > 0:
            worst = max(worst, w / w0)
        elif w > 0:
            return math.inf
    return worst


def amplification_ratios(cfg: SolverConfig, u0_a: G.Field3, others) -> list[float]:
    """``continuous_dependence`` of ``u0_a`` against each of ``others``.

    The reference trajectory is computed once and reused.
    """
    ref = [s.u.values for s in simulate(cfg, u0_a)]
    return [_amplification(cfg, ref, u0_a, u0_b) for u0_b in others]


def continuous_dependence(cfg: SolverConfig, u0_a: G.Field3, u0_b: G.Field3) -> float:
    """Worst ``((1+x), w^2)(t) / ((1+x), w0^2)`` over records (t = 0 included), ``w = u_a - u_b``.

    Identical data gives exactly 0 when the two trajectories stay identical.
    """
    return amplification_ratios(cfg, u0_a, [u0_b])[0]
