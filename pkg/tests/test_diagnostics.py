import math
from dataclasses import replace

import numpy as np
import pytest

from zkbox import diagnostics as D
from zkbox import grid as G
from zkbox import solver as S
from zkbox import theory as T
from zkbox.errors import ValidationError

PI = math.pi
ZERO = D.DiagnosticsRecord(*([0.0] * len(D.CSV_COLUMNS)))


def synthetic(ts, **cols):
    """Records at times ``ts`` with the given columns set from arrays."""
    out = []
    for i, t in enumerate(ts):
        out.append(replace(ZERO, t=float(t), **{k: float(v[i]) for k, v in cols.items()}))
    return out


def pi_cfg(n, dt, t_end, **kw):
    g = G.make_grid(PI, PI, PI, n, n, n)
    return S.SolverConfig(T.PhysParams(1.0, PI, PI, PI), g, dt, t_end, **kw)


@pytest.fixture(scope="module")
def bump_run():
    cfg = pi_cfg(17, 0.01, 1.0, record_every=5)
    u0 = S.make_initial_bump(cfg.grid, 1e-3)
    return cfg, u0, S.run(cfg, u0)[1]


# ---------------------------------------------------------------- record

def test_record_of_zero_state():
    g = G.make_grid(1, 1, 1, 7, 7, 7)
    rec = D.record(S.initial_state(g.zeros()), 1.0)
    assert rec.row() == ZERO.row()
    assert all(v == 0 for v in rec.traces_2nd.values())
    assert all(v == 0 for v in rec.traces_3rd.values())


def test_record_l2_matches_norm_and_closed_form():
    a = 1e-3
    g = G.make_grid(PI, PI, PI, 33, 33, 33)
    u0 = S.make_initial_bump(g, a)
    rec = D.record(S.initial_state(u0), 1.0)
    assert rec.l2_sq == G.l2_sq(u0)
    assert rec.l2_sq == pytest.approx(G.norm(u0, "L2") ** 2, rel=1e-15)
    # int sin^4 = 3 pi / 8, int sin^2 = pi / 2 on (0, pi)
    assert rec.l2_sq == pytest.approx(a**2 * 3 * PI / 8 * (PI / 2) ** 2, rel=1e-6)


def test_row_roundtrip():
    rec = replace(ZERO, t=0.25, l2_sq=1 / 3, h2_sq=math.pi)
    back = D.DiagnosticsRecord.from_row({c: format(v, ".17g") for c, v in zip(D.CSV_COLUMNS, rec.row())})
    assert back.row() == rec.row()


def test_record_sandwich_and_trace_monotone(bump_run):
    _, _, series = bump_run
    for r in series:
        assert r.l2_sq <= r.w_l2_sq <= (1 + PI) * r.l2_sq
        assert all(v >= 0 for v in r.row())
    assert D.trace_monotone(series)


# ---------------------------------------------------------------- energy identity

def test_energy_residual_degenerate_cases(bump_run):
    assert D.energy_identity_residual([ZERO, replace(ZERO, t=1.0)]) == (0.0, 0.0)
    assert D.energy_identity_residual(bump_run[2][:1]) == (0.0, 0.0)
    with pytest.raises(ValidationError):
        D.energy_identity_residual([])


def test_energy_residual_small_on_bump_run(bump_run):
    _, norm = D.energy_identity_residual(bump_run[2])
    assert 0 < norm < 2e-2


# ---------------------------------------------------------------- envelopes

def test_envelope_zero_run_and_exact_envelope():
    ts = np.linspace(0, 2, 11)
    res = D.check_envelope(synthetic(ts), "w_l2_sq", 1.0, 0.5, slack=0.05)
    assert res.passed and res.worst_ratio == 0.0
    env = 3.0 * np.exp(-0.7 * ts)
    res = D.check_envelope(synthetic(ts, w_l2_sq=env), "w_l2_sq", 3.0, 0.7, slack=1e-12)
    assert res.passed and res.worst_ratio == pytest.approx(1.0, rel=1e-14)


def test_envelope_zero_with_nonzero_functional_fails():
    res = D.check_envelope(synthetic([0.0, 1.0], ut_w_sq=[0.0, 1e-20]), "ut_w_sq", 0.0, 1.0)
    assert not res.passed and math.isinf(res.worst_ratio) and res.worst_t == 1.0


def test_envelope_reports_worst_time():
    ts = np.linspace(0, 1, 5)
    vals = np.exp(-ts)
    vals[3] *= 1.2
    res = D.check_envelope(synthetic(ts, w_l2_sq=vals), "w_l2_sq", 1.0, 1.0)
    assert not res.passed and res.worst_t == ts[3] and res.worst_ratio == pytest.approx(1.2)


# ---------------------------------------------------------------- fits

def test_fit_exact_exponential():
    ts = np.linspace(0, 3, 31)
    fit = D.fit_decay_rate(synthetic(ts, h2_sq=np.exp(-2 * ts)), "h2_sq", (0.0, 3.0))
    assert fit.rate == pytest.approx(2.0, abs=1e-12) and fit.r_squared == pytest.approx(1.0)
    fit = D.fit_decay_rate(synthetic(ts, h2_sq=5 * np.exp(-2 * ts)), "h2_sq")
    assert fit.window == (pytest.approx(0.6), 3.0)


def test_fit_on_theory_envelope_recovers_rate():
    chi = T.compute_constants(T.PhysParams(1.0, PI, PI, PI), 0.0).chi
    ts = np.linspace(0, 5, 101)
    env = T.decay_envelope(2.0, 2 * chi, ts)
    fit = D.fit_decay_rate(synthetic(ts, w_l2_sq=env), "w_l2_sq")
    assert abs(fit.rate - 2 * chi) < 1e-10


def test_fit_constant_and_perturbed():
    ts = np.linspace(0, 10, 201)
    fit = D.fit_decay_rate(synthetic(ts, l2_sq=np.full_like(ts, 4.0)), "l2_sq")
    assert fit.rate == 0.0 and fit.r_squared == 1.0
    y = np.exp(-2 * ts) * (1 + 0.01 * np.sin(ts))
    assert abs(D.fit_decay_rate(synthetic(ts, l2_sq=y), "l2_sq").rate - 2.0) < 0.02


def test_fit_rejects_nonpositive_values_and_tiny_windows():
    ts = np.linspace(0, 1, 6)
    vals = np.exp(-ts)
    vals[4] = 0.0
    with pytest.raises(ValidationError, match="0.8"):
        D.fit_decay_rate(synthetic(ts, l2_sq=vals), "l2_sq", (0.0, 1.0))
    with pytest.raises(ValidationError):
        D.fit_decay_rate(synthetic(ts, l2_sq=np.exp(-ts)), "l2_sq", (0.5, 0.55))


def test_fit_accepts_callable_selector():
    ts = np.linspace(0, 2, 21)
    s = synthetic(ts, uy_sq=np.exp(-ts), uz_sq=np.exp(-ts))
    fit = D.fit_decay_rate(s, lambda r: r.uy_sq + r.uz_sq, (0, 2))
    assert fit.rate == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- bounds

def test_boundedness_modes_on_zero_run():
    s = synthetic([0.0, 0.5, 1.0])
    assert D.check_boundedness(s, "second_yz", 0.0).passed
    res = D.check_eux_bound(s, 0.8, PI)
    assert res.passed and res.worst_ratio == 0.0


def test_eux_bound_on_bump_run(bump_run):
    _, u0, series = bump_run
    C1 = T.c1(1.0, G.norm(u0), T.ESTIMATE_III)
    res = D.check_eux_bound(series, C1, PI)
    assert res.passed and 0 < res.worst_ratio < 1


def test_boundedness_detects_excess():
    s = synthetic([0.0, 1.0, 2.0], second_yz=[1.0, 2.5, 1.0])
    res = D.check_boundedness(s, "second_yz", 2.0)
    assert not res.passed and res.worst_ratio == 2.5 and res.worst_t == 1.0


# ---------------------------------------------------------------- continuous dependence

def test_identical_data_give_zero():
    cfg = pi_cfg(11, 0.05, 0.5)
    u0 = S.make_initial_bump(cfg.grid, 1e-3)
    assert D.continuous_dependence(cfg, u0, u0) == 0.0


def test_linear_difference_is_not_amplified():
    cfg = pi_cfg(13, 0.02, 0.6, nonlinear=False)
    u0 = S.make_initial_bump(cfg.grid, 1e-3)
    other = G.Field3(cfg.grid, 1.01 * u0.values, G.DIRICHLET)
    ratio = D.continuous_dependence(cfg, u0, other)
    assert 1.0 <= ratio <= 1.0 + 1e-2  # t = 0 contributes exactly 1


def test_amplification_ladder_matches_pairwise():
    cfg = pi_cfg(11, 0.05, 0.3)
    u0 = S.make_initial_bump(cfg.grid, 1e-3)
    others = [G.Field3(cfg.grid, (1 + d) * u0.values, G.DIRICHLET) for d in (1e-2, 1e-3)]
    ladder = D.amplification_ratios(cfg, u0, others)
    assert ladder == [D.continuous_dependence(cfg, u0, b) for b in others]


def test_scale_invariance_in_linear_regime():
    cfg = pi_cfg(13, 0.02, 1.0, nonlinear=False, record_every=5)
    fits, first = [], []
    for c in (1.0, 3.0):
        _, series = S.run(cfg, S.make_initial_bump(cfg.grid, c * 1e-3))
        first.append(series[-1])
        fits.append([D.fit_decay_rate(series, k).rate for k in ("l2_sq", "w_l2_sq", "h2_sq")])
    assert np.allclose(fits[0], fits[1], rtol=0, atol=1e-8)
    for name in ("l2_sq", "w_l2_sq", "trace_accum", "h2_sq", "ut_w_sq", "second_yz"):
        assert getattr(first[1], name) == pytest.approx(9 * getattr(first[0], name), rel=1e-8)
