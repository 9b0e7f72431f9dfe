import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from zkbox import grid as G
from zkbox import solver as S
from zkbox import theory as T
from zkbox.errors import CompatibilityError, ValidationError

PI = math.pi
PI_BOX = T.PhysParams(1.0, PI, PI, PI)


def test_physparams_validation():
    for bad in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(ValidationError):
            T.PhysParams(bad, 1, 1, 1)
        with pytest.raises(ValidationError):
            T.PhysParams(1, 1, bad, 1)


def test_pi_box_constants_by_hand():
    c = T.compute_constants(PI_BOX, 0.0)
    assert c.K1 == 2**17 / 3
    assert c.K2 == pytest.approx(37 / 8, rel=1e-15)
    assert c.chi == pytest.approx(0.279180, abs=5e-7)
    assert c.C1 == 2.0
    assert c.K3 == pytest.approx(27 * 65536 * (1 + PI) ** 4 * 9, rel=1e-14)
    assert c.K4 == pytest.approx(27 * 524288 / 25 * (1 + PI) ** 6, rel=1e-14)


def test_c1_conventions():
    s = 0.05
    base = 1 + 1.5 + 2048 / 3 * s**4
    p = T.PhysParams(1.5, 1, 2, 3)
    assert T.compute_constants(p, s).C1 == pytest.approx(base, rel=1e-15)
    assert T.compute_constants(p, s, T.ESTIMATE_III).C1 == pytest.approx(0.4 * base, rel=1e-15)
    with pytest.raises(ValidationError):
        T.compute_constants(p, s, "other")
    with pytest.raises(ValidationError):
        T.compute_constants(p, -1.0)


def test_doubling_lengths_quarters_k2():
    assert T.k2(2 * PI, 2 * PI, 2 * PI) * 4 == pytest.approx(T.k2(PI, PI, PI), rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(L=st.floats(0.1, 50), By=st.floats(0.1, 50), Bz=st.floats(0.1, 50),
       f=st.floats(1.01, 3.0))
def test_k2_decreasing_and_chi_identity(L, By, Bz, f):
    k = T.k2(L, By, Bz)
    assert T.k2(f * L, By, Bz) < k
    assert T.k2(L, f * By, Bz) < k
    assert T.k2(L, By, f * Bz) < k
    c = T.compute_constants(T.PhysParams(1.0, L, By, Bz), 0.0)
    assert c.chi * 4 * (1 + L) == pytest.approx(c.K2, rel=4e-16)


@settings(max_examples=60, deadline=None)
@given(c_s=st.floats(0.01, 5), s=st.floats(0, 0.02), j=st.floats(0, 1e-3),
       shrink_s=st.floats(0, 1), shrink_j=st.floats(0, 1))
def test_certificate_monotone_under_shrinking_data(c_s, s, j, shrink_s, shrink_j):
    p = T.PhysParams(c_s, PI, PI, PI)
    big = T.check_hypotheses(T.compute_constants(p, s), c_s, s, j)
    small_s = s * shrink_s
    small = T.check_hypotheses(T.compute_constants(p, small_s), c_s, small_s, j * shrink_j)
    if big.overall:
        assert small.overall
    assert small.cond_u0.margin >= big.cond_u0.margin
    assert small.cond_J0.margin >= big.cond_J0.margin


def test_certificate_overall_is_conjunction():
    c = T.compute_constants(PI_BOX, 0.0)
    cert = T.check_hypotheses(c, 1.0, 0.0, 0.0)
    assert cert.overall and cert.as_dict()["overall"]
    cert = T.check_hypotheses(c, 1.0, 0.0, 1.0)
    assert not cert.overall and not cert.cond_J0.passed and cert.cond_u0.passed
    with pytest.raises(ValidationError):
        T.check_hypotheses(c, 1.0, -1e-3, 0.0)


# ---------------------------------------------------------------- hand table

def _u0_root(c_s, L):
    """``s`` with ``s^4 = K2 / (4 K3(s))``, found with an independent bracketing solve."""
    K2 = PI**2 * (7 / 8 / PI**2 + 7 / 8 / PI**2 + 23 / 8 / L**2)

    def g(s):
        C1 = 1 + c_s + 2**11 / 3 * s**4
        K3 = 27 * 2**16 * (1 + L) ** 4 * (2 * C1**2 + 1)
        return s**4 - K2 / (4 * K3)

    return brentq(g, 0.0, 1.0, xtol=1e-16, rtol=1e-15)


def test_u0_root_is_bracketed_by_checker():
    s0 = _u0_root(1.0, PI)
    for s, expect in ((s0 * (1 - 1e-6), True), (s0 * (1 + 1e-6), False)):
        c = T.compute_constants(PI_BOX, s)
        assert T.check_hypotheses(c, 1.0, s, 0.0).cond_u0.passed is expect


# ---------------------------------------------------------------- envelopes

def test_decay_envelope():
    assert T.decay_envelope(3.0, 1.7, 0.0) == 3.0
    assert np.all(T.decay_envelope(3.0, 0.0, [0, 1, 10]) == 3.0)
    val = T.decay_envelope(2.0, 2 * 0.279180, 1.0)
    assert val == pytest.approx(2 * math.exp(-0.558360), rel=1e-15)
    assert val == pytest.approx(1.14429, abs=5e-6)
    with pytest.raises(ValidationError):
        T.decay_envelope(1.0, 1.0, -0.1)
    with pytest.raises(ValidationError):
        T.decay_envelope(-1.0, 1.0, 0.0)


# ---------------------------------------------------------------- J0

def test_j0_zero_and_ordering():
    g = G.make_grid(PI, PI, PI, 9, 9, 9)
    assert T.compute_J0(g.zeros(), PI_BOX) == 0.0
    u0 = S.make_initial_bump(g, 0.3)
    assert T.compute_J0(u0, PI_BOX) >= G.weighted_l2_sq(u0) >= G.l2_sq(u0)


def _j0_analytic_oracle(a, c_s, n=129):
    """Weighted integral of the closed-form integrand on a fine trapezoid grid."""
    g = G.make_grid(PI, PI, PI, n, n, n)
    X, Y, Z = g.mesh()
    yz = np.sin(Y) * np.sin(Z)
    u = a * np.sin(X) ** 2 * yz
    ux = a * np.sin(2 * X) * yz
    lap_ux = -a * 6 * np.sin(2 * X) * yz  # -(4 + 1 + 1) sin(2x) yz
    integrand = (1 + X) * (u**2 + ((c_s + u) * ux + lap_ux) ** 2)
    return float(np.sum(g.weights * integrand))


def test_j0_against_analytic_integrand_oracle():
    ref = _j0_analytic_oracle(0.01, 1.0)
    err = []
    for n in (33, 65):
        u0 = S.make_initial_bump(G.make_grid(PI, PI, PI, n, n, n), 0.01)
        err.append(abs(T.compute_J0(u0, PI_BOX) - ref) / ref)
    assert err[1] < 5e-3
    assert 3.5 <= err[0] / err[1] <= 4.5


def test_j0_rejects_incompatible_data():
    g = G.make_grid(PI, PI, PI, 17, 17, 17)
    bad = G.Field3.from_function(g, lambda x, y, z: np.sin(x) * np.sin(y) * np.sin(z), G.DIRICHLET)
    with pytest.raises(CompatibilityError) as info:
        T.compute_J0(bad, PI_BOX)
    assert info.value.residual > T.compatibility_tolerance(bad)
    free = G.Field3(g, S.make_initial_bump(g, 1.0).values, G.FREE)
    with pytest.raises(CompatibilityError):
        T.compute_J0(free, PI_BOX)
