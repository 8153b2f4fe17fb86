import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from blochopt.cell_spectral import PeriodicCoefficient, PlaneWaveTruncation, rescaled_eigenvalue
from blochopt.effective import (
    CompactBox, EffectiveTensors, boussinesq_split, contract, epsilon_threshold,
    eval_PM, eval_QR, taylor_tensors,
)

TWO_PI = 2 * math.pi
K = CompactBox((2.0,))
# fourth-order tensors from a polynomial fit of the shooting oracle near eta = 0
A4_COSINE = -6.41675420e-03
A4_LAMINATE = -1.19999811e-02


@pytest.fixture(scope="module")
def cos_t(cosine):
    return taylor_tensors(cosine, 2)


@pytest.fixture(scope="module")
def lam_t(laminate):
    return taylor_tensors(laminate, 2)


def harmonic_mean(a):
    return 1.0 / quad(lambda y: 1.0 / a(y), 0, 1, epsabs=1e-14, epsrel=1e-14)[0]


def test_constant_tensors_exact():
    t = taylor_tensors(PeriodicCoefficient.constant(2.5), 3)
    assert t.A2 == 2.5
    assert t.tensor(2) == 0.0 and t.tensor(3) == 0.0


def test_cosine_homogenized(cos_t):
    ref = harmonic_mean(lambda y: 2 + math.cos(TWO_PI * y))
    assert ref == pytest.approx(math.sqrt(3), rel=1e-13)
    assert abs(cos_t.A2 - math.sqrt(3)) < 1e-7


def test_laminate_homogenized(lam_t):
    assert abs(lam_t.A2 - 1.6) < 1e-6


def test_fourth_order_against_shooting(cos_t, lam_t):
    assert cos_t.A4 == pytest.approx(A4_COSINE, rel=1e-4)
    assert lam_t.A4 == pytest.approx(A4_LAMINATE, rel=1e-4)


def test_fourth_order_sign(cos_t, lam_t):
    assert cos_t.A4 <= 1e-8 and lam_t.A4 <= 1e-8


def test_half_step_agreement(cos_t):
    agree = cos_t.diagnostics["half_step_agreement"]
    assert agree[0] < 1e-6 and agree[1] < 1e-4


def test_order_limits(cosine):
    with pytest.raises(ValueError):
        taylor_tensors(cosine, 5)
    with pytest.raises(ValueError):
        taylor_tensors(cosine, 0)


def test_eval_pm_examples(cos_t):
    t1 = taylor_tensors(PeriodicCoefficient.constant(1.0), 1)
    for eps in (0.0, 0.1, 1.0):
        assert eval_PM(t1, 1, eps, 0.5) == pytest.approx(math.pi ** 2, rel=1e-14)
    assert eval_PM(cos_t, 2, 0.1, 0.0) == 0.0
    expect = TWO_PI ** 2 * cos_t.A2 + 0.01 * TWO_PI ** 4 * cos_t.A4
    assert eval_PM(cos_t, 2, 0.1, 1.0) == pytest.approx(expect, rel=1e-14)


def test_eval_pm_close_to_band(cosine, cos_t):
    errs = [abs(rescaled_eigenvalue(cosine, 1.0, e) - eval_PM(cos_t, 2, e, 1.0)) for e in (0.1, 0.05)]
    C = errs[0] / 0.1 ** 4
    assert errs[1] <= 1.2 * C * 0.05 ** 4


def test_contract_2d():
    T = np.zeros((2, 2))
    T[0, 1] = T[1, 0] = 1.0
    assert contract(T, np.array([[2.0, 3.0]]))[0] == 12.0


def test_threshold_unbounded(cos_t):
    t1 = taylor_tensors(PeriodicCoefficient.constant(1.0), 2)
    assert epsilon_threshold(t1, 2, K).unbounded
    assert epsilon_threshold(cos_t, 1, K).unbounded


def test_threshold_cosine(cos_t):
    th = epsilon_threshold(cos_t, 2, K)
    assert 0 < th.sufficient <= th.value < math.inf
    pts = K.sample(1024)
    floor = 0.5 * cos_t.ellipticity * pts[:, 0] ** 2
    assert np.all(eval_PM(cos_t, 2, 0.99 * th.value, pts) >= floor)
    assert np.any(eval_PM(cos_t, 2, 1.5 * th.value, pts) < floor)
    # the sufficient (norm) bound is violated at 1.5 times itself
    lhs = TWO_PI ** 4 * (1.5 * th.sufficient * 2.0) ** 2 * abs(cos_t.A4)
    assert lhs >= cos_t.ellipticity / 2


def test_threshold_closed_form(cos_t):
    # 1D, M = 2: (2 pi)^2 a2 + eps^2 (2 pi)^4 a4 eta^2 >= a2 / 2 on |eta| <= 2
    exact = math.sqrt(cos_t.A2 * (TWO_PI ** 2 - 0.5) / (TWO_PI ** 4 * abs(cos_t.A4) * 4.0))
    assert epsilon_threshold(cos_t, 2, K).value == pytest.approx(exact, rel=1e-6)


def test_boussinesq_examples(cos_t):
    assert boussinesq_split(taylor_tensors(PeriodicCoefficient.constant(1.0), 2)) == (0.0, 0.0)
    fake = EffectiveTensors(1, 2, (np.array([[2.0]]), np.full((1,) * 4, -0.5)), 2.0)
    assert boussinesq_split(fake) == (0.25, 0.0)
    b2, b4 = cos_t.boussinesq
    assert b2 == pytest.approx(-cos_t.A4 / math.sqrt(3), rel=1e-7) and b4 == 0.0


def test_boussinesq_rejects_positive():
    bad = EffectiveTensors(1, 2, (np.array([[2.0]]), np.full((1,) * 4, 0.5)), 2.0)
    with pytest.raises(ValueError):
        boussinesq_split(bad)


def test_eval_qr_examples():
    t = taylor_tensors(PeriodicCoefficient.constant(1.0), 2)
    assert eval_QR(t, 0.3, 0.5) == pytest.approx((0.0, math.pi ** 2))
    assert eval_QR(t, 0.3, 0.0) == (0.0, 0.0)
    fake = EffectiveTensors(1, 2, (np.array([[math.sqrt(3)]]), np.zeros((1,) * 4)), math.sqrt(3), (0.1, 0.0))
    q, r = eval_QR(fake, 0.2, 1.0)
    assert q == pytest.approx(0.15791367, rel=1e-7)
    assert r == pytest.approx(68.543, rel=1e-4)


def _sweep_slope(errs, eps):
    return np.polyfit(np.log(eps), np.log(errs), 1)[0]


def test_symbol_identity_rate(cos_t):
    eps = np.array([2.0 ** -k for k in range(3, 8)])
    eta = K.sample(257)
    errs = []
    for e in eps:
        q, r = eval_QR(cos_t, e, eta[:, 0])
        errs.append(np.abs((1 + q) * (1 + eval_PM(cos_t, 2, e, eta)) - (1 + r)).max())
    assert _sweep_slope(errs, eps) >= 3.8


def test_rational_symbol_rate(cosine, cos_t):
    eps = np.array([2.0 ** -k for k in range(3, 8)])
    eta = np.arange(-16, 17) / 8.0
    errs = []
    for e in eps:
        q, r = eval_QR(cos_t, e, eta)
        lam = np.array([rescaled_eigenvalue(cosine, x, e) for x in eta])
        errs.append(np.abs((1 + q) / (1 + r) - 1 / (1 + lam)).max())
    assert _sweep_slope(errs, eps) >= 3.8


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(1e-3, 10.0), eta=st.floats(-50, 50))
def test_regularised_symbol_coercive(cos_t, eps, eta):
    q, r = eval_QR(cos_t, eps, eta)
    assert q >= 0 and 1 + r >= 1


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.2, 5.0), eps=st.floats(0.0, 1.0), eta=st.floats(-3, 3))
def test_constant_pm_independent_of_eps(c, eps, eta):
    t = taylor_tensors(PeriodicCoefficient.constant(c), 2)
    assert eval_PM(t, 2, eps, eta) == pytest.approx(c * TWO_PI ** 2 * eta ** 2, rel=1e-14, abs=1e-300)


def test_two_dimensional_tensors():
    A = PeriodicCoefficient.cosine(mean=3.0, dimension=2)
    t = taylor_tensors(A, 2, trunc=PlaneWaveTruncation(6))
    A2 = t.tensor(1)
    # a separable sum: the homogenised matrix is diagonal with equal entries
    assert A2[0, 1] == pytest.approx(0.0, abs=1e-9)
    assert A2[0, 0] == pytest.approx(A2[1, 1], rel=1e-9)
    assert t.tensor(2).shape == (2, 2, 2, 2)
    T4 = t.tensor(2)
    # full symmetry of the fourth-order tensor
    assert T4[0, 0, 1, 1] == pytest.approx(T4[0, 1, 0, 1], rel=1e-12, abs=1e-14)
    assert epsilon_threshold(t, 2, CompactBox((1.0, 1.0))).value > 0
