import math

import numpy as np
import pytest

from horizonlab.errors import AnalysisError
from horizonlab.sysid import (
    BodePoint,
    DelayRegression,
    SimplexConfig,
    TransferFit,
    delay_from_rmse,
    extract_response,
    fit_transfer,
    inertia_from_bode,
    natural_frequency,
    nelder_mead,
)


# -- Nelder-Mead --------------------------------------------------------------

def test_nm_scalar_quadratic():
    res = nelder_mead(lambda x: (x[0] - 3.0) ** 2, [0.0])
    assert res.converged
    assert res.x[0] == pytest.approx(3.0, abs=1e-6)


def test_nm_rosenbrock():
    def rosen(v):
        x, y = v
        return (1 - x) ** 2 + 100 * (y - x * x) ** 2
    res = nelder_mead(rosen, [-1.2, 1.0], SimplexConfig(max_iter=2000))
    assert res.converged
    assert res.x[0] == pytest.approx(1.0, abs=1e-4)
    assert res.x[1] == pytest.approx(1.0, abs=1e-4)


def test_nm_returns_immediately_on_flat_objective():
    res = nelder_mead(lambda x: 7.0, [2.0, 5.0])
    assert res.converged
    assert res.iterations == 0
    assert np.allclose(res.x, [2.0, 5.0])
    assert res.fval == 7.0


def test_nm_flags_non_convergence():
    res = nelder_mead(lambda x: (x[0] - 3.0) ** 2, [1e6],
                      SimplexConfig(max_iter=3, tol_x=1e-14, tol_f=1e-14))
    assert not res.converged


def test_nm_best_value_is_monotone():
    history = []

    def probe(v):
        val = (v[0] - 1) ** 2 + (v[1] + 2) ** 4 + abs(v[0] * v[1])
        history.append(val)
        return val

    nelder_mead(probe, [4.0, 3.0], SimplexConfig(max_iter=300))
    best = math.inf
    mins = []
    for val in history:
        best = min(best, val)
        mins.append(best)
    assert mins == sorted(mins, reverse=True)


def test_nm_rejects_bad_coefficients():
    with pytest.raises(AnalysisError):
        SimplexConfig(expansion=0.5).validate()


# -- frequency response extraction ---------------------------------------------

def sampled(fn, duration=10.0, dt=0.001):
    t = np.arange(0.0, duration, dt)
    return t, fn(t)


def test_extract_identity_plant():
    omega = 4.0
    t, y = sampled(lambda t: 2.0 * np.sin(omega * t))
    bp = extract_response(t, y, omega, amplitude=2.0, settle_s=1.0)
    assert bp.gain_db == pytest.approx(0.0, abs=1e-9)
    assert bp.phase_deg == pytest.approx(0.0, abs=1e-9)


def test_extract_pure_delay():
    omega, td = 5.0, 0.020
    t, y = sampled(lambda t: np.sin(omega * (t - td)))
    bp = extract_response(t, y, omega, amplitude=1.0, settle_s=1.0)
    assert bp.gain_db == pytest.approx(0.0, abs=1e-9)
    assert bp.phase_deg == pytest.approx(-omega * td * 180 / math.pi, abs=1e-6)


def test_extract_second_order_at_natural_frequency():
    tau, zeta = 0.149, 0.7
    wn = 1.0 / tau
    # steady-state response of 1/(1 + 2 zeta s/wn + (s/wn)^2) at w = wn
    t, y = sampled(lambda t: (1.0 / (2 * zeta)) * np.sin(wn * t - math.pi / 2),
                   duration=20.0)
    bp = extract_response(t, y, wn, amplitude=1.0, settle_s=0.5)
    assert bp.gain_db == pytest.approx(-20 * math.log10(2 * zeta), abs=1e-6)
    assert bp.phase_deg == pytest.approx(-90.0, abs=1e-6)


def test_extract_amplitude_invariance():
    omega = 3.0
    t, y = sampled(lambda t: 0.4 * np.sin(omega * t - 0.3), duration=14.0)
    a = extract_response(t, y, omega, amplitude=0.8, settle_s=1.0)
    b = extract_response(t, 5.0 * y, omega, amplitude=4.0, settle_s=1.0)
    assert a.gain_db == pytest.approx(b.gain_db, abs=1e-9)
    assert a.phase_deg == pytest.approx(b.phase_deg, abs=1e-9)


def test_extract_window_too_short():
    t, y = sampled(lambda t: np.sin(0.5 * t), duration=3.0)
    with pytest.raises(AnalysisError):
        extract_response(t, y, 0.5, amplitude=1.0, settle_s=1.0)


def test_extract_unwraps_against_previous_point():
    omega, td = 40.0, 0.120   # true phase -275 deg; raw atan2 reports +85
    t, y = sampled(lambda t: np.sin(omega * (t - td)))
    raw = extract_response(t, y, omega, amplitude=1.0, settle_s=1.0)
    assert raw.phase_deg == pytest.approx(-omega * td * 180 / math.pi + 360.0, abs=1e-6)
    bp = extract_response(t, y, omega, amplitude=1.0, settle_s=1.0,
                          prev_phase_deg=-250.0)
    assert bp.phase_deg == pytest.approx(-omega * td * 180 / math.pi, abs=1e-6)


# -- transfer-function fitting ---------------------------------------------------

TRUE_FIT = TransferFit(K=1.0, a1=0.2090, a2=0.02230, a3=4.46e-4, T_d=0.0138)


def bode_points_from(fit: TransferFit, omegas) -> list:
    g, p = fit.response(np.asarray(omegas))
    return [BodePoint(w, gi, pi) for w, gi, pi in zip(omegas, g, p)]


def test_fit_recovers_synthetic_third_order_plus_delay():
    omegas = np.logspace(math.log10(0.5), math.log10(50.0), 12)
    points = bode_points_from(TRUE_FIT, omegas)
    res = fit_transfer(points, seed=1)
    assert res.residual < 1e-5
    assert res.fit.K == pytest.approx(TRUE_FIT.K, rel=0.01)
    assert res.fit.a1 == pytest.approx(TRUE_FIT.a1, rel=0.01)
    assert res.fit.a2 == pytest.approx(TRUE_FIT.a2, rel=0.01)
    assert res.fit.a3 == pytest.approx(TRUE_FIT.a3, rel=0.01)
    assert res.fit.T_d == pytest.approx(TRUE_FIT.T_d, abs=5e-4)


def test_fit_degenerates_to_second_order():
    second = TransferFit(K=2.0, a1=0.0417, a2=0.0222, a3=0.0, T_d=0.004)
    omegas = np.logspace(-1, math.log10(30.0), 14)
    points = bode_points_from(second, omegas)
    res = fit_transfer(points, seed=2)
    assert res.fit.a3 == pytest.approx(0.0, abs=1e-4)
    assert res.fit.T_d == pytest.approx(0.004, abs=5e-4)


def test_fit_delay_additivity():
    omegas = np.logspace(math.log10(0.5), math.log10(50.0), 12)
    base = fit_transfer(bode_points_from(TRUE_FIT, omegas), seed=3)
    shifted_pts = []
    extra = 0.006
    for p in bode_points_from(TRUE_FIT, omegas):
        shifted_pts.append(BodePoint(p.omega, p.gain_db,
                                     p.phase_deg - math.degrees(p.omega * extra)))
    shifted = fit_transfer(shifted_pts, seed=3)
    assert shifted.fit.T_d - base.fit.T_d == pytest.approx(extra, abs=5e-4)


def test_fit_self_consistency_residual():
    omegas = np.logspace(math.log10(0.5), math.log10(50.0), 12)
    points = bode_points_from(TRUE_FIT, omegas)
    res = fit_transfer(points, init=TRUE_FIT, n_starts=1, seed=0)
    assert res.residual < 1e-6


def test_fit_input_validation():
    omegas = [1.0, 2.0, 3.0, 4.0, 5.0]
    points = bode_points_from(TRUE_FIT, omegas)
    with pytest.raises(AnalysisError):
        fit_transfer(points)          # too few points
    omegas = np.linspace(1.0, 5.0, 8)
    with pytest.raises(AnalysisError):
        fit_transfer(bode_points_from(TRUE_FIT, omegas))   # less than a decade


# -- delay regression -------------------------------------------------------------

def test_delay_regression_exact_line():
    samples = [(s, 0.012 * s) for s in (300.0, 500.0, 700.0, 900.0)]
    reg = delay_from_rmse(samples, baseline_deg=2.0)
    assert reg.slope_ms == pytest.approx(12.0, abs=1e-9)
    assert reg.stderr_ms == pytest.approx(0.0, abs=1e-9)


def test_delay_regression_gate_excludes_baseline_points():
    samples = [(100.0, 1.0), (200.0, 1.5), (500.0, 4.0), (700.0, 5.6), (900.0, 7.2)]
    reg = delay_from_rmse(samples, baseline_deg=2.0)
    assert reg.used == [False, False, True, True, True]
    assert reg.slope_ms == pytest.approx(8.0, abs=0.01)


def test_delay_regression_needs_three_points():
    with pytest.raises(AnalysisError):
        delay_from_rmse([(100.0, 0.5), (200.0, 0.8), (400.0, 1.2)], baseline_deg=2.0)


def test_delay_regression_constant_shift_moves_intercept_only():
    samples = [(s, 0.010 * s + 0.5) for s in (300.0, 500.0, 700.0, 900.0)]
    shifted = [(s, r + 1.0) for s, r in samples]
    a = delay_from_rmse(samples)
    b = delay_from_rmse(shifted)
    assert a.slope_ms == pytest.approx(b.slope_ms, abs=1e-9)
    assert b.intercept_deg - a.intercept_deg == pytest.approx(1.0, abs=1e-9)


# -- inertia ----------------------------------------------------------------------

def test_inertia_reference_numbers():
    J = inertia_from_bode(6.69, 0.353)
    assert J == pytest.approx(0.00788, rel=0.01)


def test_inertia_identities():
    assert inertia_from_bode(1.0, 1.0) == pytest.approx(1.0)
    assert inertia_from_bode(2.0, 1.0) == pytest.approx(0.25)


def test_inertia_from_fitted_model():
    # second-order pair at wn = 6.69 with a fast parasitic pole
    wn, zeta, tp = 6.69, 0.11, 0.02
    a1 = 2 * zeta / wn + tp
    a2 = 1 / wn ** 2 + 2 * zeta * tp / wn
    a3 = tp / wn ** 2
    fit = TransferFit(K=1.0, a1=a1, a2=a2, a3=a3, T_d=0.0)
    assert natural_frequency(fit) == pytest.approx(wn, rel=1e-6)
    assert inertia_from_bode(fit, 0.353) == pytest.approx(0.353 / wn ** 2, rel=1e-6)
