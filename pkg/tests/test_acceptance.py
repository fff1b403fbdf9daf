"""Acceptance suite: every release criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` (or the full suite; the
slower closed-loop criteria dominate the runtime at a few minutes total).
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from horizonlab.camera import CameraModel, EventCamera
from horizonlab.controller import gains_from
from horizonlab.dynamics import DelayLine, PlantParams, ReferenceConfig
from horizonlab.estimator import (
    EstimatorState,
    HorizonEstimator,
    HoughWindow,
    N_RHO,
    N_THETA,
    RHO_MIN_PX,
    RHO_STEP_PX,
    THETA_STEP_DEG,
    kf_predict,
    kf_update,
)
from horizonlab.harness import DelayConfig, ExperimentConfig, run_experiment
from horizonlab.sysid import (
    BodePoint,
    SimplexConfig,
    TransferFit,
    fit_transfer,
    inertia_from_bode,
    nelder_mead,
)
from horizonlab import suites


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_gain_synthesis():
    g = gains_from(0.149, 0.7, 0.00788)
    ok = (abs(g.k_p - 0.353) / 0.353 <= 0.02
          and abs(g.k_d - 0.071) / 0.071 <= 0.05)
    report("gain synthesis", ok,
           f"k_p={g.k_p:.4f} (0.353 +-2%), k_d={g.k_d:.4f} (0.071 +-5%)")


def test_inertia_round_trip():
    j = inertia_from_bode(6.69, 0.353)
    ok = abs(j - 0.00788) / 0.00788 <= 0.01
    report("inertia round trip", ok, f"J={j:.5f} kg m^2 (0.00788 +-1%)")


def test_ideal_loop_step():
    cfg = ExperimentConfig(
        scenario="step",
        reference=ReferenceConfig(kind="step", amplitude_deg=90.0, t_start_s=0.2),
        feedback="true",
        plant=PlantParams(tau_m=0.0),
        delays=DelayConfig(event_us=0, command_us=0, encoder_us=0, compute_us=0),
        duration_s=2.2, seed=0)
    res = run_experiment(cfg)
    zeta, tau = 0.7, 0.149
    expected_os = math.exp(-math.pi * zeta / math.sqrt(1 - zeta ** 2))
    os_ok = abs(res.report.overshoot_frac - expected_os) <= 0.005

    # trace must match the analytic second-order response for tau = 0.149 s
    wn = 1.0 / tau
    wd = wn * math.sqrt(1 - zeta ** 2)
    t = (np.array(res.logs.cmd_t_us) - 200_000) / 1e6
    rel = np.radians(np.array(res.logs.rel_true_deg))
    target = math.radians(90.0)
    mask = t >= 0
    analytic = target * (1 - np.exp(-zeta * wn * t[mask])
                         * (np.cos(wd * t[mask])
                            + zeta / math.sqrt(1 - zeta ** 2) * np.sin(wd * t[mask])))
    worst = float(np.max(np.abs(rel[mask] - analytic))) / target
    report("ideal-loop step", os_ok and worst < 0.01,
           f"overshoot {res.report.overshoot_frac:.3%} (expect {expected_os:.3%} "
           f"+-0.5pp), worst trace deviation {worst:.3%} of step")


def test_estimator_accuracy_vs_speed():
    rep = suites.suite_rmse_sweep(seed=0)
    print(rep.table())
    assert rep.passed, "rmse_sweep criteria failed"
    slow = [r for r in rep.rows if "zero-delay RMSE at 100" in r.name
            or "zero-delay RMSE at 200" in r.name]
    detail = ", ".join(f"{r.name.split(' at ')[1]}={r.value:.2f} deg" for r in slow)
    recov = {k: v.slope_ms for k, v in rep.data["recovered"].items()}
    report("estimator accuracy vs speed", rep.passed,
           f"{detail}; recovered delays {recov} ms for injected {{5, 12}} ms")


@pytest.mark.slow
def test_bode_delay_ordering():
    rep = suites.suite_bode_compare(seed=0)
    print(rep.table())
    td_v = rep.data["vision"]["fit"].fit.T_d * 1000
    td_e = rep.data["encoder"]["fit"].fit.T_d * 1000
    report("bode delay ordering", rep.passed,
           f"T_d vision {td_v:.2f} ms, encoder {td_e:.2f} ms, difference "
           f"{td_v - td_e:.2f} ms vs injected {rep.data['injected_ms']:.1f} +-1.5 ms")


def test_high_rate_tracking():
    rep = suites.suite_high_rate(seed=0)
    vals = {r.name: r.value for r in rep.rows}
    report("high-rate tracking", rep.passed,
           f"availability {vals['measurement availability over 2 s window']:.1%} "
           f"(> 90%), max |alpha - disk| "
           f"{vals['angular lock max |alpha - disk| (deg)']:.1f} deg (< 15)")


def test_hough_equivalence_oracle():
    rng = np.random.default_rng(12)
    w = HoughWindow()
    t = 0
    n_ops = 0
    while n_ops < 100_000:
        t += int(rng.integers(0, 120))
        w.insert(t, int(rng.integers(0, 240)), int(rng.integers(0, 180)))
        n_ops += 1
        if rng.random() < 0.25:
            n_ops += len(w.maintain(t))

    rebuilt = np.zeros((N_THETA, N_RHO), dtype=np.int64)
    thetas = np.radians(np.arange(N_THETA) * THETA_STEP_DEG)
    for t_us, x, y, _bins in w.buffer:
        for k, th in enumerate(thetas):
            rho = (x - w.cx) * math.cos(th) + (y - w.cy) * math.sin(th)
            idx = min(int(math.floor((rho - RHO_MIN_PX) / RHO_STEP_PX)), N_RHO - 1)
            rebuilt[k, idx] += 1
    ok = np.array_equal(w.accumulator, rebuilt)
    report("hough equivalence oracle", ok,
           f"{n_ops} insert/evict ops, incremental == rebuilt exactly: {ok}")


def test_kalman_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    steps_done = 0
    while steps_done < 10_000:
        s = EstimatorState(alpha=float(rng.normal(0, 50)),
                           alpha_dot=float(rng.normal(0, 300)),
                           p00=float(rng.uniform(1, 30)), p01=0.0,
                           p11=float(rng.uniform(100, 1e6)), t=0, initialized=True)
        x = np.array([[s.alpha], [s.alpha_dot]])
        p = np.array([[s.p00, s.p01], [s.p01, s.p11]])
        h = np.array([[1.0, 0.0]])
        for _ in range(50):
            if rng.random() < 0.5:
                u, dt = float(rng.normal(0, 5)), 0.001
                a = np.array([[1.0, dt], [0.0, 1.0]])
                x = a @ x + np.array([[0.0], [u]])
                p = a @ p @ a.T + np.diag([1.0, 10000.0])
                s = kf_predict(s, u, dt)
            else:
                z = float(rng.normal(0, 60))
                sc = (h @ p @ h.T).item() + 10.0
                k = p @ h.T / sc
                x = x + k * (z - (h @ x).item())
                ikh = np.eye(2) - k @ h
                p = ikh @ p @ ikh.T + k @ k.T * 10.0
                s = kf_update(s, z)
            steps_done += 1
            for got, ref in ((s.alpha, x[0, 0]), (s.alpha_dot, x[1, 0]),
                             (s.p00, p[0, 0]), (s.p01, p[0, 1]), (s.p11, p[1, 1])):
                err = abs(got - ref) / max(abs(ref), 1e-12)
                worst = max(worst, err) if abs(ref) > 1e-9 else worst
    ok = worst < 1e-9
    report("kalman oracle", ok,
           f"{steps_done} random steps, worst relative deviation {worst:.2e} (< 1e-9)")


def test_nelder_mead_and_fit_recovery():
    def rosen(v):
        return (1 - v[0]) ** 2 + 100 * (v[1] - v[0] ** 2) ** 2

    res = nelder_mead(rosen, [-1.2, 1.0], SimplexConfig(max_iter=2500))
    nm_ok = abs(res.x[0] - 1) <= 1e-4 and abs(res.x[1] - 1) <= 1e-4

    true = TransferFit(K=1.0, a1=0.2090, a2=0.02230, a3=4.46e-4, T_d=0.0138)
    omegas = np.logspace(math.log10(0.5), math.log10(50.0), 12)
    g, p = true.response(omegas)
    pts = [BodePoint(w, gi, pi) for w, gi, pi in zip(omegas, g, p)]
    fit = fit_transfer(pts, seed=0).fit
    rel_errs = [abs(fit.K / true.K - 1), abs(fit.a1 / true.a1 - 1),
                abs(fit.a2 / true.a2 - 1), abs(fit.a3 / true.a3 - 1)]
    fit_ok = max(rel_errs) <= 0.01 and abs(fit.T_d - true.T_d) <= 5e-4
    report("nelder-mead + synthetic fit recovery", nm_ok and fit_ok,
           f"rosenbrock at ({res.x[0]:.6f}, {res.x[1]:.6f}); fit params within "
           f"{max(rel_errs):.2%}, T_d err {abs(fit.T_d - true.T_d)*1000:.3f} ms")


def test_compute_budget_report():
    cfg = ExperimentConfig(
        scenario="constant_rate",
        reference=ReferenceConfig(kind="constant_rate", rate_deg_s=360.0),
        feedback="vision", duration_s=2.0, seed=0, log_events=False,
        initial_alpha_deg=-10.0, initial_rate_deg_s=150.0)
    res = run_experiment(cfg)
    mean_us = res.report.mean_tick_compute_us
    verdict = "within" if mean_us < 700.0 else "above"
    # reported, not asserted: hardware dependent
    print(f"[INFO] compute budget: mean estimator tick {mean_us:.0f} us, "
          f"{verdict} the 700 us reference budget")
    assert math.isfinite(mean_us) and mean_us > 0
