import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from horizonlab.controller import (
    ControllerGains,
    ThrustMap,
    allocate,
    gains_from,
    pd_torque,
    thrust_to_duty,
)
from horizonlab.dynamics import PlantParams
from horizonlab.errors import ConfigError


def test_gain_synthesis_reference_values():
    g = gains_from(0.149, 0.7, 0.00788)
    assert g.k_p == pytest.approx(0.353, rel=0.02)
    assert g.k_d == pytest.approx(0.071, rel=0.05)


def test_gain_synthesis_identities():
    g1 = gains_from(0.25, 0.9, 0.01)
    g2 = gains_from(0.25, 0.9, 0.02)
    assert g2.k_p == pytest.approx(2 * g1.k_p)
    assert g2.k_d == pytest.approx(2 * g1.k_d)
    unit = gains_from(1.0, 0.5, 1.0)
    assert unit.k_p == 1.0 and unit.k_d == 1.0
    # synthesised gains satisfy the defining relations exactly
    assert abs(g1.k_p - g1.J / g1.tau ** 2) < 1e-12
    assert abs(g1.k_d - 2 * g1.zeta * g1.J / g1.tau) < 1e-12


def test_gain_synthesis_rejects_nonpositive():
    for bad in [(0.0, 0.7, 1.0), (0.1, -1.0, 1.0), (0.1, 0.7, 0.0)]:
        with pytest.raises(ConfigError):
            gains_from(*bad)


def test_pd_torque_values():
    g = ControllerGains(k_p=0.353, k_d=0.071, tau=0.149, zeta=0.7, J=0.00788)
    assert pd_torque(0.0, 0.0, 0.0, 0.0, g) == 0.0
    assert pd_torque(0.0, 1.0, 1.0, 1.0, g) == pytest.approx(0.353)
    assert pd_torque(0.0, -1.0, 0.0, 0.0, g) == pytest.approx(0.071)


@given(st.floats(-2, 2), st.floats(-20, 20), st.floats(0.1, 100))
def test_pd_torque_is_linear_in_error(e_ang, e_rate, scale):
    g = gains_from(0.149, 0.7, 0.00788)
    base = pd_torque(0.0, 0.0, e_ang, e_rate, g)
    scaled = pd_torque(0.0, 0.0, e_ang * scale, e_rate * scale, g)
    assert scaled == pytest.approx(base * scale, rel=1e-12, abs=1e-12)


def test_allocate_bias_point_and_rails():
    params = PlantParams(arm=0.15, f_max=4.0, f0=2.0)
    assert allocate(0.0, params) == (2.0, 2.0, False)
    f1, f2, sat = allocate(params.arm * params.f_max, params)
    assert (f1, f2) == (4.0, 0.0)
    f1b, f2b, _ = allocate(-params.arm * params.f_max, params)
    assert (f1b, f2b) == (f2, f1)
    _, _, sat = allocate(params.arm * params.f_max * 1.5, params)
    assert sat


@given(st.floats(-0.59, 0.59))
def test_allocation_inverts_to_torque_when_unsaturated(torque):
    params = PlantParams(arm=0.15, f_max=4.0, f0=2.0)
    f1, f2, sat = allocate(torque, params)
    assert not sat
    assert (f1 - f2) * params.arm == pytest.approx(torque, abs=1e-12)


def test_thrust_map_round_trip():
    tmap = ThrustMap(c2=3.0, c1=1.0)
    tmap.validate()
    for d in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0]:
        duty, sat = thrust_to_duty(tmap.thrust(d), tmap)
        assert not sat
        assert duty == pytest.approx(d, abs=1e-9)


def test_thrust_to_duty_known_root_and_clamps():
    tmap = ThrustMap(c2=4.0, c1=0.0)
    duty, sat = thrust_to_duty(1.0, tmap)
    assert duty == pytest.approx(0.5) and not sat
    assert thrust_to_duty(0.0, tmap) == (0.0, False)
    assert thrust_to_duty(-0.5, tmap) == (0.0, True)
    assert thrust_to_duty(99.0, tmap) == (1.0, True)


def test_thrust_map_validation():
    with pytest.raises(ConfigError):
        ThrustMap(c2=0.0, c1=1.0).validate()
    with pytest.raises(ConfigError):
        ThrustMap(c2=1.0, c1=-0.1).validate()


def test_ideal_closed_loop_overshoot_and_time_constant():
    """True-state PD on the rigid body: overshoot and trace must match the
    analytic second-order step response for zeta=0.7, tau=0.149 s."""
    from dataclasses import replace

    from horizonlab.dynamics import WorldState, step_physics

    params = PlantParams(J=0.00788, arm=0.15, tau_m=0.0, f_max=4.0, f0=2.0)
    gains = gains_from(0.149, 0.7, params.J)
    target = math.radians(90.0)
    state = WorldState(f1=2.0, f2=2.0, f1_cmd=2.0, f2_cmd=2.0)
    dt_us = 100
    ts, alphas = [], []
    saturated_ever = False
    for k in range(20_000):   # 2 s
        if k % 10 == 0:   # 1 kHz control
            torque = pd_torque(state.alpha, state.alpha_dot, target, 0.0, gains)
            f1, f2, sat = allocate(torque, params)
            saturated_ever |= sat
            state = replace(state, f1_cmd=f1, f2_cmd=f2)
        state = step_physics(state, dt_us, params)
        ts.append(state.t / 1e6)
        alphas.append(state.alpha)

    assert not saturated_ever
    overshoot = (max(alphas) - target) / target
    zeta = 0.7
    expected = math.exp(-math.pi * zeta / math.sqrt(1 - zeta ** 2))
    assert overshoot == pytest.approx(expected, abs=0.005)

    wn = 1.0 / 0.149
    wd = wn * math.sqrt(1 - zeta ** 2)
    worst = 0.0
    for t, a in zip(ts, alphas):
        analytic = target * (1 - math.exp(-zeta * wn * t)
                             * (math.cos(wd * t) + zeta / math.sqrt(1 - zeta ** 2)
                                * math.sin(wd * t)))
        worst = max(worst, abs(a - analytic))
    assert worst / target < 0.01
