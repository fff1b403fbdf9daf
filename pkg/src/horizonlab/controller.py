"""PD attitude law, gain synthesis, thrust allocation, thrust/duty mapping.

All pure functions; the controller works in radians (the estimator's
degree-valued state is converted exactly once, at this boundary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from .dynamics import PlantParams
from .errors import ConfigError


@dataclass(frozen=True)
class ControllerGains:
    k_p: float      # N*m/rad
    k_d: float      # N*m*s/rad
    tau: float      # s (closed-loop time constant the gains were derived for)
    zeta: float     # damping ratio
    J: float        # kg*m^2


def gains_from(tau: float, zeta: float, J: float) -> ControllerGains:
    """Synthesize PD gains from a target time constant, damping, and inertia:
    k_p = J/tau^2, k_d = 2*zeta*J/tau."""
    if tau <= 0 or zeta <= 0 or J <= 0:
        raise ConfigError("tau, zeta and J must all be positive")
    return ControllerGains(k_p=J / tau ** 2, k_d=2.0 * zeta * J / tau,
                           tau=tau, zeta=zeta, J=J)


def pd_torque(alpha: float, alpha_dot: float, alpha_des: float,
              alpha_dot_des: float, gains: ControllerGains) -> float:
    """Required torque, unclamped (saturation is allocation's job)."""
    return gains.k_p * (alpha_des - alpha) + gains.k_d * (alpha_dot_des - alpha_dot)


def allocate(torque: float, params: PlantParams) -> Tuple[float, float, bool]:
    """Split a torque into rotor thrust commands around the bias point.

    Returns (f1_cmd, f2_cmd, saturated); saturated flags a command that had
    to be clamped to [0, f_max].
    """
    df = torque / params.arm
    raw1 = params.f0 + 0.5 * df
    raw2 = params.f0 - 0.5 * df
    f1 = min(max(raw1, 0.0), params.f_max)
    f2 = min(max(raw2, 0.0), params.f_max)
    return f1, f2, (f1 != raw1) or (f2 != raw2)


@dataclass(frozen=True)
class ThrustMap:
    """Quadratic rotor model thrust(duty) = c2*duty^2 + c1*duty on [0, 1]."""

    c2: float = 3.0     # N
    c1: float = 1.0     # N

    def validate(self) -> None:
        if self.c2 <= 0 or self.c1 < 0:
            raise ConfigError("thrust map requires c2 > 0 and c1 >= 0")

    def thrust(self, duty: float) -> float:
        return self.c2 * duty * duty + self.c1 * duty

    @property
    def f_max(self) -> float:
        return self.thrust(1.0)


def thrust_to_duty(f: float, tmap: ThrustMap) -> Tuple[float, bool]:
    """Invert the quadratic map; out-of-range thrusts clamp with a flag."""
    if f <= 0.0:
        return 0.0, f < 0.0
    if f >= tmap.f_max:
        return 1.0, f > tmap.f_max
    duty = (-tmap.c1 + math.sqrt(tmap.c1 * tmap.c1 + 4.0 * tmap.c2 * f)) / (2.0 * tmap.c2)
    return duty, False
