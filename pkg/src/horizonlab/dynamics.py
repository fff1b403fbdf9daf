"""Deterministic fixed-step physics of the dualcopter rig.

Single rotational degree of freedom (roll) driven by two rotors with
first-order lag, a disk that provides the reference horizon, quantized
absolute encoders on both axes, and FIFO transport-delay lines for the
event, command, and encoder channels.

All simulation time is integer microseconds; angles are radians on the
physics side (the estimator works in degrees and converts at its boundary).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Any, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, SimulationFault

US_PER_S = 1_000_000

# Physics sub-step: 10 kHz, ten sub-steps per 1 kHz control tick.
PHYSICS_DT_US = 100
TICK_DT_US = 1000


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the dualcopter.

    The inertia is the frequency-response-identified value; arm length,
    thrust range and motor time constant are engineering defaults and
    should be treated as configuration, not ground truth.
    """

    J: float = 0.00788          # moment of inertia about roll axis, kg*m^2
    arm: float = 0.15           # half rotor separation, m
    tau_m: float = 0.020        # motor first-order time constant, s
    f_max: float = 4.0          # max thrust per rotor, N
    f0: float = 2.0             # bias thrust operating point, N
    disturbance: float = 0.0    # constant imbalance torque, N*m

    def validate(self) -> None:
        if not (self.J > 0 and self.arm > 0):
            raise ConfigError("J and arm must be positive")
        if self.tau_m < 0:
            raise ConfigError("tau_m must be >= 0")
        if not (0.0 <= self.f0 <= self.f_max):
            raise ConfigError("f0 must lie in [0, f_max]")


@dataclass(frozen=True, slots=True)
class WorldState:
    """Ground-truth snapshot; immutable, safe to hand across contexts."""

    t: int = 0                  # us
    alpha: float = 0.0          # dualcopter roll, rad
    alpha_dot: float = 0.0      # roll rate, rad/s
    disk_angle: float = 0.0     # reference horizon angle, rad
    f1: float = 0.0             # current thrust rotor 1, N
    f2: float = 0.0             # current thrust rotor 2, N
    f1_cmd: float = 0.0         # commanded thrust rotor 1, N
    f2_cmd: float = 0.0         # commanded thrust rotor 2, N


def step_physics(state: WorldState, dt_us: int, params: PlantParams) -> WorldState:
    """Advance the plant by one physics step.

    Motor thrusts follow an exact zero-order-hold discretization of the
    first-order lag; the roll axis integrates with semi-implicit Euler
    (rate first, then angle with the updated rate). Thrusts are clamped to
    [0, f_max] after the lag update: rotors cannot pull.
    """
    if dt_us <= 0:
        raise ValueError("dt_us must be positive")
    dt = dt_us / US_PER_S

    if params.tau_m > 0.0:
        blend = 1.0 - math.exp(-dt / params.tau_m)
        f1 = state.f1 + (state.f1_cmd - state.f1) * blend
        f2 = state.f2 + (state.f2_cmd - state.f2) * blend
    else:
        f1 = state.f1_cmd
        f2 = state.f2_cmd
    f1 = min(max(f1, 0.0), params.f_max)
    f2 = min(max(f2, 0.0), params.f_max)

    torque = (f1 - f2) * params.arm + params.disturbance
    alpha_dot = state.alpha_dot + (torque / params.J) * dt
    alpha = state.alpha + alpha_dot * dt

    if not (math.isfinite(alpha) and math.isfinite(alpha_dot)):
        raise SimulationFault(f"non-finite state at t={state.t} us (integrator blow-up)")

    return replace(state, t=state.t + dt_us, alpha=alpha, alpha_dot=alpha_dot, f1=f1, f2=f2)


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------

ENCODER_RESOLUTION_DEG = 0.1
ENCODER_ACCURACY_DEG = 0.2


class EncoderBank:
    """Absolute encoders on the dualcopter and disk axes.

    Each channel carries a per-run constant calibration bias drawn uniformly
    in [-accuracy, +accuracy]; readings are floor-quantized to the encoder
    resolution. Sampling cadence (1 kHz) is the harness's job.
    """

    def __init__(self, rng: np.random.Generator,
                 resolution_deg: float = ENCODER_RESOLUTION_DEG,
                 accuracy_deg: float = ENCODER_ACCURACY_DEG):
        self.resolution_deg = resolution_deg
        self.bias_deg = {
            "dualcopter": rng.uniform(-accuracy_deg, accuracy_deg),
            "disk": rng.uniform(-accuracy_deg, accuracy_deg),
        }

    def read(self, state: WorldState, which: str) -> float:
        """Quantized angle in degrees for the requested axis."""
        if which == "dualcopter":
            true_deg = math.degrees(state.alpha)
        elif which == "disk":
            true_deg = math.degrees(state.disk_angle)
        else:
            raise ConfigError(f"unknown encoder axis {which!r}")
        biased = true_deg + self.bias_deg[which]
        return math.floor(biased / self.resolution_deg) * self.resolution_deg


def read_encoder(state: WorldState, which: str, bank: EncoderBank) -> float:
    return bank.read(state, which)


# ---------------------------------------------------------------------------
# Reference trajectories
# ---------------------------------------------------------------------------

REFERENCE_KINDS = ("step", "sine", "constant_rate", "chirp", "manual")


@dataclass(frozen=True)
class ReferenceConfig:
    """Parameters of the reference trajectory.

    ``slew_deg_s`` turns an ideal step into a steep ramp (0 = instantaneous);
    ``rate_ramp_s`` lets constant-rate sweeps spin up linearly instead of
    starting at full rate.
    """

    kind: str = "step"
    amplitude_deg: float = 0.0       # step size / sine / chirp amplitude
    omega_rad_s: float = 0.0         # sine angular frequency
    rate_deg_s: float = 0.0          # constant_rate target rate
    slew_deg_s: float = 0.0          # step slew limit, 0 = instant
    rate_ramp_s: float = 0.0         # constant_rate spin-up time
    t_start_s: float = 0.0           # activation time
    chirp_f0_hz: float = 0.1
    chirp_f1_hz: float = 5.0
    chirp_len_s: float = 10.0

    def validate(self) -> None:
        if self.kind not in REFERENCE_KINDS:
            raise ConfigError(f"unknown reference kind {self.kind!r}")
        if self.kind == "sine" and self.omega_rad_s < 0:
            raise ConfigError("sine omega must be >= 0")
        if self.slew_deg_s < 0 or self.rate_ramp_s < 0:
            raise ConfigError("slew/ramp times must be >= 0")


def reference_signal(cfg: ReferenceConfig, t_us: int,
                     manual_angle_rad: Optional[float] = None) -> float:
    """Reference angle (rad) at simulation time ``t_us``.

    ``manual`` returns the latest angle pushed through the live steering
    channel and holds it otherwise (zero until first push).
    """
    t = t_us / US_PER_S - cfg.t_start_s
    if cfg.kind == "manual":
        return 0.0 if manual_angle_rad is None else manual_angle_rad
    if t <= 0.0:
        return 0.0
    if cfg.kind == "step":
        target = math.radians(cfg.amplitude_deg)
        if cfg.slew_deg_s > 0.0:
            lim = math.radians(cfg.slew_deg_s) * t
            return math.copysign(min(abs(target), lim), target)
        return target
    if cfg.kind == "sine":
        return math.radians(cfg.amplitude_deg) * math.sin(cfg.omega_rad_s * t)
    if cfg.kind == "constant_rate":
        rate = math.radians(cfg.rate_deg_s)
        if cfg.rate_ramp_s > 0.0:
            if t < cfg.rate_ramp_s:
                return 0.5 * rate * t * t / cfg.rate_ramp_s
            return rate * (t - 0.5 * cfg.rate_ramp_s)
        return rate * t
    if cfg.kind == "chirp":
        # linear frequency sweep f0 -> f1 over chirp_len_s, then hold f1
        f0, f1, T = cfg.chirp_f0_hz, cfg.chirp_f1_hz, cfg.chirp_len_s
        if t <= T:
            phase = 2.0 * math.pi * (f0 * t + 0.5 * (f1 - f0) * t * t / T)
        else:
            phase = 2.0 * math.pi * (0.5 * (f0 + f1) * T + f1 * (t - T))
        return math.radians(cfg.amplitude_deg) * math.sin(phase)
    raise ConfigError(f"unknown reference kind {cfg.kind!r}")


# ---------------------------------------------------------------------------
# Transport delay lines
# ---------------------------------------------------------------------------

class DelayLine:
    """FIFO transport delay: payloads exit exactly ``delay_us`` after entry.

    ``pop_ready`` drains everything due at or before ``now``; ``held`` keeps
    the most recent released payload for zero-order-hold channels.
    """

    def __init__(self, delay_us: int, name: str = "delay"):
        if delay_us < 0:
            raise ConfigError("delay must be >= 0")
        self.delay_us = delay_us
        self.name = name
        self._queue: deque = deque()   # (release_time_us, payload)
        self._last_push_us: Optional[int] = None
        self.held: Any = None

    def __len__(self) -> int:
        return len(self._queue)

    def push(self, t_us: int, payload: Any) -> None:
        if self._last_push_us is not None and t_us < self._last_push_us:
            raise SimulationFault(
                f"time regression on {self.name} line: {t_us} < {self._last_push_us}")
        self._last_push_us = t_us
        self._queue.append((t_us + self.delay_us, payload))

    def pop_ready(self, now_us: int) -> List[Any]:
        out: List[Any] = []
        q = self._queue
        while q and q[0][0] <= now_us:
            out.append(q.popleft()[1])
        if out:
            self.held = out[-1]
        return out


class EventDelayLine:
    """Array-batch variant of :class:`DelayLine` for the event channel.

    Pushing a tick's worth of events as one (t, x, y, polarity) batch avoids
    per-event Python objects on the hot path. Release semantics are
    identical to pushing every event individually (property-tested).
    """

    _EMPTY = (np.empty(0, np.int64), np.empty(0, np.int64),
              np.empty(0, np.int64), np.empty(0, np.int64))

    def __init__(self, delay_us: int):
        if delay_us < 0:
            raise ConfigError("delay must be >= 0")
        self.delay_us = delay_us
        self._batches: deque = deque()  # arrays sorted by t within each batch
        self._watermark: Optional[int] = None

    def push_batch(self, t: np.ndarray, x: np.ndarray, y: np.ndarray,
                   pol: np.ndarray) -> None:
        if len(t) == 0:
            return
        if self._watermark is not None and int(t[0]) < self._watermark:
            raise SimulationFault("time regression on event line")
        self._watermark = int(t[-1])
        self._batches.append([t, x, y, pol])

    def pop_ready(self, now_us: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """All events with t + delay <= now, oldest first."""
        due = now_us - self.delay_us
        parts = []
        while self._batches:
            t, x, y, pol = self._batches[0]
            if int(t[0]) > due:
                break
            if int(t[-1]) <= due:
                parts.append(self._batches.popleft())
            else:
                k = int(np.searchsorted(t, due, side="right"))
                parts.append([t[:k], x[:k], y[:k], pol[:k]])
                self._batches[0] = [t[k:], x[k:], y[k:], pol[k:]]
                break
        if not parts:
            return self._EMPTY
        if len(parts) == 1:
            return tuple(parts[0])  # type: ignore[return-value]
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))  # type: ignore[return-value]
