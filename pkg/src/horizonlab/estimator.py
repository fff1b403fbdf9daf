"""Horizon state estimation at 1 kHz: sliding-window Hough + Kalman filter.

The window tracks at most 80 events no older than 3 ms and maintains an
incremental accumulator over (theta, rho) bins of 5 degrees by 5 pixels;
the measurement is the theta of the maximum bin, gated at 40 events and
unwrapped against the filter prediction to resolve the 180-degree line
ambiguity. Everything in this module works in degrees.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import SimulationFault

# Hough discretization (theta bin centers at 0, 5, ..., 175 degrees;
# rho bin edges at -150, -145, ..., +150 px).
THETA_STEP_DEG = 5.0
N_THETA = 36
RHO_STEP_PX = 5.0
RHO_MIN_PX = -150.0
N_RHO = 60

WINDOW_SPAN_US = 3000
MAX_EVENTS = 80
MIN_LINE_COUNT = 40

_THETA_DEG = np.arange(N_THETA) * THETA_STEP_DEG
_COS = np.cos(np.radians(_THETA_DEG))
_SIN = np.sin(np.radians(_THETA_DEG))
_ROWS = np.arange(N_THETA)


@dataclass(frozen=True)
class AngleMeasurement:
    theta_bin_center: float   # deg, [0, 180)
    count: int                # events on the detected line
    z: float                  # unwrapped relative-roll measurement, deg


class HoughWindow:
    """Bounded event buffer plus incremental rho-theta accumulator.

    Each event votes once per theta column; insert and evict apply exact
    integer increments/decrements, so the accumulator always equals a
    from-scratch rebuild of the buffer.
    """

    def __init__(self, cx: float = 120.0, cy: float = 90.0,
                 span_us: int = WINDOW_SPAN_US, max_events: int = MAX_EVENTS,
                 min_line_count: int = MIN_LINE_COUNT):
        self.cx = cx
        self.cy = cy
        self.span_us = span_us
        self.max_events = max_events
        self.min_line_count = min_line_count
        self.accumulator = np.zeros((N_THETA, N_RHO), dtype=np.int64)
        self.buffer: deque = deque()   # (t_us, x, y, rho_bins[36])

    def __len__(self) -> int:
        return len(self.buffer)

    @property
    def newest_t(self) -> Optional[int]:
        return self.buffer[-1][0] if self.buffer else None

    def _rho_bins(self, x, y) -> np.ndarray:
        rho = (np.asarray(x)[..., None] - self.cx) * _COS \
            + (np.asarray(y)[..., None] - self.cy) * _SIN
        idx = np.floor((rho - RHO_MIN_PX) / RHO_STEP_PX).astype(np.int64)
        idx[idx == N_RHO] = N_RHO - 1   # rho exactly at +150 px
        if idx.min() < 0 or idx.max() >= N_RHO:
            raise SimulationFault("rho outside accumulator span (geometry bug)")
        return idx

    def insert(self, t_us: int, x: int, y: int) -> None:
        if self.buffer and t_us < self.buffer[-1][0]:
            raise SimulationFault("event older than newest buffered event")
        bins = self._rho_bins(x, y)
        self.accumulator[_ROWS, bins] += 1
        self.buffer.append((t_us, x, y, bins))

    def insert_batch(self, t: Sequence[int], x: Sequence[int], y: Sequence[int]) -> None:
        n = len(t)
        if n == 0:
            return
        if n > 40:
            if self.buffer and t[0] < self.buffer[-1][0]:
                raise SimulationFault("event older than newest buffered event")
            # one vectorized accumulate instead of n small ones
            bins = self._rho_bins(np.asarray(x), np.asarray(y))
            np.add.at(self.accumulator, (np.broadcast_to(_ROWS, bins.shape), bins), 1)
            self.buffer.extend(zip(t, x, y, bins))
        else:
            for i in range(n):
                self.insert(int(t[i]), int(x[i]), int(y[i]))

    def _evict_left(self, n: int) -> List[Tuple[int, int, int]]:
        evicted = []
        for _ in range(n):
            t_us, x, y, bins = self.buffer.popleft()
            self.accumulator[_ROWS, bins] -= 1
            evicted.append((t_us, x, y))
        return evicted

    def maintain(self, now_us: int) -> List[Tuple[int, int, int]]:
        """Evict events older than the 3 ms span, then down to max_events."""
        cutoff = now_us - self.span_us
        n_old = 0
        for entry in self.buffer:
            if entry[0] >= cutoff:
                break
            n_old += 1
        evicted = self._evict_left(n_old)
        extra = len(self.buffer) - self.max_events
        if extra > 0:
            evicted += self._evict_left(extra)
        return evicted

    def clear(self) -> None:
        self.accumulator.fill(0)
        self.buffer.clear()

    def peak(self, predicted_alpha_deg: float = 0.0) -> Optional[AngleMeasurement]:
        """Max-count bin as a measurement, or None below the 40-event gate.

        Ties resolve to the roll nearest the prediction, then to the lowest
        theta index; the theta->roll map is z = 90 - theta shifted by the
        multiple of 180 nearest the prediction.
        """
        best = int(self.accumulator.max()) if self.buffer else 0
        if best < self.min_line_count:
            return None
        rows = np.unique(np.nonzero(self.accumulator == best)[0])
        best_z = None
        best_dist = math.inf
        best_theta = 0.0
        for k in rows:
            theta = float(k) * THETA_STEP_DEG
            z0 = 90.0 - theta           # in (-90, 90]
            z = z0 + 180.0 * round((predicted_alpha_deg - z0) / 180.0)
            dist = abs(z - predicted_alpha_deg)
            if dist < best_dist - 1e-12:
                best_z, best_dist, best_theta = z, dist, theta
        return AngleMeasurement(theta_bin_center=best_theta, count=best, z=best_z)


# ---------------------------------------------------------------------------
# Kalman filter (two states: relative roll and roll rate, degrees)
# ---------------------------------------------------------------------------

Q_ALPHA = 1.0          # deg^2 per 1 ms step
Q_RATE = 10000.0       # (deg/s)^2 per 1 ms step
R_MEAS = 10.0          # deg^2
INIT_P_ALPHA = 25.0
INIT_P_RATE = 1.0e6


@dataclass(frozen=True, slots=True)
class EstimatorState:
    """Filter mean and covariance; covariance kept as the symmetric triple."""

    alpha: float = 0.0        # deg
    alpha_dot: float = 0.0    # deg/s
    p00: float = INIT_P_ALPHA
    p01: float = 0.0
    p11: float = INIT_P_RATE
    t: int = 0                # us
    initialized: bool = False

    def covariance(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p01, self.p11]])


def kf_predict(s: EstimatorState, u_deg_s: float, dt_s: float,
               q_alpha: float = Q_ALPHA, q_rate: float = Q_RATE) -> EstimatorState:
    """Propagate mean and covariance: alpha += alpha_dot*dt, alpha_dot += u."""
    alpha = s.alpha + s.alpha_dot * dt_s
    alpha_dot = s.alpha_dot + u_deg_s
    p00 = s.p00 + dt_s * (2.0 * s.p01 + dt_s * s.p11) + q_alpha
    p01 = s.p01 + dt_s * s.p11
    p11 = s.p11 + q_rate
    return replace(s, alpha=alpha, alpha_dot=alpha_dot, p00=p00, p01=p01, p11=p11,
                   t=s.t + round(dt_s * 1e6))


def kf_update(s: EstimatorState, z_deg: float, r: float = R_MEAS) -> EstimatorState:
    """Measurement update of the roll state (H = [1 0]), Joseph-stabilized."""
    innov = z_deg - s.alpha
    gain_den = s.p00 + r
    k0 = s.p00 / gain_den
    k1 = s.p01 / gain_den
    alpha = s.alpha + k0 * innov
    alpha_dot = s.alpha_dot + k1 * innov
    # P <- (I-KH) P (I-KH)^T + K R K^T
    c = 1.0 - k0
    m00 = c * s.p00
    m01 = c * s.p01
    m10 = s.p01 - k1 * s.p00
    m11 = s.p11 - k1 * s.p01
    p00 = m00 * c + k0 * k0 * r
    p01 = m01 - m00 * k1 + k0 * k1 * r
    p11 = m11 - m10 * k1 + k1 * k1 * r
    return replace(s, alpha=alpha, alpha_dot=alpha_dot, p00=p00, p01=p01, p11=p11)


# ---------------------------------------------------------------------------
# 1 kHz estimator tick
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TickResult:
    state: EstimatorState
    measurement: Optional[AngleMeasurement]
    peak_count: int           # max accumulator count, gated or not
    compute_us: float


class HorizonEstimator:
    """Ties the Hough window and the filter into the 1 ms update cycle.

    Until the first gated measurement arrives the state reports
    ``initialized=False`` and only the clock advances; the controller is
    expected to hold bias thrust in that condition.
    """

    def __init__(self, cx: float = 120.0, cy: float = 90.0,
                 q_alpha: float = Q_ALPHA, q_rate: float = Q_RATE, r: float = R_MEAS):
        self.window = HoughWindow(cx=cx, cy=cy)
        self.state = EstimatorState()
        self.q_alpha = q_alpha
        self.q_rate = q_rate
        self.r = r
        self._last_tick_us: Optional[int] = None

    def tick(self, now_us: int, t: Sequence[int], x: Sequence[int],
             y: Sequence[int], u_deg_s: float = 0.0) -> TickResult:
        """Insert released events, maintain the window, predict, update.

        The 3 ms window is anchored at the newest buffered event timestamp:
        transported events arrive uniformly late, so aging them against the
        processing clock would starve the window whenever the transport
        delay exceeds the span. A duplicate call at the same ``now`` is a
        no-op on both the window and the filter.
        """
        start = time.perf_counter_ns()
        s = self.state
        if self._last_tick_us is not None:
            if now_us == self._last_tick_us:
                return TickResult(s, None, int(self.window.accumulator.max()), 0.0)
            if now_us < self._last_tick_us:
                raise SimulationFault("estimator tick time regression")
        self._last_tick_us = now_us

        n = len(t)
        if n:
            cutoff = int(t[-1]) - self.window.span_us
            lo = int(np.searchsorted(np.asarray(t), cutoff))
            if n - lo > self.window.max_events:
                # every current entry and all but the newest max_events
                # incoming ones would be evicted by maintain() anyway
                self.window.clear()
                lo = n - self.window.max_events
            self.window.insert_batch(np.asarray(t)[lo:], np.asarray(x)[lo:],
                                     np.asarray(y)[lo:])
        if self.window.newest_t is not None:
            self.window.maintain(self.window.newest_t)

        if s.initialized:
            dt_s = (now_us - s.t) / 1e6
            if dt_s > 0.0:
                s = kf_predict(s, u_deg_s, dt_s, self.q_alpha, self.q_rate)
        else:
            s = replace(s, t=now_us)

        meas = self.window.peak(s.alpha if s.initialized else 0.0)
        if meas is not None:
            if s.initialized:
                s = kf_update(s, meas.z, self.r)
            else:
                s = EstimatorState(alpha=meas.z, alpha_dot=0.0, p00=INIT_P_ALPHA,
                                   p01=0.0, p11=INIT_P_RATE, t=now_us, initialized=True)
        self.state = s
        peak_count = int(self.window.accumulator.max()) if len(self.window) else 0
        compute_us = (time.perf_counter_ns() - start) / 1000.0
        return TickResult(s, meas, peak_count, compute_us)
