"""Event-camera model of the black/white reference disk.

The scene is a two-tone disk split by the horizon line through its center,
so a contrast-threshold sensor degenerates to a binary flip model: a pixel
emits exactly one event when the rotating boundary sweeps across it. Pixels
are sampled at their centers (x+0.5, y+0.5), which keeps every pixel
strictly off the boundary for the axis-aligned orientations.

Angles here are the roll of the dualcopter relative to the horizon; the
rendered boundary rotates with it in centered coordinates (dx = x - cx,
dy = cy - y, i.e. y up). Event timestamps are ground-truth-clock
microseconds; transport latency belongs to the dynamics delay lines.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

EventArrays = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True, slots=True)
class Event:
    """One brightness-change detection."""

    t: int          # us
    x: int          # column, [0, width)
    y: int          # row, [0, height)
    polarity: int   # +1 dark->bright, -1 bright->dark


@dataclass(frozen=True)
class CameraModel:
    width: int = 240
    height: int = 180
    cx: float = 120.0            # principal point
    cy: float = 90.0
    disk_radius: float = 90.0    # px; disk inscribed in the frame by default
    noise_rate: float = 5000.0   # background events/s over the whole sensor
    refractory_us: int = 100     # per-pixel dead time

    def validate(self) -> None:
        if self.disk_radius > min(self.width, self.height) / 2:
            raise ConfigError("disk_radius must fit inside the frame")
        if self.noise_rate < 0:
            raise ConfigError("noise_rate must be >= 0")
        if self.refractory_us < 0:
            raise ConfigError("refractory must be >= 0")


class EventCamera:
    """Stateful sensor: per-pixel refractory memory plus a seeded noise source.

    The signed distance of a pixel center to the boundary is
    s(rel) = -dx*sin(rel) + dy*cos(rel) = R*cos(rel + delta) with
    delta = atan2(dx, dy); the pixel is white where s > 0. A sweep of less
    than pi/2 crosses each pixel's zero at most once, so crossings reduce to
    one phase comparison per pixel.
    """

    def __init__(self, model: CameraModel, rng: np.random.Generator | None = None):
        model.validate()
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng(0)

        xs, ys = np.meshgrid(np.arange(model.width), np.arange(model.height))
        xs = xs.ravel()
        ys = ys.ravel()
        dx = xs + 0.5 - model.cx
        dy = model.cy - (ys + 0.5)
        r2 = dx * dx + dy * dy
        inside = r2 <= model.disk_radius ** 2
        self._ix = xs[inside].astype(np.int64)
        self._iy = ys[inside].astype(np.int64)
        self._delta = np.arctan2(dx[inside], dy[inside])
        self.inside_count = int(inside.sum())

        # far enough in the past to never suppress, no int64 overflow risk
        self._never_fired = -(1 << 60)
        self._last_fire = np.full(model.width * model.height, self._never_fired,
                                  dtype=np.int64)

    def reset(self) -> None:
        """Clear refractory memory (new recording)."""
        self._last_fire.fill(self._never_fired)

    # -- scene model --------------------------------------------------------

    def pixel_intensity(self, rel_angle: float, x: int, y: int) -> str:
        """Classify one pixel: 'white', 'black', or 'outside' the disk."""
        m = self.model
        dx = x + 0.5 - m.cx
        dy = m.cy - (y + 0.5)
        if dx * dx + dy * dy > m.disk_radius ** 2:
            return "outside"
        s = -dx * math.sin(rel_angle) + dy * math.cos(rel_angle)
        return "white" if s > 0 else "black"

    # -- event generation ---------------------------------------------------

    def generate_events(self, rel_from: float, rel_to: float,
                        t0_us: int, t1_us: int) -> List[Event]:
        t, x, y, pol = self.generate_event_arrays(rel_from, rel_to, t0_us, t1_us)
        return [Event(int(ti), int(xi), int(yi), int(pi))
                for ti, xi, yi, pi in zip(t, x, y, pol)]

    def generate_event_arrays(self, rel_from: float, rel_to: float,
                              t0_us: int, t1_us: int) -> EventArrays:
        """Events of one sweep as (t, x, y, polarity) arrays sorted by time.

        Contract: t1 > t0 and |rel_to - rel_from| < pi/2 (callers subdivide
        faster sweeps; beyond pi/2 a pixel could cross twice and alias).
        """
        if t1_us <= t0_us:
            raise ValueError("t1 must exceed t0")
        sweep = rel_to - rel_from
        if abs(sweep) >= HALF_PI:
            raise ValueError(f"sweep {sweep:.3f} rad exceeds the pi/2 contract")

        if sweep != 0.0:
            if sweep > 0.0:
                u = (HALF_PI - self._delta - rel_from) % math.pi
                hit = (u > 0.0) & (u < sweep)
                cross = rel_from + u[hit]
            else:
                u = (rel_from + self._delta - HALF_PI) % math.pi
                hit = (u > 0.0) & (u < -sweep)
                cross = rel_from - u[hit]
            sx = self._ix[hit]
            sy = self._iy[hit]
            frac = (cross - rel_from) / sweep
            st = (t0_us + frac * (t1_us - t0_us)).astype(np.int64)
            # s = R*cos(rel+delta): zero at pi/2 (+ -> -) or 3pi/2 (- -> +)
            m = np.mod(cross + self._delta[hit], TWO_PI)
            spol = np.where(np.abs(m - HALF_PI) < 1.0, -1, 1).astype(np.int64)
            if sweep < 0.0:
                spol = -spol
        else:
            sx = sy = st = spol = np.empty(0, np.int64)

        nt, nx, ny, npol = self._noise_events(t0_us, t1_us)

        t = np.concatenate([st, nt])
        x = np.concatenate([sx, nx])
        y = np.concatenate([sy, ny])
        pol = np.concatenate([spol, npol])
        order = np.argsort(t, kind="stable")
        t, x, y, pol = t[order], x[order], y[order], pol[order]
        return self._apply_refractory(t, x, y, pol)

    def _noise_events(self, t0_us: int, t1_us: int) -> EventArrays:
        m = self.model
        if m.noise_rate <= 0.0:
            return (np.empty(0, np.int64),) * 4  # type: ignore[return-value]
        lam = m.noise_rate * (t1_us - t0_us) / 1e6
        n = int(self.rng.poisson(lam))
        if n == 0:
            return (np.empty(0, np.int64),) * 4  # type: ignore[return-value]
        t = np.sort(self.rng.integers(t0_us, t1_us, size=n))
        x = self.rng.integers(0, m.width, size=n)
        y = self.rng.integers(0, m.height, size=n)
        pol = self.rng.choice(np.array([-1, 1], dtype=np.int64), size=n)
        return t, x, y, pol

    def _apply_refractory(self, t: np.ndarray, x: np.ndarray, y: np.ndarray,
                          pol: np.ndarray) -> EventArrays:
        if len(t) == 0:
            return t, x, y, pol
        dead = self.model.refractory_us
        last = self._last_fire
        pid = (y * self.model.width + x).astype(np.int64)
        keep = np.empty(len(t), dtype=bool)
        for i in range(len(t)):
            p = pid[i]
            ok = t[i] - last[p] >= dead
            keep[i] = ok
            if ok:
                last[p] = t[i]
        return t[keep], x[keep], y[keep], pol[keep]


# ---------------------------------------------------------------------------
# Event log I/O: `t_us,x,y,polarity`, strictly time-sorted
# ---------------------------------------------------------------------------

EVENT_LOG_HEADER = ["t_us", "x", "y", "polarity"]


def write_event_log(path: str, events: Iterable[Tuple[int, int, int, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_LOG_HEADER)
        for row in events:
            w.writerow(row)


def read_event_log(path: str) -> EventArrays:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.int64)
    if data.size == 0:
        return (np.empty(0, np.int64),) * 4  # type: ignore[return-value]
    data = np.atleast_2d(data)
    t = data[:, 0]
    if np.any(np.diff(t) < 0):
        raise ConfigError(f"event log {path} is not time-sorted")
    return t, data[:, 1], data[:, 2], data[:, 3]
