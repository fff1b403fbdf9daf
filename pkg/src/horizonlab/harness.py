"""Closed-loop experiment orchestration at 1 kHz.

Tick ordering is fixed: release delayed events -> estimator tick (or
encoder/true-state read) -> PD controller -> push thrust command into the
command delay line -> ten 100 us physics sub-steps (with camera event
generation over the elapsed tick). Batch runs advance the simulated clock
as fast as possible; only the live server paces against wall time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .camera import CameraModel, EventCamera
from .controller import ControllerGains, ThrustMap, allocate, gains_from, pd_torque, thrust_to_duty
from .dynamics import (
    DelayLine,
    EncoderBank,
    EventDelayLine,
    PHYSICS_DT_US,
    PlantParams,
    ReferenceConfig,
    TICK_DT_US,
    US_PER_S,
    WorldState,
    reference_signal,
    step_physics,
)
from .errors import ConfigError, SimulationFault
from .estimator import HorizonEstimator
from .logs import (
    COMMAND_HEADER,
    ESTIMATE_HEADER,
    TRAJECTORY_HEADER,
    write_csv,
    write_json_report,
)

SCENARIOS = ("step", "sine", "constant_rate", "coast", "manual")
FEEDBACK_MODES = ("vision", "encoder", "true")
REFERENCE_TARGETS = ("attitude", "disk")

# camera sweeps are subdivided below the aliasing limit with margin
MAX_SWEEP_RAD = 0.9 * math.pi / 2


@dataclass(frozen=True)
class DelayConfig:
    """Transport and compute latencies (us)."""

    event_us: int = 5000       # world -> estimator event transport
    command_us: int = 500      # controller -> motor command transport
    encoder_us: int = 1000     # encoder sample age at use
    compute_us: int = 700      # estimation compute latency (vision mode)

    def validate(self) -> None:
        if min(self.event_us, self.command_us, self.encoder_us, self.compute_us) < 0:
            raise ConfigError("delays must be >= 0")


@dataclass(frozen=True)
class GainSpec:
    """Either (tau, zeta[, J]) for synthesis or explicit (k_p, k_d)."""

    tau: float = 0.149
    zeta: float = 0.7
    J: Optional[float] = None        # defaults to the plant inertia
    k_p: Optional[float] = None
    k_d: Optional[float] = None

    def resolve(self, plant: PlantParams) -> ControllerGains:
        if self.k_p is not None or self.k_d is not None:
            if self.k_p is None or self.k_d is None:
                raise ConfigError("explicit gains need both k_p and k_d")
            if self.k_p <= 0 or self.k_d < 0:
                raise ConfigError("explicit gains must be positive")
            return ControllerGains(k_p=self.k_p, k_d=self.k_d, tau=self.tau,
                                   zeta=self.zeta, J=self.J or plant.J)
        return gains_from(self.tau, self.zeta, self.J if self.J is not None else plant.J)


@dataclass(frozen=True)
class EstimatorConfig:
    q_alpha: float = 1.0
    q_rate: float = 10000.0
    r: float = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "step"
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    reference_target: str = "attitude"
    feedback: str = "vision"
    plant: PlantParams = field(default_factory=PlantParams)
    camera: CameraModel = field(default_factory=CameraModel)
    thrust_map: ThrustMap = field(default_factory=ThrustMap)
    delays: DelayConfig = field(default_factory=DelayConfig)
    gains: GainSpec = field(default_factory=GainSpec)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    duration_s: float = 2.0
    seed: int = 0
    rate_feedforward: bool = False
    settle_s: float = 0.5          # metrics window start
    log_decim: int = 1             # trajectory decimation, ticks
    log_events: bool = True
    name: str = "run"
    # release kick: the estimator cannot lock on a perfectly static scene
    # (no motion, no events), so vision runs start with a small flick
    initial_alpha_deg: float = 0.0
    initial_rate_deg_s: float = 0.0

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.feedback not in FEEDBACK_MODES:
            raise ConfigError(f"unknown feedback mode {self.feedback!r}")
        if self.reference_target not in REFERENCE_TARGETS:
            raise ConfigError(f"unknown reference target {self.reference_target!r}")
        if self.duration_s <= 0:
            raise ConfigError("duration must be positive")
        if self.log_decim < 1:
            raise ConfigError("log_decim must be >= 1")
        self.reference.validate()
        self.plant.validate()
        self.camera.validate()
        self.thrust_map.validate()
        self.delays.validate()
        self.gains.resolve(self.plant)


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------

@dataclass
class RunLogs:
    """In-memory per-tick logs; the CSV files hold exactly these values."""

    t_us: List[int] = field(default_factory=list)
    alpha_true_deg: List[float] = field(default_factory=list)
    alpha_dot_true_deg_s: List[float] = field(default_factory=list)
    disk_angle_deg: List[float] = field(default_factory=list)
    f1_N: List[float] = field(default_factory=list)
    f2_N: List[float] = field(default_factory=list)

    est_t_us: List[int] = field(default_factory=list)
    alpha_est_deg: List[float] = field(default_factory=list)
    alpha_dot_est_deg_s: List[float] = field(default_factory=list)
    meas_deg: List[float] = field(default_factory=list)
    peak_count: List[int] = field(default_factory=list)
    tick_compute_us: List[float] = field(default_factory=list)

    cmd_t_us: List[int] = field(default_factory=list)
    torque_Nm: List[float] = field(default_factory=list)
    f1_cmd_N: List[float] = field(default_factory=list)
    f2_cmd_N: List[float] = field(default_factory=list)
    duty1: List[float] = field(default_factory=list)
    duty2: List[float] = field(default_factory=list)
    saturated: List[int] = field(default_factory=list)

    events: List[Tuple[int, int, int, int]] = field(default_factory=list)

    # analysis series (recomputable from the logs above + config)
    fb_alpha_deg: List[float] = field(default_factory=list)
    fb_valid: List[bool] = field(default_factory=list)
    rel_true_deg: List[float] = field(default_factory=list)
    rel_rate_deg_s: List[float] = field(default_factory=list)
    ref_deg: List[float] = field(default_factory=list)


@dataclass
class RunReport:
    config_name: str
    duration_s: float
    ticks: int
    rmse_deg: float
    availability: float
    mean_tick_compute_us: float
    rise_time_s: Optional[float]
    overshoot_frac: Optional[float]
    saturation_frac: float
    fault: Optional[str]
    log_dir: Optional[str]


@dataclass
class RunResult:
    report: RunReport
    logs: RunLogs
    config: ExperimentConfig


# ---------------------------------------------------------------------------
# The closed loop
# ---------------------------------------------------------------------------

class LiveBridge:
    """Hooks the live server plugs into a manual-scenario run.

    ``steer()`` returns the latest commanded disk angle (rad) or None;
    ``publish()`` receives telemetry frames every ``telemetry_interval_us``;
    ``pace()`` may sleep to align simulated and wall time and returns False
    to stop the run.
    """

    telemetry_interval_us: int = 16_667   # ~60 Hz

    def steer(self) -> Optional[float]:
        return None

    def publish(self, frame: dict) -> None:
        pass

    def pace(self, t_us: int) -> bool:
        return True


def run_experiment(cfg: ExperimentConfig, outdir: Optional[str] = None,
                   live: Optional[LiveBridge] = None) -> RunResult:
    """Run one deterministic closed-loop experiment and collect its logs."""
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    gains = cfg.gains.resolve(cfg.plant)
    plant = cfg.plant
    vision = cfg.feedback == "vision"

    camera = EventCamera(cfg.camera, np.random.default_rng(seeds[0])) if vision else None
    estimator = HorizonEstimator(cx=cfg.camera.cx, cy=cfg.camera.cy,
                                 q_alpha=cfg.estimator.q_alpha,
                                 q_rate=cfg.estimator.q_rate,
                                 r=cfg.estimator.r) if vision else None
    encoders = EncoderBank(np.random.default_rng(seeds[1]))

    event_line = EventDelayLine(cfg.delays.event_us)
    cmd_delay = cfg.delays.command_us + (cfg.delays.compute_us if vision else 0)
    command_line = DelayLine(cmd_delay, name="command")
    encoder_line = DelayLine(cfg.delays.encoder_us, name="encoder")

    state = WorldState(alpha=math.radians(cfg.initial_alpha_deg),
                       alpha_dot=math.radians(cfg.initial_rate_deg_s),
                       f1=plant.f0, f2=plant.f0, f1_cmd=plant.f0, f2_cmd=plant.f0)
    logs = RunLogs()
    manual_angle: Optional[float] = None
    u_next = 0.0                    # commanded velocity increment for the KF
    prev_enc_rel: Optional[float] = None
    prev_ref = 0.0
    prev_disk = state.disk_angle
    rel_prev = state.alpha - state.disk_angle
    fault: Optional[str] = None
    n_ticks = int(round(cfg.duration_s * US_PER_S / TICK_DT_US))
    controlled = cfg.scenario != "coast"
    drive_disk = cfg.reference_target == "disk"
    tick_s = TICK_DT_US / 1e6
    live_events: deque = deque()    # trailing event batches for telemetry
    next_publish = 0

    try:
        for k in range(n_ticks):
            now = k * TICK_DT_US
            if live is not None:
                steer = live.steer()
                if steer is not None:
                    manual_angle = steer
                if not live.pace(now):
                    break

            # disk rate over the last tick (ground truth for relative state)
            disk_rate = (state.disk_angle - prev_disk) / tick_s
            prev_disk = state.disk_angle

            # 1. sensing
            fb_alpha = fb_rate = 0.0   # relative roll, deg / deg/s
            fb_valid = False
            meas_deg = math.nan
            peak_count = 0
            compute_us = 0.0
            if vision:
                t_ev, x_ev, y_ev, _ = event_line.pop_ready(now)
                res = estimator.tick(now, t_ev, x_ev, y_ev, u_next)
                if res.state.initialized:
                    fb_alpha, fb_rate, fb_valid = res.state.alpha, res.state.alpha_dot, True
                if res.measurement is not None:
                    meas_deg = res.measurement.z
                peak_count = res.peak_count
                compute_us = res.compute_us
            elif cfg.feedback == "encoder":
                enc_rel = encoders.read(state, "dualcopter") - encoders.read(state, "disk")
                encoder_line.push(now, enc_rel)
                encoder_line.pop_ready(now)
                if encoder_line.held is not None:
                    fb_alpha = encoder_line.held
                    if prev_enc_rel is not None:
                        fb_rate = (fb_alpha - prev_enc_rel) / tick_s
                    prev_enc_rel = fb_alpha
                    fb_valid = True
            else:   # true-state feedback
                fb_alpha = math.degrees(state.alpha - state.disk_angle)
                fb_rate = math.degrees(state.alpha_dot - disk_rate)
                fb_valid = True

            # 2. reference and control
            ref = reference_signal(cfg.reference, now, manual_angle)
            if drive_disk:
                alpha_des_rel = 0.0
            else:
                alpha_des_rel = ref
            rate_des = 0.0
            if cfg.rate_feedforward and not drive_disk:
                rate_des = (ref - prev_ref) / tick_s
            prev_ref = ref

            if controlled and fb_valid:
                torque = pd_torque(math.radians(fb_alpha), math.radians(fb_rate),
                                   alpha_des_rel, rate_des, gains)
                f1c, f2c, sat = allocate(torque, plant)
            else:
                torque, (f1c, f2c, sat) = 0.0, (plant.f0, plant.f0, False)
            u_next = math.degrees(torque / plant.J) * (TICK_DT_US / 1e6)

            # 3. command transport
            if controlled:
                command_line.push(now, (f1c, f2c))

            # logging at the tick boundary (state is at time `now`)
            logs.t_us.append(state.t)
            logs.alpha_true_deg.append(math.degrees(state.alpha))
            logs.alpha_dot_true_deg_s.append(math.degrees(state.alpha_dot))
            logs.disk_angle_deg.append(math.degrees(state.disk_angle))
            logs.f1_N.append(state.f1)
            logs.f2_N.append(state.f2)
            d1, _ = thrust_to_duty(f1c, cfg.thrust_map)
            d2, _ = thrust_to_duty(f2c, cfg.thrust_map)
            logs.cmd_t_us.append(now)
            logs.torque_Nm.append(torque)
            logs.f1_cmd_N.append(f1c)
            logs.f2_cmd_N.append(f2c)
            logs.duty1.append(d1)
            logs.duty2.append(d2)
            logs.saturated.append(int(sat))
            if vision:
                logs.est_t_us.append(now)
                logs.alpha_est_deg.append(fb_alpha if fb_valid else math.nan)
                logs.alpha_dot_est_deg_s.append(fb_rate if fb_valid else math.nan)
                logs.meas_deg.append(meas_deg)
                logs.peak_count.append(peak_count)
                logs.tick_compute_us.append(compute_us)
            # derived in the degree domain of the logged columns, so offline
            # recomputation from the CSVs is bit-exact
            logs.fb_alpha_deg.append(fb_alpha)
            logs.fb_valid.append(fb_valid)
            logs.rel_true_deg.append(logs.alpha_true_deg[-1] - logs.disk_angle_deg[-1])
            if k == 0:
                disk_rate_deg = 0.0
            else:
                disk_rate_deg = (logs.disk_angle_deg[-1] - logs.disk_angle_deg[-2]) / tick_s
            logs.rel_rate_deg_s.append(logs.alpha_dot_true_deg_s[-1] - disk_rate_deg)
            logs.ref_deg.append(math.degrees(ref))

            # 4. physics sub-steps (the disk is kinematic, sampled per sub-step)
            for _ in range(TICK_DT_US // PHYSICS_DT_US):
                command_line.pop_ready(state.t)
                if command_line.held is not None:
                    h1, h2 = command_line.held
                    if state.f1_cmd != h1 or state.f2_cmd != h2:
                        state = replace(state, f1_cmd=h1, f2_cmd=h2)
                if drive_disk:
                    target = reference_signal(cfg.reference, state.t + PHYSICS_DT_US,
                                              manual_angle)
                    if state.disk_angle != target:
                        state = replace(state, disk_angle=target)
                state = step_physics(state, PHYSICS_DT_US, plant)

            # 5. camera: events of this tick's relative motion
            if vision:
                rel_now = state.alpha - state.disk_angle
                batch = _generate_tick_events(camera, rel_prev, rel_now, now,
                                              now + TICK_DT_US)
                if batch is not None and len(batch[0]):
                    event_line.push_batch(*batch)
                    if cfg.log_events:
                        logs.events.extend(zip(*(a.tolist() for a in batch)))
                    if live is not None:
                        live_events.append(batch)
                rel_prev = rel_now

            if live is not None:
                while live_events and int(live_events[0][0][-1]) < now - 30_000:
                    live_events.popleft()
                if now >= next_publish:
                    next_publish = now + live.telemetry_interval_us
                    live.publish(_telemetry_frame(state, logs, fb_alpha, fb_valid,
                                                  peak_count, d1, d2, live_events))
    except SimulationFault as exc:
        fault = str(exc)

    report = summarize(cfg, logs, fault)
    if outdir is not None:
        write_run_logs(outdir, cfg, logs, report)
        report.log_dir = str(outdir)
    return RunResult(report=report, logs=logs, config=cfg)


def _generate_tick_events(camera: EventCamera, rel_from: float, rel_to: float,
                          t0: int, t1: int):
    """Camera call with sweep subdivision below the pi/2 aliasing limit."""
    sweep = rel_to - rel_from
    if sweep == 0.0 and camera.model.noise_rate <= 0.0:
        return None
    n_chunks = max(1, int(math.ceil(abs(sweep) / MAX_SWEEP_RAD)))
    if n_chunks == 1:
        return camera.generate_event_arrays(rel_from, rel_to, t0, t1)
    parts = []
    for i in range(n_chunks):
        a = rel_from + sweep * i / n_chunks
        b = rel_from + sweep * (i + 1) / n_chunks
        ta = t0 + (t1 - t0) * i // n_chunks
        tb = t0 + (t1 - t0) * (i + 1) // n_chunks
        parts.append(camera.generate_event_arrays(a, b, ta, max(tb, ta + 1)))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))


MAX_TELEMETRY_EVENTS = 2000


def _telemetry_frame(state, logs, fb_alpha, fb_valid, peak_count, d1, d2,
                     live_events) -> dict:
    n_total = sum(len(b[0]) for b in live_events)
    stride = max(1, -(-n_total // MAX_TELEMETRY_EVENTS))
    events = []
    for bt, bx, by, bp in live_events:
        for i in range(0, len(bt), stride):
            events.append([int(bx[i]), int(by[i]), int(bp[i])])
    return {
        "kind": "telemetry",
        "t_us": state.t,
        "disk_angle_deg": math.degrees(state.disk_angle),
        "alpha_true_deg": math.degrees(state.alpha),
        "alpha_est_deg": (math.degrees(state.disk_angle) + fb_alpha) if fb_valid else None,
        "alpha_dot_est_deg_s": logs.alpha_dot_est_deg_s[-1] if logs.alpha_dot_est_deg_s else None,
        "peak_count": peak_count,
        "duty1": d1,
        "duty2": d2,
        "events": events,
    }


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def summarize(cfg: ExperimentConfig, logs: RunLogs, fault: Optional[str]) -> RunReport:
    n = len(logs.cmd_t_us)
    settle_tick = int(cfg.settle_s * 1000)
    rmse = math.nan
    availability = math.nan
    mean_compute = math.nan

    if cfg.feedback == "vision" and n:
        compute_s = cfg.delays.compute_us / 1e6
        errs = []
        n_meas = 0
        n_win = 0
        for k in range(min(settle_tick, n), n):
            n_win += 1
            if not math.isnan(logs.meas_deg[k]):
                n_meas += 1
            if logs.fb_valid[k]:
                # estimate published at tick + compute vs truth then
                truth = logs.rel_true_deg[k] + logs.rel_rate_deg_s[k] * compute_s
                errs.append(logs.fb_alpha_deg[k] - truth)
        if errs:
            rmse = math.sqrt(float(np.mean(np.square(errs))))
        if n_win:
            availability = n_meas / n_win
        if logs.tick_compute_us:
            mean_compute = float(np.mean(logs.tick_compute_us))

    rise_time = overshoot = None
    if cfg.scenario == "step" and n:
        target = math.radians(cfg.reference.amplitude_deg)
        if target != 0.0:
            rel = np.radians(np.array(logs.rel_true_deg))
            t_s = np.array(logs.cmd_t_us) / 1e6
            start = cfg.reference.t_start_s
            frac = rel / target
            above10 = np.nonzero((t_s >= start) & (frac >= 0.1))[0]
            above90 = np.nonzero((t_s >= start) & (frac >= 0.9))[0]
            if len(above10) and len(above90):
                rise_time = float(t_s[above90[0]] - t_s[above10[0]])
            overshoot = float(frac.max() - 1.0)

    saturation = float(np.mean(logs.saturated)) if logs.saturated else 0.0
    return RunReport(config_name=cfg.name, duration_s=cfg.duration_s, ticks=n,
                     rmse_deg=rmse, availability=availability,
                     mean_tick_compute_us=mean_compute, rise_time_s=rise_time,
                     overshoot_frac=overshoot, saturation_frac=saturation,
                     fault=fault, log_dir=None)


def write_run_logs(outdir: str, cfg: ExperimentConfig, logs: RunLogs,
                   report: RunReport) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.log_decim
    write_csv(out / "trajectory.csv", TRAJECTORY_HEADER,
              zip(logs.t_us[::d], logs.alpha_true_deg[::d],
                  logs.alpha_dot_true_deg_s[::d], logs.disk_angle_deg[::d],
                  logs.f1_N[::d], logs.f2_N[::d]))
    write_csv(out / "commands.csv", COMMAND_HEADER,
              zip(logs.cmd_t_us, logs.torque_Nm, logs.f1_cmd_N, logs.f2_cmd_N,
                  logs.duty1, logs.duty2, logs.saturated))
    if cfg.feedback == "vision":
        write_csv(out / "estimate.csv", ESTIMATE_HEADER,
                  zip(logs.est_t_us, logs.alpha_est_deg, logs.alpha_dot_est_deg_s,
                      logs.meas_deg, logs.peak_count, logs.tick_compute_us))
        if cfg.log_events:
            write_csv(out / "events.csv", ["t_us", "x", "y", "polarity"], logs.events)
    payload = {"report": report.__dict__, "config_name": cfg.name,
               "scenario": cfg.scenario, "feedback": cfg.feedback,
               "seed": cfg.seed, "fault": report.fault}
    write_json_report(out / "report.json", payload)
