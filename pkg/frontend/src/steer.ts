// Steering input: drag gestures set the disk angle directly, the rate
// slider advances it as a constant-rate ramp. Messages are coalesced and
// rate-limited; silence means no messages, never zero-commands.

import { steerMessage } from "./protocol.js";

export const MAX_STEER_HZ = 120;

export class SteerChannel {
  private pendingDeg: number | null = null;
  private lastSentMs = -Infinity;
  private readonly minIntervalMs: number;
  sent = 0;

  constructor(
    private readonly send: (msg: string) => void,
    maxHz: number = MAX_STEER_HZ,
  ) {
    this.minIntervalMs = 1000 / maxHz;
  }

  /** Queue a target angle; the newest value wins within a rate window. */
  setAngle(angleDeg: number, nowMs: number): void {
    this.pendingDeg = angleDeg;
    this.flush(nowMs);
  }

  /** Emit the pending angle if the rate limit allows; call again on ticks. */
  flush(nowMs: number): void {
    if (this.pendingDeg === null) return;
    if (nowMs - this.lastSentMs < this.minIntervalMs) return;
    this.send(steerMessage(this.pendingDeg));
    this.lastSentMs = nowMs;
    this.pendingDeg = null;
    this.sent += 1;
  }
}

/** Angle of a pointer position about a center, degrees, CCW positive,
 *  zero pointing up (matches the disk's horizon convention). */
export function dragAngleDeg(cx: number, cy: number, x: number, y: number): number {
  return (Math.atan2(cx - x, cy - y) * 180) / Math.PI;
}

/** Accumulates drag motion without the +-180 wrap snapping the disk. */
export class DragTracker {
  private lastRaw: number | null = null;
  angleDeg = 0;

  start(raw: number, currentDeg: number): void {
    this.lastRaw = raw;
    this.angleDeg = currentDeg;
  }

  move(raw: number): number {
    if (this.lastRaw === null) {
      this.lastRaw = raw;
      return this.angleDeg;
    }
    let delta = raw - this.lastRaw;
    if (delta > 180) delta -= 360;
    if (delta < -180) delta += 360;
    this.angleDeg += delta;
    this.lastRaw = raw;
    return this.angleDeg;
  }

  end(): void {
    this.lastRaw = null;
  }
}

/** Constant-rate ramp for the high-speed demonstration slider. */
export class RateRamp {
  private rateDegS = 0;
  private lastMs: number | null = null;

  constructor(private readonly channel: SteerChannel, startDeg = 0) {
    this.angleDeg = startDeg;
  }

  angleDeg: number;

  setRate(rateDegS: number, nowMs: number): void {
    this.advance(nowMs);
    this.rateDegS = rateDegS;
    this.lastMs = nowMs;
  }

  get rate(): number {
    return this.rateDegS;
  }

  private advance(nowMs: number): void {
    if (this.lastMs !== null && this.rateDegS !== 0) {
      this.angleDeg += (this.rateDegS * (nowMs - this.lastMs)) / 1000;
    }
  }

  /** Advance the ramp; emits only while the rate is nonzero. */
  tick(nowMs: number): void {
    if (this.lastMs === null) {
      this.lastMs = nowMs;
      return;
    }
    if (this.rateDegS !== 0) {
      this.advance(nowMs);
      this.channel.setAngle(this.angleDeg, nowMs);
    } else {
      this.channel.flush(nowMs);
    }
    this.lastMs = nowMs;
  }

  /** External angle set (drag while the slider is idle). */
  setAngle(angleDeg: number, nowMs: number): void {
    this.angleDeg = angleDeg;
    this.channel.setAngle(angleDeg, nowMs);
    this.lastMs = nowMs;
  }
}
