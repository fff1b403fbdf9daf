// Wire types for the telemetry socket. Unknown message kinds and unknown
// fields are ignored so the console stays forward compatible.

export interface TelemetryFrame {
  kind: "telemetry";
  t_us: number;
  disk_angle_deg: number;
  alpha_true_deg: number;
  alpha_est_deg: number | null;
  alpha_dot_est_deg_s: number | null;
  peak_count: number;
  duty1: number;
  duty2: number;
  /** decimated trailing events as [x, y, polarity] triples */
  events: Array<[number, number, number]>;
}

export interface SessionConfig {
  kind: "config";
  width: number;
  height: number;
  cx: number;
  cy: number;
  disk_radius: number;
  min_line_count: number;
  telemetry_hz: number;
}

export type ServerMessage = TelemetryFrame | SessionConfig;

function finite(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function finiteOrNull(v: unknown): number | null {
  return finite(v) ? v : null;
}

/** Parse one socket message; null for anything malformed or unknown. */
export function parseMessage(data: string): ServerMessage | null {
  let raw: Record<string, unknown>;
  try {
    raw = JSON.parse(data);
  } catch {
    return null;
  }
  if (raw === null || typeof raw !== "object") return null;

  if (raw.kind === "config") {
    if (!finite(raw.width) || !finite(raw.height) || !finite(raw.disk_radius)) {
      return null;
    }
    return {
      kind: "config",
      width: raw.width,
      height: raw.height,
      cx: finite(raw.cx) ? raw.cx : raw.width / 2,
      cy: finite(raw.cy) ? raw.cy : raw.height / 2,
      disk_radius: raw.disk_radius,
      min_line_count: finite(raw.min_line_count) ? raw.min_line_count : 40,
      telemetry_hz: finite(raw.telemetry_hz) ? raw.telemetry_hz : 60,
    };
  }

  if (raw.kind === "telemetry") {
    if (!finite(raw.t_us) || !finite(raw.disk_angle_deg) || !finite(raw.alpha_true_deg)) {
      return null;
    }
    const events: Array<[number, number, number]> = [];
    if (Array.isArray(raw.events)) {
      for (const e of raw.events) {
        if (Array.isArray(e) && e.length >= 3 && finite(e[0]) && finite(e[1])) {
          events.push([e[0], e[1], e[2] === -1 ? -1 : 1]);
        }
      }
    }
    return {
      kind: "telemetry",
      t_us: raw.t_us,
      disk_angle_deg: raw.disk_angle_deg,
      alpha_true_deg: raw.alpha_true_deg,
      alpha_est_deg: finiteOrNull(raw.alpha_est_deg),
      alpha_dot_est_deg_s: finiteOrNull(raw.alpha_dot_est_deg_s),
      peak_count: finite(raw.peak_count) ? raw.peak_count : 0,
      duty1: finite(raw.duty1) ? raw.duty1 : 0,
      duty2: finite(raw.duty2) ? raw.duty2 : 0,
      events,
    };
  }
  return null;
}

export function steerMessage(angleDeg: number): string {
  return JSON.stringify({ kind: "steer", angle_deg: angleDeg });
}
