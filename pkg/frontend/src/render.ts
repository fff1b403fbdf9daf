// Canvas rendering of a telemetry frame: the reference disk with its
// black/white horizon, the dualcopter attitude bar, the estimate needle
// (dimmed while the estimator is below its measurement gate), the event
// scatter panel, and the duty bars. Every number shown comes straight from
// the frame; the console never re-simulates.

import { SessionConfig, TelemetryFrame } from "./protocol.js";

export interface Layout {
  diskCx: number;
  diskCy: number;
  diskR: number;
  scatterX: number;
  scatterY: number;
  scatterScale: number;
}

export function layoutFor(width: number, height: number, cfg: SessionConfig): Layout {
  const diskR = Math.min(width * 0.28, height * 0.42);
  return {
    diskCx: width * 0.3,
    diskCy: height * 0.46,
    diskR,
    scatterX: width * 0.62,
    scatterY: height * 0.12,
    scatterScale: Math.min((width * 0.34) / cfg.width, (height * 0.6) / cfg.height),
  };
}

/** Needle opacity: full when the last window cleared the line-count gate. */
export function needleAlpha(peakCount: number, minLineCount: number): number {
  return peakCount >= minLineCount ? 1.0 : 0.25;
}

export function eventColor(polarity: number): string {
  return polarity > 0 ? "#4caf50" : "#b9544b";
}

const DEG = Math.PI / 180;

function angleLine(cx: number, cy: number, r: number, deg: number): [number, number, number, number] {
  // zero up, CCW positive on screen (y down flips the x component)
  const dx = -Math.sin(deg * DEG);
  const dy = -Math.cos(deg * DEG);
  return [cx - dx * r, cy - dy * r, cx + dx * r, cy + dy * r];
}

export function drawFrame(ctx: CanvasRenderingContext2D, lay: Layout,
                          cfg: SessionConfig, frame: TelemetryFrame): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  ctx.clearRect(0, 0, w, h);

  // reference disk: white half above the horizon at disk_angle
  ctx.save();
  ctx.translate(lay.diskCx, lay.diskCy);
  ctx.rotate(-frame.disk_angle_deg * DEG);
  ctx.fillStyle = "#f4f1ea";
  ctx.beginPath();
  ctx.arc(0, 0, lay.diskR, Math.PI, 2 * Math.PI);
  ctx.closePath();
  ctx.fill();
  ctx.fillStyle = "#161616";
  ctx.beginPath();
  ctx.arc(0, 0, lay.diskR, 0, Math.PI);
  ctx.closePath();
  ctx.fill();
  ctx.restore();
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(lay.diskCx, lay.diskCy, lay.diskR, 0, 2 * Math.PI);
  ctx.stroke();

  // dualcopter attitude bar (true roll)
  const bar = angleLine(lay.diskCx, lay.diskCy, lay.diskR * 1.18, frame.alpha_true_deg + 90);
  ctx.strokeStyle = "#3a79c9";
  ctx.lineWidth = 6;
  ctx.lineCap = "round";
  ctx.beginPath();
  ctx.moveTo(bar[0], bar[1]);
  ctx.lineTo(bar[2], bar[3]);
  ctx.stroke();

  // estimate needle, dimmed in the no-measurement state
  if (frame.alpha_est_deg !== null) {
    const needle = angleLine(lay.diskCx, lay.diskCy, lay.diskR * 1.05,
                             frame.alpha_est_deg + 90);
    ctx.globalAlpha = needleAlpha(frame.peak_count, cfg.min_line_count);
    ctx.strokeStyle = "#e8a33d";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(needle[0], needle[1]);
    ctx.lineTo(needle[2], needle[3]);
    ctx.stroke();
    ctx.globalAlpha = 1.0;
  }

  // event scatter panel (sensor frame)
  const sw = cfg.width * lay.scatterScale;
  const sh = cfg.height * lay.scatterScale;
  ctx.strokeStyle = "#444";
  ctx.lineWidth = 1;
  ctx.strokeRect(lay.scatterX, lay.scatterY, sw, sh);
  for (const [x, y, pol] of frame.events) {
    ctx.fillStyle = eventColor(pol);
    ctx.fillRect(lay.scatterX + x * lay.scatterScale,
                 lay.scatterY + y * lay.scatterScale, 2, 2);
  }

  // duty bars
  const bx = lay.scatterX;
  const by = lay.scatterY + sh + 24;
  ctx.fillStyle = "#777";
  ctx.fillRect(bx, by, 120, 10);
  ctx.fillRect(bx, by + 18, 120, 10);
  ctx.fillStyle = "#3a79c9";
  ctx.fillRect(bx, by, 120 * Math.min(1, Math.max(0, frame.duty1)), 10);
  ctx.fillRect(bx, by + 18, 120 * Math.min(1, Math.max(0, frame.duty2)), 10);

  // readouts
  ctx.fillStyle = "#ccc";
  ctx.font = "13px monospace";
  const est = frame.alpha_est_deg === null ? "  ---" : frame.alpha_est_deg.toFixed(1);
  ctx.fillText(`disk ${frame.disk_angle_deg.toFixed(1)}°  roll ` +
               `${frame.alpha_true_deg.toFixed(1)}°  est ${est}°  ` +
               `peak ${frame.peak_count}`, 16, h - 16);
}
