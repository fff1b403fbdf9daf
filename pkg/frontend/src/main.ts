// Console entry point: one socket, a latest-frame mailbox, and a render
// loop decoupled from message arrival. Reconnects keep the last frame
// frozen behind a banner; the batch simulator never depends on this page.

import { LatestMailbox } from "./mailbox.js";
import { parseMessage, SessionConfig, TelemetryFrame } from "./protocol.js";
import { drawFrame, layoutFor, Layout } from "./render.js";
import { DragTracker, dragAngleDeg, RateRamp, SteerChannel } from "./steer.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner") as HTMLElement;
const fpsEl = document.getElementById("fps") as HTMLElement;
const rateSlider = document.getElementById("rate") as HTMLInputElement;
const rateLabel = document.getElementById("rate-label") as HTMLElement;

const mailbox = new LatestMailbox<TelemetryFrame>();
let cfg: SessionConfig | null = null;
let layout: Layout | null = null;
let lastFrame: TelemetryFrame | null = null;
let socket: WebSocket | null = null;

const channel = new SteerChannel((msg) => {
  if (socket && socket.readyState === WebSocket.OPEN) socket.send(msg);
});
const ramp = new RateRamp(channel);
const drag = new DragTracker();
let dragging = false;

function connect(): void {
  socket = new WebSocket(`ws://${location.host}/ws`);
  socket.addEventListener("open", () => {
    banner.style.display = "none";
  });
  socket.addEventListener("message", (ev) => {
    const msg = parseMessage(String(ev.data));
    if (!msg) return;
    if (msg.kind === "config") {
      cfg = msg;
      layout = layoutFor(canvas.width, canvas.height, msg);
    } else {
      mailbox.put(msg);
    }
  });
  socket.addEventListener("close", () => {
    banner.style.display = "block";     // last frame stays frozen
    setTimeout(connect, 1000);
  });
  socket.addEventListener("error", () => socket?.close());
}

canvas.addEventListener("pointerdown", (ev) => {
  if (!layout) return;
  dragging = true;
  canvas.setPointerCapture(ev.pointerId);
  const raw = dragAngleDeg(layout.diskCx, layout.diskCy, ev.offsetX, ev.offsetY);
  drag.start(raw, lastFrame ? lastFrame.disk_angle_deg : 0);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || !layout) return;
  const raw = dragAngleDeg(layout.diskCx, layout.diskCy, ev.offsetX, ev.offsetY);
  ramp.setAngle(drag.move(raw), performance.now());
});
canvas.addEventListener("pointerup", () => {
  dragging = false;
  drag.end();
});

rateSlider.addEventListener("input", () => {
  const rate = Number(rateSlider.value);
  rateLabel.textContent = `${rate} °/s`;
  ramp.setRate(rate, performance.now());
});

let frames = 0;
let fpsWindowStart = performance.now();

function loop(now: number): void {
  ramp.tick(now);
  const frame = mailbox.take();
  if (frame && cfg && layout) {
    lastFrame = frame;
    drawFrame(ctx, layout, cfg, frame);
    frames += 1;
  }
  if (now - fpsWindowStart >= 1000) {
    fpsEl.textContent = `${frames} fps`;
    frames = 0;
    fpsWindowStart = now;
  }
  requestAnimationFrame(loop);
}

connect();
requestAnimationFrame(loop);
