import { describe, expect, it } from "vitest";
import { DragTracker, dragAngleDeg, RateRamp, SteerChannel } from "../src/steer.js";

function collector() {
  const sent: Array<{ kind: string; angle_deg: number }> = [];
  return { sent, send: (msg: string) => sent.push(JSON.parse(msg)) };
}

describe("SteerChannel", () => {
  it("sends nothing without a gesture", () => {
    const { sent } = collector();
    const ch = new SteerChannel(collector().send);
    for (let t = 0; t < 1000; t += 16) ch.flush(t);
    expect(sent).toHaveLength(0);
  });

  it("caps the message rate and keeps the newest angle", () => {
    const { sent, send } = collector();
    const ch = new SteerChannel(send, 120);
    for (let t = 0; t <= 1000; t += 1) ch.setAngle(t * 0.09, t);
    expect(sent.length).toBeLessThanOrEqual(121);
    expect(sent.length).toBeGreaterThan(100);
    ch.flush(1010);
    expect(sent[sent.length - 1].angle_deg).toBeCloseTo(90, 1);
  });

  it("a drag ending at 90 degrees leaves 90 as the final steer", () => {
    const { sent, send } = collector();
    const ch = new SteerChannel(send, 120);
    let t = 0;
    for (let a = 0; a <= 90; a += 5) ch.setAngle(a, (t += 20));
    expect(sent[sent.length - 1].angle_deg).toBe(90);
  });
});

describe("RateRamp", () => {
  it("advances the angle at the slider rate", () => {
    const { sent, send } = collector();
    const ramp = new RateRamp(new SteerChannel(send, 120));
    ramp.setRate(1600, 0);
    for (let t = 0; t <= 1000; t += 10) ramp.tick(t);
    expect(ramp.angleDeg).toBeCloseTo(1600, 6);
    expect(sent[sent.length - 1].angle_deg).toBeCloseTo(1600, 6);
    expect(sent.length).toBeLessThanOrEqual(121);
  });

  it("stays silent at zero rate", () => {
    const { sent, send } = collector();
    const ramp = new RateRamp(new SteerChannel(send, 120));
    ramp.setRate(0, 0);
    for (let t = 0; t <= 500; t += 10) ramp.tick(t);
    expect(sent).toHaveLength(0);
  });
});

describe("dragAngleDeg", () => {
  it("is zero pointing up and grows counterclockwise", () => {
    expect(dragAngleDeg(100, 100, 100, 50)).toBeCloseTo(0);
    expect(dragAngleDeg(100, 100, 50, 100)).toBeCloseTo(90);
    expect(dragAngleDeg(100, 100, 150, 100)).toBeCloseTo(-90);
  });
});

describe("DragTracker", () => {
  it("accumulates through the +-180 wrap without snapping", () => {
    const d = new DragTracker();
    d.start(170, 170);
    expect(d.move(179)).toBeCloseTo(179);
    expect(d.move(-175)).toBeCloseTo(185);   // crossed the wrap, kept going
    expect(d.move(-120)).toBeCloseTo(240);
  });
});
