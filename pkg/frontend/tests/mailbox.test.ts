import { describe, expect, it } from "vitest";
import { LatestMailbox } from "../src/mailbox.js";

describe("LatestMailbox", () => {
  it("hands out the freshest value once", () => {
    const box = new LatestMailbox<number>();
    expect(box.take()).toBeNull();
    box.put(1);
    box.put(2);
    box.put(3);
    expect(box.take()).toBe(3);
    expect(box.take()).toBeNull();
    expect(box.dropped).toBe(2);
  });

  it("peek does not consume", () => {
    const box = new LatestMailbox<string>();
    box.put("frame");
    expect(box.peek()).toBe("frame");
    expect(box.take()).toBe("frame");
  });
});
