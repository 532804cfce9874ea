import { describe, expect, it } from "vitest";

import {
  SequenceTracker,
  decodeCloudFrame,
  encodeImpactorPose,
  parseStreamMessage,
} from "../src/wsframes";
import { encodeFrame } from "./stubs";

describe("decodeCloudFrame", () => {
  it("round-trips an encoded frame", () => {
    const points = [
      [1.5, -2.25, 600],
      [0, 0.5, 612.5],
    ];
    const frame = decodeCloudFrame(encodeFrame(7, points));
    expect(frame.seq).toBe(7);
    expect(frame.count).toBe(2);
    expect(Array.from(frame.points)).toEqual(points.flat());
  });

  it("decodes an empty frame", () => {
    const frame = decodeCloudFrame(encodeFrame(1, []));
    expect(frame.count).toBe(0);
    expect(frame.points).toHaveLength(0);
  });

  it("rejects truncated buffers", () => {
    expect(() => decodeCloudFrame(new ArrayBuffer(4))).toThrow(/too short/);
    const bad = encodeFrame(1, [[0, 0, 0]]).slice(0, 12);
    expect(() => decodeCloudFrame(bad)).toThrow(/length/);
  });
});

describe("SequenceTracker", () => {
  it("reports zero missed frames for a contiguous stream", () => {
    const tracker = new SequenceTracker();
    expect([1, 2, 3, 4].map((s) => tracker.observe(s))).toEqual([0, 0, 0, 0]);
    expect(tracker.gaps).toBe(0);
  });

  it("counts the size of each gap", () => {
    const tracker = new SequenceTracker();
    tracker.observe(1);
    expect(tracker.observe(5)).toBe(3);
    expect(tracker.observe(6)).toBe(0);
    expect(tracker.gaps).toBe(1);
  });

  it("reset forgets history", () => {
    const tracker = new SequenceTracker();
    tracker.observe(1);
    tracker.observe(10);
    tracker.reset();
    expect(tracker.observe(50)).toBe(0);
    expect(tracker.gaps).toBe(0);
  });
});

describe("stream messages", () => {
  it("parses alignment and error messages", () => {
    const a = parseStreamMessage('{"type":"alignment","seq":3,"axis_deg":0.5,"tip_mm":1.2}');
    expect(a).toMatchObject({ type: "alignment", axis_deg: 0.5 });
    const e = parseStreamMessage('{"type":"error","message":"nope"}');
    expect(e).toMatchObject({ type: "error", message: "nope" });
  });

  it("rejects unknown message types", () => {
    expect(() => parseStreamMessage('{"type":"mystery"}')).toThrow(/unknown/);
  });

  it("encodes impactor pose messages", () => {
    const text = encodeImpactorPose([1, 0, 0, 0], [0, 0, 600]);
    expect(JSON.parse(text)).toEqual({
      type: "impactor_pose",
      q: [1, 0, 0, 0],
      t_mm: [0, 0, 600],
    });
  });
});
