import { describe, expect, it } from "vitest";

import { decodeFrame, parseServerMsg, type StateMsg } from "../src/protocol.js";

function stateMsg(overrides: Partial<StateMsg> = {}): StateMsg {
  const bytes = Uint8Array.from({ length: 12 }, (_, i) => i);
  return {
    type: "state",
    tick: 7,
    joints: [0, 0, 0, 0, 0, 0],
    master: [0.3, 0.2, -0.1],
    tip: [0.31, 0.19, -0.12],
    f_env: [0, 0, 0],
    level: 0.5,
    recording: false,
    frame: btoa(String.fromCharCode(...bytes)),
    width: 2,
    height: 2,
    channels: 3,
    ...overrides,
  };
}

describe("parseServerMsg", () => {
  it("accepts a complete state message", () => {
    const out = parseServerMsg(JSON.stringify(stateMsg()));
    expect(out.ok).toBe(true);
    if (out.ok) expect(out.msg.type).toBe("state");
  });

  it("accepts info, ack, and error messages", () => {
    const info = {
      type: "info",
      protocol: 1,
      tick_hz: 20,
      image_hw: 64,
      frame_period: 4,
      view: { x0: -0.04, y0: -0.1, extent: 0.8 },
      positions: 7,
      colors: ["yellow", "green"],
      fills: ["high", "low"],
      scene: { bowl_x: 0.42, color: "yellow", fill: "high" },
      recording: false,
    };
    expect(parseServerMsg(JSON.stringify(info)).ok).toBe(true);
    expect(parseServerMsg(JSON.stringify({ type: "ack", of: "record" })).ok).toBe(true);
    expect(parseServerMsg(JSON.stringify({ type: "error", message: "nope" })).ok).toBe(true);
  });

  it("rejects junk without throwing", () => {
    expect(parseServerMsg("{not json").ok).toBe(false);
    expect(parseServerMsg('"plain string"').ok).toBe(false);
    expect(parseServerMsg("{}").ok).toBe(false);
    expect(parseServerMsg(JSON.stringify({ type: "surprise" })).ok).toBe(false);
  });

  it("rejects a state message with missing fields", () => {
    const msg: Record<string, unknown> = { ...stateMsg() };
    delete msg["frame"];
    expect(parseServerMsg(JSON.stringify(msg)).ok).toBe(false);
  });

  it("rejects an info message whose view is incomplete", () => {
    const out = parseServerMsg(
      JSON.stringify({
        type: "info",
        tick_hz: 20,
        image_hw: 64,
        view: { x0: 0 },
        positions: 7,
        colors: [],
        fills: [],
        scene: {},
      }),
    );
    expect(out.ok).toBe(false);
  });
});

describe("decodeFrame", () => {
  it("expands raw RGB rows to RGBA", () => {
    const decoded = decodeFrame(stateMsg());
    expect(decoded).not.toBeNull();
    expect(decoded!.rgba.length).toBe(2 * 2 * 4);
    expect([...decoded!.rgba.slice(0, 4)]).toEqual([0, 1, 2, 255]);
    expect([...decoded!.rgba.slice(4, 8)]).toEqual([3, 4, 5, 255]);
    expect(decoded!.rgba[15]).toBe(255);
  });

  it("returns null when dims disagree with the payload", () => {
    expect(decodeFrame(stateMsg({ width: 3 }))).toBeNull();
    expect(decodeFrame(stateMsg({ height: 5 }))).toBeNull();
  });

  it("returns null for unsupported channel counts and bad base64", () => {
    expect(decodeFrame(stateMsg({ channels: 4 }))).toBeNull();
    expect(decodeFrame(stateMsg({ frame: "@@not-base64@@" }))).toBeNull();
    expect(decodeFrame(stateMsg({ width: 0, height: 0 }))).toBeNull();
    expect(decodeFrame(stateMsg({ width: 2.5 }))).toBeNull();
  });
});
