/** Bridge wire protocol: JSON objects over a WebSocket, each tagged by
 * a "type" field.  The server streams `state` at its tick rate and
 * answers commands with `ack` or `error`; everything the UI knows
 * arrives through these messages. */

export interface ViewWindow {
  x0: number;
  y0: number;
  extent: number;
}

export interface SceneDesc {
  bowl_x: number;
  color: string;
  fill: string;
}

export interface InfoMsg {
  type: "info";
  protocol: number;
  tick_hz: number;
  image_hw: number;
  frame_period: number;
  view: ViewWindow;
  positions: number;
  colors: string[];
  fills: string[];
  scene: SceneDesc;
  recording: boolean;
}

export interface StateMsg {
  type: "state";
  tick: number;
  joints: number[];
  master: number[];
  tip: number[];
  f_env: number[];
  level: number;
  recording: boolean;
  frame: string;
  width: number;
  height: number;
  channels: number;
}

export interface AckMsg {
  type: "ack";
  of: string;
  recording?: boolean;
  file?: string;
  note?: string;
  position?: number;
  color?: string;
  fill?: string;
}

export interface ErrorMsg {
  type: "error";
  message: string;
  field?: string;
}

export type ServerMsg = InfoMsg | StateMsg | AckMsg | ErrorMsg;

export interface DragMsg {
  type: "drag";
  x: number;
  y: number;
  theta: number;
}

export interface RecordMsg {
  type: "record";
  action: "start" | "stop";
  position?: number;
  color?: string;
  fill?: string;
}

export interface ResetMsg {
  type: "reset";
  position: number;
  color: string;
  fill: string;
}

export type ClientMsg = DragMsg | RecordMsg | ResetMsg;

export type ParseResult = { ok: true; msg: ServerMsg } | { ok: false; reason: string };

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function isNumberArray(v: unknown): v is number[] {
  return Array.isArray(v) && v.every((x) => typeof x === "number" && Number.isFinite(x));
}

function isStringArray(v: unknown): v is string[] {
  return Array.isArray(v) && v.every((x) => typeof x === "string");
}

function finite(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

/** Parse one server message, rejecting anything that does not carry the
 * fields its type promises.  A reject reason is for the warning line;
 * the connection itself never acts on it. */
export function parseServerMsg(text: string): ParseResult {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return { ok: false, reason: "message is not valid JSON" };
  }
  if (!isRecord(doc)) return { ok: false, reason: "message is not an object" };
  const type = doc["type"];
  if (type === "state") {
    if (
      finite(doc["tick"]) &&
      isNumberArray(doc["joints"]) &&
      isNumberArray(doc["master"]) &&
      doc["master"].length === 3 &&
      isNumberArray(doc["tip"]) &&
      doc["tip"].length === 3 &&
      isNumberArray(doc["f_env"]) &&
      finite(doc["level"]) &&
      typeof doc["recording"] === "boolean" &&
      typeof doc["frame"] === "string" &&
      finite(doc["width"]) &&
      finite(doc["height"]) &&
      finite(doc["channels"])
    ) {
      return { ok: true, msg: doc as unknown as StateMsg };
    }
    return { ok: false, reason: "state message is missing fields" };
  }
  if (type === "info") {
    const view = doc["view"];
    if (
      finite(doc["tick_hz"]) &&
      finite(doc["image_hw"]) &&
      isRecord(view) &&
      finite(view["x0"]) &&
      finite(view["y0"]) &&
      finite(view["extent"]) &&
      view["extent"] > 0 &&
      finite(doc["positions"]) &&
      isStringArray(doc["colors"]) &&
      isStringArray(doc["fills"]) &&
      isRecord(doc["scene"])
    ) {
      return { ok: true, msg: doc as unknown as InfoMsg };
    }
    return { ok: false, reason: "info message is missing fields" };
  }
  if (type === "ack") {
    if (typeof doc["of"] === "string") return { ok: true, msg: doc as unknown as AckMsg };
    return { ok: false, reason: "ack message is missing 'of'" };
  }
  if (type === "error") {
    if (typeof doc["message"] === "string") return { ok: true, msg: doc as unknown as ErrorMsg };
    return { ok: false, reason: "error message is missing 'message'" };
  }
  return { ok: false, reason: `unknown message type ${JSON.stringify(type)}` };
}

export interface DecodedFrame {
  width: number;
  height: number;
  /** RGBA rows, top row first, ready for putImageData. */
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

/** Decode the base64 raw-RGB frame carried by a state message.  Returns
 * null when the payload length disagrees with the claimed dims, so the
 * caller can keep the last good frame instead of tearing. */
export function decodeFrame(msg: StateMsg): DecodedFrame | null {
  const { width, height, channels } = msg;
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) return null;
  if (channels !== 3) return null;
  if (width > 4096 || height > 4096) return null;
  let raw: string;
  try {
    raw = atob(msg.frame);
  } catch {
    return null;
  }
  if (raw.length !== width * height * 3) return null;
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0, j = 0; i < raw.length; i += 3, j += 4) {
    rgba[j] = raw.charCodeAt(i);
    rgba[j + 1] = raw.charCodeAt(i + 1);
    rgba[j + 2] = raw.charCodeAt(i + 2);
    rgba[j + 3] = 255;
  }
  return { width, height, rgba };
}
