/** Session state and the only rules that ever change it.
 *
 * Everything is a pure transition: socket callbacks and UI gestures
 * feed events in, and each returns the next state plus at most one
 * message to put on the wire.  Authority stays server-side; this is a
 * view plus a queue of intentions.
 *
 * The one invariant that matters for the wire: drag messages go out at
 * most once per received state message.  A send needs a credit, and
 * credits only come from state arrivals (never accumulating past one),
 * so pointer spam coalesces to the freshest target at the server's own
 * cadence.
 */

import {
  decodeFrame,
  parseServerMsg,
  type ClientMsg,
  type DecodedFrame,
  type DragMsg,
  type InfoMsg,
  type StateMsg,
} from "./protocol.js";

export type Connection = "connecting" | "connected" | "disconnected";

export interface RecordForm {
  position: number;
  color: string;
  fill: string;
}

export interface UiSessionState {
  connection: Connection;
  info: InfoMsg | null;
  state: StateMsg | null;
  frame: DecodedFrame | null;
  statesReceived: number;
  lastStateAtMs: number | null;
  dragTarget: DragMsg | null;
  pendingDrag: DragMsg | null;
  dragCredit: number;
  dragsSent: number;
  recording: boolean;
  savedFile: string | null;
  warning: string | null;
}

export interface Transition {
  state: UiSessionState;
  send: ClientMsg | null;
}

export function initialState(): UiSessionState {
  return {
    connection: "connecting",
    info: null,
    state: null,
    frame: null,
    statesReceived: 0,
    lastStateAtMs: null,
    dragTarget: null,
    pendingDrag: null,
    dragCredit: 0,
    dragsSent: 0,
    recording: false,
    savedFile: null,
    warning: null,
  };
}

export function onOpen(s: UiSessionState): UiSessionState {
  return { ...s, connection: "connected", warning: null };
}

export function onClose(s: UiSessionState): UiSessionState {
  // Dropping the pending drag too: a fresh connection starts over.
  return { ...s, connection: "disconnected", pendingDrag: null, dragCredit: 0 };
}

function onState(s: UiSessionState, msg: StateMsg, nowMs: number): Transition {
  const decoded = decodeFrame(msg);
  let next: UiSessionState = {
    ...s,
    state: msg,
    frame: decoded ?? s.frame,
    statesReceived: s.statesReceived + 1,
    lastStateAtMs: nowMs,
    recording: msg.recording,
    dragCredit: 1,
    warning: decoded ? s.warning : "frame dims disagree with payload; kept last good frame",
  };
  if (next.pendingDrag) {
    const send = next.pendingDrag;
    next = { ...next, pendingDrag: null, dragCredit: 0, dragsSent: next.dragsSent + 1 };
    return { state: next, send };
  }
  return { state: next, send: null };
}

/** Feed one raw socket message through the reducer. */
export function onMessage(s: UiSessionState, text: string, nowMs: number): Transition {
  const parsed = parseServerMsg(text);
  if (!parsed.ok) {
    return { state: { ...s, warning: parsed.reason }, send: null };
  }
  const msg = parsed.msg;
  switch (msg.type) {
    case "state":
      return onState(s, msg, nowMs);
    case "info":
      return { state: { ...s, info: msg, recording: msg.recording }, send: null };
    case "ack": {
      let next = { ...s };
      if (msg.of === "record") {
        next.recording = msg.recording ?? next.recording;
        if (msg.recording === false && typeof msg.file === "string") next.savedFile = msg.file;
        if (msg.recording === true) next.savedFile = null;
      }
      if (typeof msg.note === "string") next.warning = msg.note;
      return { state: next, send: null };
    }
    case "error":
      // Server text shown verbatim; the session stays up.
      return { state: { ...s, warning: msg.message }, send: null };
  }
}

/** A pointer gesture wants the master at `target`.  Sends immediately
 * when a credit is available, otherwise replaces the queued target so
 * the next state arrival flushes the freshest one. */
export function requestDrag(s: UiSessionState, target: DragMsg): Transition {
  if (s.connection !== "connected") {
    return { state: { ...s, dragTarget: target }, send: null };
  }
  if (s.dragCredit > 0) {
    return {
      state: { ...s, dragTarget: target, dragCredit: 0, pendingDrag: null, dragsSent: s.dragsSent + 1 },
      send: target,
    };
  }
  return { state: { ...s, dragTarget: target, pendingDrag: target }, send: null };
}

export function requestRecordStart(s: UiSessionState, form: RecordForm): Transition {
  if (s.connection !== "connected") {
    return { state: { ...s, warning: "not connected" }, send: null };
  }
  return {
    state: { ...s, warning: null },
    send: { type: "record", action: "start", position: form.position, color: form.color, fill: form.fill },
  };
}

export function requestRecordStop(s: UiSessionState): Transition {
  if (!s.recording) {
    return { state: { ...s, warning: "not recording; nothing to stop" }, send: null };
  }
  return { state: s, send: { type: "record", action: "stop" } };
}

/** Magnitude of the environment force in the latest state, for the cue bar. */
export function forceMagnitude(s: UiSessionState): number {
  if (!s.state) return 0;
  return Math.hypot(...s.state.f_env);
}

/** Status for the indicator.  A live connection that has gone a full
 * second without a state message reads as stalled. */
export function statusLabel(s: UiSessionState, nowMs: number): string {
  if (s.connection !== "connected") return s.connection;
  if (s.lastStateAtMs !== null && nowMs - s.lastStateAtMs > 1000) return "stalled";
  return "connected";
}
