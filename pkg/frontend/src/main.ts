/** Browser wiring: one WebSocket, one canvas, one state record.
 *
 * Socket callbacks and control handlers run transitions from state.ts
 * and put whatever they return on the wire; an animation-frame loop
 * repaints from the latest state.  Nothing here decides policy.
 */

import { pointerToDrag } from "./drag.js";
import type { ClientMsg } from "./protocol.js";
import {
  forceMagnitude,
  initialState,
  onClose,
  onMessage,
  onOpen,
  requestDrag,
  requestRecordStart,
  requestRecordStop,
  statusLabel,
  type Transition,
  type UiSessionState,
} from "./state.js";
import { chooseZoom, worldToCanvas } from "./view.js";

const DEFAULT_URL = "ws://127.0.0.1:8765";
const URL_KEY = "bridge-url";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d")!;
const buffer = document.createElement("canvas");
const bufferCtx = buffer.getContext("2d")!;

const statusNode = el<HTMLSpanElement>("status");
const warningNode = el<HTMLDivElement>("warning");
const savedNode = el<HTMLDivElement>("saved");
const forceFill = el<HTMLDivElement>("force-fill");
const forceValue = el<HTMLSpanElement>("force-value");
const urlInput = el<HTMLInputElement>("url");
const connectBtn = el<HTMLButtonElement>("connect");
const sceneForm = el<HTMLFieldSetElement>("scene-form");
const positionSelect = el<HTMLSelectElement>("position");
const colorSelect = el<HTMLSelectElement>("color");
const fillSelect = el<HTMLSelectElement>("fill");
const startBtn = el<HTMLButtonElement>("record-start");
const stopBtn = el<HTMLButtonElement>("record-stop");
const thetaSlider = el<HTMLInputElement>("theta");
const thetaReadout = el<HTMLSpanElement>("theta-value");
const levelNode = el<HTMLSpanElement>("level");

let ui: UiSessionState = initialState();
let socket: WebSocket | null = null;
let optionsFilled = false;

// The only state the page keeps across reloads is where to connect.
urlInput.value = localStorage.getItem(URL_KEY) ?? DEFAULT_URL;

function apply(t: Transition): void {
  ui = t.state;
  if (t.send && socket && socket.readyState === WebSocket.OPEN) {
    socket.send(JSON.stringify(t.send));
  }
}

function sendNow(msg: ClientMsg): void {
  if (socket && socket.readyState === WebSocket.OPEN) {
    socket.send(JSON.stringify(msg));
  }
}

function connect(): void {
  socket?.close();
  const url = urlInput.value.trim() || DEFAULT_URL;
  localStorage.setItem(URL_KEY, url);
  ui = initialState();
  optionsFilled = false;
  socket = new WebSocket(url);
  socket.onopen = () => {
    ui = onOpen(ui);
  };
  socket.onclose = () => {
    ui = onClose(ui);
  };
  socket.onerror = () => {
    ui = { ...ui, warning: "socket error; check the bridge address" };
  };
  socket.onmessage = (event) => {
    apply(onMessage(ui, String(event.data), performance.now()));
    if (ui.info && !optionsFilled) fillSceneOptions();
  };
}

function fillSceneOptions(): void {
  const info = ui.info!;
  positionSelect.replaceChildren(
    ...Array.from({ length: info.positions }, (_, i) => new Option(`s${i + 1}`, String(i))),
  );
  colorSelect.replaceChildren(...info.colors.map((c) => new Option(c, c)));
  fillSelect.replaceChildren(...info.fills.map((f) => new Option(f, f)));
  optionsFilled = true;
}

connectBtn.onclick = connect;

// ---- pointer -> drag ----

function dragFrom(event: PointerEvent): void {
  if (!ui.info) return;
  const rect = canvas.getBoundingClientRect();
  const px = ((event.clientX - rect.left) / rect.width) * canvas.width;
  const py = ((event.clientY - rect.top) / rect.height) * canvas.height;
  if (px < 0 || py < 0 || px > canvas.width || py > canvas.height) return;
  apply(requestDrag(ui, pointerToDrag(px, py, canvas.width, ui.info.view, Number(thetaSlider.value))));
}

canvas.addEventListener("pointerdown", (e) => {
  canvas.setPointerCapture(e.pointerId);
  dragFrom(e);
});
canvas.addEventListener("pointermove", (e) => {
  if (e.buttons & 1) dragFrom(e);
});

thetaSlider.oninput = () => {
  thetaReadout.textContent = `${thetaSlider.value}°`;
  // Re-aim the held target so tilting mid-drag takes effect.
  if (ui.dragTarget) {
    apply(requestDrag(ui, { ...ui.dragTarget, theta: (Number(thetaSlider.value) * Math.PI) / 180 }));
  }
};

// ---- record controls ----

startBtn.onclick = () => {
  apply(
    requestRecordStart(ui, {
      position: Number(positionSelect.value || 0),
      color: colorSelect.value || "yellow",
      fill: fillSelect.value || "high",
    }),
  );
};

stopBtn.onclick = () => {
  apply(requestRecordStop(ui));
};

sceneForm.addEventListener("change", () => {
  if (ui.recording) return;
  sendNow({
    type: "reset",
    position: Number(positionSelect.value || 0),
    color: colorSelect.value || "yellow",
    fill: fillSelect.value || "high",
  });
});

// ---- paint loop ----

function drawMarker(x: number, y: number, style: string): void {
  if (!ui.info) return;
  const { px, py } = worldToCanvas(x, y, ui.info.view, canvas.width);
  ctx.strokeStyle = style;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(px - 9, py);
  ctx.lineTo(px + 9, py);
  ctx.moveTo(px, py - 9);
  ctx.lineTo(px, py + 9);
  ctx.stroke();
}

function drawTip(x: number, y: number, theta: number): void {
  if (!ui.info) return;
  const { px, py } = worldToCanvas(x, y, ui.info.view, canvas.width);
  const scale = canvas.width / ui.info.view.extent;
  ctx.strokeStyle = "#ffd24d";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(px, py, 5, 0, 2 * Math.PI);
  // Heading line; canvas y runs down, world y runs up.
  ctx.moveTo(px, py);
  ctx.lineTo(px + 0.05 * scale * Math.cos(theta), py - 0.05 * scale * Math.sin(theta));
  ctx.stroke();
}

function paint(): void {
  const nowMs = performance.now();
  statusNode.textContent = statusLabel(ui, nowMs);
  statusNode.className = statusLabel(ui, nowMs) === "connected" ? "ok" : "bad";
  warningNode.textContent = ui.warning ?? "";
  savedNode.textContent = ui.savedFile ? `saved ${ui.savedFile}` : "";
  startBtn.disabled = ui.recording || ui.connection !== "connected";
  stopBtn.disabled = !ui.recording;
  sceneForm.disabled = ui.recording;

  const mag = forceMagnitude(ui);
  const t = Math.min(mag / 30, 1);
  forceFill.style.width = `${Math.round(t * 100)}%`;
  forceFill.style.background = `hsl(${Math.round(120 * (1 - t))}, 85%, 45%)`;
  forceValue.textContent = `${mag.toFixed(1)} N`;

  if (ui.frame) {
    const zoom = chooseZoom(512, ui.frame.width);
    const side = ui.frame.width * zoom;
    if (canvas.width !== side) canvas.width = canvas.height = side;
    if (buffer.width !== ui.frame.width) buffer.width = buffer.height = ui.frame.width;
    bufferCtx.putImageData(new ImageData(ui.frame.rgba, ui.frame.width, ui.frame.height), 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(buffer, 0, 0, side, side);
    if (ui.state) {
      const [mx, my] = [ui.state.master[0]!, ui.state.master[1]!];
      drawMarker(mx, my, "#4dd2ff");
      const [tx, ty, tt] = [ui.state.tip[0]!, ui.state.tip[1]!, ui.state.tip[2]!];
      drawTip(tx, ty, tt);
      levelNode.textContent = ui.state.level.toFixed(3);
      if (ui.recording) {
        ctx.fillStyle = Math.floor(nowMs / 500) % 2 ? "#ff3b30" : "#b22822";
        ctx.beginPath();
        ctx.arc(18, 18, 8, 0, 2 * Math.PI);
        ctx.fill();
      }
    }
  } else {
    ctx.fillStyle = "#181d23";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#8a939e";
    ctx.font = "16px system-ui";
    ctx.fillText("no frames yet", 20, 40);
  }
  requestAnimationFrame(paint);
}

connect();
requestAnimationFrame(paint);
