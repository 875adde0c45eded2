/** Pointer gestures to drag messages. */

import type { DragMsg, ViewWindow } from "./protocol.js";
import { canvasToWorld } from "./view.js";

/** The rotation slider is marked in degrees; the wire speaks radians. */
export function sliderTheta(degrees: number): number {
  return (degrees * Math.PI) / 180;
}

/** Map a pointer position on the canvas to a drag message.  Targets
 * beyond the arm's reach are sent as-is; clamping is the server's call
 * and the round-trip shows the clamped master. */
export function pointerToDrag(
  px: number,
  py: number,
  canvasSize: number,
  view: ViewWindow,
  thetaDegrees: number,
): DragMsg {
  const world = canvasToWorld(px, py, view, canvasSize);
  return { type: "drag", x: world.x, y: world.y, theta: sliderTheta(thetaDegrees) };
}
