/** Mapping between canvas pixels and world meters.
 *
 * The camera window is a square: x spans [x0, x0 + extent] left to
 * right, y spans [y0, y0 + extent] bottom to top.  Canvas rows run
 * downward, so the vertical axis flips.  The window comes from the
 * server's info message; nothing here hardcodes scene geometry.
 */

import type { ViewWindow } from "./protocol.js";

export interface WorldPoint {
  x: number;
  y: number;
}

export interface CanvasPoint {
  px: number;
  py: number;
}

export function canvasToWorld(px: number, py: number, view: ViewWindow, size: number): WorldPoint {
  return {
    x: view.x0 + (px / size) * view.extent,
    y: view.y0 + (1 - py / size) * view.extent,
  };
}

export function worldToCanvas(x: number, y: number, view: ViewWindow, size: number): CanvasPoint {
  return {
    px: ((x - view.x0) / view.extent) * size,
    py: (1 - (y - view.y0) / view.extent) * size,
  };
}

/** Largest whole-pixel scale that fits the display area, never below 1.
 * Whole factors keep the upscaled frame free of interpolation smear. */
export function chooseZoom(displayPx: number, imageHw: number): number {
  return Math.max(1, Math.floor(displayPx / imageHw));
}
