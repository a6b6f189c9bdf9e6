import type { Rect, TrackJson } from "./types.js";

export const ORIGINAL_COLOR = "#00c800";
export const CORRECTED_COLOR = "#dc0000";

export interface DeviceRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/**
 * Annotation rect scaled by the canvas zoom factor, integer-rounded exactly
 * once at draw time.
 */
export function overlayRect(rect: Rect, zoom: number): DeviceRect {
  const [x, y, w, h] = rect;
  const left = Math.round(x * zoom);
  const top = Math.round(y * zoom);
  return {
    left,
    top,
    width: Math.round((x + w) * zoom) - left,
    height: Math.round((y + h) * zoom) - top,
  };
}

export function rectOnFrame(track: TrackJson | null, frame: number): Rect | null {
  if (track === null) {
    return null;
  }
  const index = frame - 1;
  if (index < 0 || index >= track.exist.length || track.exist[index] !== 1) {
    return null;
  }
  return track.gt_rect[index];
}

/** Per-frame center offset (corrected minus original) in image pixels. */
export function centerDelta(
  original: Rect | null,
  corrected: Rect | null,
): { dx: number; dy: number } | null {
  if (original === null || corrected === null) {
    return null;
  }
  return {
    dx: corrected[0] + corrected[2] / 2 - (original[0] + original[2] / 2),
    dy: corrected[1] + corrected[3] / 2 - (original[1] + original[3] / 2),
  };
}

export function formatDelta(delta: { dx: number; dy: number } | null): string {
  if (delta === null) {
    return "Δ n/a";
  }
  return `Δ (${delta.dx.toFixed(2)}, ${delta.dy.toFixed(2)}) px`;
}

export function strokeRect(
  ctx: CanvasRenderingContext2D,
  rect: Rect,
  zoom: number,
  color: string,
): void {
  const device = overlayRect(rect, zoom);
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  // +0.5 centers the 1px stroke on the pixel grid
  ctx.strokeRect(device.left + 0.5, device.top + 0.5, device.width, device.height);
}
