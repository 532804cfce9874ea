/** 2D canvas drawing of server-sent geometry. Projections for the AR
 * viewports are fixed orthographic drops of the server's 3D points — a
 * display convention only; no displayed number is derived here. */

import { Contours } from "./api";
import { ArState } from "./ar";
import { CloudFrame } from "./wsframes";

export interface ViewportProjection {
  label: string;
  /** Indices of the two point components mapped to canvas x/y. */
  ix: 0 | 1 | 2;
  iy: 0 | 1 | 2;
  flipY?: boolean;
}

/** Four fixed perspectives of the shared scene. */
export const VIEWPORTS: ViewportProjection[] = [
  { label: "front", ix: 0, iy: 1, flipY: true },
  { label: "side", ix: 2, iy: 1, flipY: true },
  { label: "top", ix: 0, iy: 2 },
  { label: "oblique", ix: 1, iy: 2 },
];

export function drawContours(
  ctx: CanvasRenderingContext2D,
  contours: Contours,
  viewIndex: number,
  scale: number,
  alpha: number,
): void {
  const view = contours[viewIndex];
  if (!view) return;
  ctx.save();
  ctx.globalAlpha = alpha;
  ctx.strokeStyle = "#1db954";
  ctx.lineWidth = 1.5;
  for (const poly of view) {
    if (poly.length < 2) continue;
    ctx.beginPath();
    ctx.moveTo(poly[0][0] * scale, poly[0][1] * scale);
    for (let i = 1; i < poly.length; i++) {
      ctx.lineTo(poly[i][0] * scale, poly[i][1] * scale);
    }
    ctx.stroke();
  }
  ctx.restore();
}

export function cloudBounds(cloud: CloudFrame): { lo: number[]; hi: number[] } {
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < cloud.count; i++) {
    for (let k = 0; k < 3; k++) {
      const v = cloud.points[3 * i + k];
      if (v < lo[k]) lo[k] = v;
      if (v > hi[k]) hi[k] = v;
    }
  }
  return { lo, hi };
}

export function drawViewport(
  ctx: CanvasRenderingContext2D,
  state: ArState,
  proj: ViewportProjection,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, width, height);
  const cloud = state.cloud;
  if (!cloud || cloud.count === 0) return;

  const { lo, hi } = cloudBounds(cloud);
  const spanX = Math.max(1e-6, hi[proj.ix] - lo[proj.ix]);
  const spanY = Math.max(1e-6, hi[proj.iy] - lo[proj.iy]);
  const margin = 20;
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);

  ctx.fillStyle = state.complete ? "#1db954" : "#4aa3ff";
  for (let i = 0; i < cloud.count; i++) {
    let x = (cloud.points[3 * i + proj.ix] - lo[proj.ix]) * scale + margin;
    let y = (cloud.points[3 * i + proj.iy] - lo[proj.iy]) * scale + margin;
    if (proj.flipY) y = height - y;
    ctx.fillRect(x, y, 2, 2);
  }

  ctx.fillStyle = "#ddd";
  ctx.font = "12px sans-serif";
  ctx.fillText(proj.label, 8, 16);
}

export function formatReadout(state: ArState): string {
  if (state.axisErrorDeg === null || state.tipErrorMm === null) {
    return "axis — / tip —";
  }
  return `axis ${state.axisErrorDeg.toFixed(2)}° / tip ${state.tipErrorMm.toFixed(2)} mm`;
}
