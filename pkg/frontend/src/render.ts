// Scene geometry for the robot-centered view, kept free of canvas calls so
// it is testable; drawScene at the bottom does the actual painting.
//
// Screen convention: the robot sits at the origin pointing up. A bearing b
// measured from the robot heading maps to (sin b, -cos b) * radius.

import { StateFrame } from "./protocol.js";

export interface ScenePoint {
  x: number;
  y: number;
}

export function bearingToScreen(bearing: number, r: number): ScenePoint {
  return { x: r * Math.sin(bearing), y: -r * Math.cos(bearing) };
}

/** One scatter point per sector at the sector's center bearing. */
export function sectorPoints(sectors: number[], maxRange: number,
                             radiusPx: number): ScenePoint[] {
  const n = sectors.length;
  const out: ScenePoint[] = [];
  for (let k = 0; k < n; k++) {
    const bearing = (2 * Math.PI * (k + 0.5)) / n;
    const r = (Math.min(sectors[k], maxRange) / maxRange) * radiusPx;
    out.push(bearingToScreen(bearing, r));
  }
  return out;
}

/** Arrow from the robot toward the goal bearing; heading 0 points up. */
export function goalArrow(headingRad: number, lengthPx: number):
    { x1: number; y1: number; x2: number; y2: number } {
  const tip = bearingToScreen(headingRad, lengthPx);
  return { x1: 0, y1: 0, x2: tip.x, y2: tip.y };
}

/** Estimated-position trace transformed into the robot-up frame. */
export function traceToScreen(trace: Array<{ x: number; y: number }>,
                              pose: { x: number; y: number; theta: number },
                              pxPerMeter: number): ScenePoint[] {
  const c = Math.cos(pose.theta);
  const s = Math.sin(pose.theta);
  return trace.map((p) => {
    const dx = p.x - pose.x;
    const dy = p.y - pose.y;
    // world -> robot frame, then robot-up screen orientation
    const fwd = c * dx + s * dy;
    const left = -s * dx + c * dy;
    return { x: -left * pxPerMeter, y: -fwd * pxPerMeter };
  });
}

export interface SceneStyle {
  radiusPx: number;
  pxPerMeter: number;
}

export function drawScene(ctx: CanvasRenderingContext2D, state: StateFrame,
                          maxRange: number, trace: Array<{ x: number; y: number }>,
                          style: SceneStyle, stale: boolean): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.save();
  ctx.translate(w / 2, h / 2);

  ctx.strokeStyle = "#2a2f3a";
  for (const frac of [0.25, 0.5, 0.75, 1.0]) {
    ctx.beginPath();
    ctx.arc(0, 0, style.radiusPx * frac, 0, 2 * Math.PI);
    ctx.stroke();
  }

  ctx.strokeStyle = "#3d5a80";
  ctx.beginPath();
  const screenTrace = traceToScreen(trace, state.pose, style.pxPerMeter);
  screenTrace.forEach((p, i) => {
    if (i === 0) ctx.moveTo(p.x, p.y);
    else ctx.lineTo(p.x, p.y);
  });
  ctx.stroke();

  ctx.fillStyle = stale ? "#777777" : "#e0fbfc";
  for (const p of sectorPoints(state.sectors, maxRange, style.radiusPx)) {
    ctx.fillRect(p.x - 2, p.y - 2, 4, 4);
  }

  const arrow = goalArrow(state.goal.heading,
                          Math.min(style.radiusPx * 0.9,
                                   state.goal.distance * style.pxPerMeter));
  ctx.strokeStyle = "#ee6c4d";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(arrow.x1, arrow.y1);
  ctx.lineTo(arrow.x2, arrow.y2);
  ctx.stroke();
  ctx.lineWidth = 1;

  // the robot icon: a triangle pointing up (its heading)
  ctx.fillStyle = "#98c1d9";
  ctx.beginPath();
  ctx.moveTo(0, -10);
  ctx.lineTo(7, 10);
  ctx.lineTo(-7, 10);
  ctx.closePath();
  ctx.fill();
  ctx.restore();
}
