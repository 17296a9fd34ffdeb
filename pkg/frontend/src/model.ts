/** Pure view-model logic: everything here is a function of the served payload. */

import type { PairPayload, SegmentPayload } from "./api.js";

export type Point = [number, number];

export interface Bounds {
  low: number[];
  high: number[];
}

export interface PairView {
  pairId: string;
  env: string;
  frames: number;
  tracks: [Point[], Point[]];
  bounds: Bounds;
}

/**
 * Project one segment to 2-D playback points.
 * pointmass2d states are (x, y, vx, vy): the marker is the position.
 * pendulum states are (angle-from-upright, angular velocity): the marker is
 * the rod tip on the unit circle, (sin a, cos a), so upright maps to (0, 1).
 */
export function trackPoints(env: string, seg: SegmentPayload): Point[] {
  if (env === "pendulum") {
    return seg.states.map((s) => [Math.sin(s[0]), Math.cos(s[0])]);
  }
  return seg.states.map((s) => [s[0], s[1]]);
}

export function buildPairView(payload: PairPayload): PairView {
  const left = trackPoints(payload.env, payload.seg0);
  const right = trackPoints(payload.env, payload.seg1);
  if (left.length !== right.length) {
    throw new Error(`tracks disagree on frame count: ${left.length} vs ${right.length}`);
  }
  if (left.length !== payload.k + 1) {
    throw new Error(`expected k+1 = ${payload.k + 1} frames, got ${left.length}`);
  }
  return {
    pairId: payload.pair_id,
    env: payload.env,
    frames: left.length,
    tracks: [left, right],
    bounds: payload.bounds,
  };
}

/**
 * Map data coordinates into a pixel viewport, preserving aspect ratio: the
 * larger bounds span fills the smaller viewport dimension and the data stays
 * centered. The y axis points up in data space and down in pixels.
 */
export function makeViewport(
  bounds: Bounds,
  width: number,
  height: number,
): (p: Point) => Point {
  const spanX = bounds.high[0] - bounds.low[0];
  const spanY = bounds.high[1] - bounds.low[1];
  const scale = Math.min(width / spanX, height / spanY);
  const cx = (bounds.low[0] + bounds.high[0]) / 2;
  const cy = (bounds.low[1] + bounds.high[1]) / 2;
  return ([x, y]) => [
    width / 2 + (x - cx) * scale,
    height / 2 - (y - cy) * scale,
  ];
}

/** Playback frame for a looping clock: one frame per tick, wrapping. */
export function frameAt(tick: number, frames: number): number {
  return ((tick % frames) + frames) % frames;
}

export const KEY_TO_CHOICE: Record<string, "left" | "right" | "equal"> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  " ": "equal",
};
