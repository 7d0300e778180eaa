// Canvas drawing. The scene is redrawn from vector geometry each time:
// the canvas is the camera image plane, so ground geometry goes through
// the hello homography and track boxes arrive already in pixels.

import { crossTrack, project } from "./geometry.js";
import type { ModeDoc, Snapshot } from "./protocol.js";
import type { ViewState } from "./state.js";

// Subset of CanvasRenderingContext2D the renderer touches; tests drive
// it with a recording stub. The style unions match the DOM types so a
// real 2d context satisfies the interface; only strings are written.
export interface Draw2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  setLineDash(segments: number[]): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

const COLOR_BACKGROUND = "#101418";
const COLOR_ARENA = "#8a939c";
const COLOR_DESIRED = "#e03131"; // red geometry, as drawn by the operator
const COLOR_TRACK = "#2fbf4f"; // green rectangles around tracked robots
const COLOR_GHOST = "#e8c547";
const COLOR_TEXT = "#d8dde2";

function tracePolyline(ctx: Draw2D, h: number[], pts: [number, number][], close: boolean): void {
  ctx.beginPath();
  pts.forEach((pt, i) => {
    const [u, v] = project(h, pt);
    if (i === 0) ctx.moveTo(u, v);
    else ctx.lineTo(u, v);
  });
  if (close) ctx.closePath();
  ctx.stroke();
}

function drawMode(ctx: Draw2D, h: number[], mode: ModeDoc): void {
  ctx.strokeStyle = COLOR_DESIRED;
  ctx.lineWidth = 2;
  ctx.setLineDash([]);
  if (mode.type === "follow_path" && mode.points.length >= 2) {
    tracePolyline(ctx, h, mode.points, false);
  } else if (mode.type === "bounded_wander" || mode.type === "coverage") {
    if (mode.points.length >= 3) tracePolyline(ctx, h, mode.points, true);
  }
}

function drawRobots(ctx: Draw2D, h: number[], snapshot: Snapshot, view: ViewState): void {
  for (const robot of snapshot.robots) {
    const visible = robot.status === "confirmed" || robot.status === "coasting";
    if (visible && robot.bbox) {
      const [x0, y0, x1, y1] = robot.bbox;
      ctx.strokeStyle = COLOR_TRACK;
      ctx.lineWidth = 2;
      ctx.setLineDash(robot.status === "coasting" ? [4, 4] : []);
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
      ctx.setLineDash([]);
      ctx.fillStyle = COLOR_TRACK;
      ctx.font = "12px monospace";
      ctx.textAlign = "left";
      ctx.fillText(String(robot.id), x0 + 3, y0 - 4);
    }
    if (view.showGhost) {
      // True simulator pose, to eyeball tracker error.
      const [u, v] = project(h, [robot.pose[0], robot.pose[1]]);
      ctx.strokeStyle = COLOR_GHOST;
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.moveTo(u - 5, v);
      ctx.lineTo(u + 5, v);
      ctx.moveTo(u, v - 5);
      ctx.lineTo(u, v + 5);
      ctx.stroke();
    }
  }
}

function deviationLines(snapshot: Snapshot): string[] {
  const lines: string[] = [];
  for (const robot of snapshot.robots) {
    const mode = snapshot.modes[String(robot.id)];
    if (!mode || mode.type !== "follow_path" || !robot.track) continue;
    const d = crossTrack(mode.points, [robot.track[0], robot.track[1]]);
    if (!Number.isNaN(d)) {
      lines.push(`robot ${robot.id} deviation ${d >= 0 ? "+" : ""}${d.toFixed(3)} m`);
    }
  }
  return lines;
}

export function renderView(ctx: Draw2D, view: ViewState, width: number, height: number): void {
  ctx.fillStyle = COLOR_BACKGROUND;
  ctx.fillRect(0, 0, width, height);

  if (!view.hello || !view.snapshot) {
    ctx.fillStyle = COLOR_TEXT;
    ctx.font = "16px monospace";
    ctx.textAlign = "center";
    ctx.fillText(
      view.connection === "closed" ? "disconnected" : "connecting...",
      width / 2,
      height / 2,
    );
    return;
  }

  const h = view.hello.homography;
  const snapshot = view.snapshot;

  ctx.strokeStyle = COLOR_ARENA;
  ctx.lineWidth = 1;
  ctx.setLineDash([]);
  tracePolyline(ctx, h, view.hello.arena, true);

  for (const mode of Object.values(snapshot.modes)) {
    drawMode(ctx, h, mode);
  }

  // Draft on top of committed geometry, dashed to read as provisional.
  if (view.draft.length > 0) {
    ctx.strokeStyle = COLOR_DESIRED;
    ctx.lineWidth = 1;
    ctx.setLineDash([6, 4]);
    if (view.draft.length >= 2) {
      tracePolyline(ctx, h, view.draft, view.drawMode === "boundary");
    }
    ctx.setLineDash([]);
    ctx.fillStyle = COLOR_DESIRED;
    for (const pt of view.draft) {
      const [u, v] = project(h, pt);
      ctx.beginPath();
      ctx.arc(u, v, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  drawRobots(ctx, h, snapshot, view);

  ctx.fillStyle = COLOR_TEXT;
  ctx.font = "13px monospace";
  ctx.textAlign = "left";
  let y = 18;
  ctx.fillText(`t ${snapshot.t.toFixed(2)} s`, 8, y);
  y += 16;
  ctx.fillText(`coverage ${(snapshot.coverage * 100).toFixed(1)}%`, 8, y);
  y += 16;
  for (const line of deviationLines(snapshot)) {
    ctx.fillText(line, 8, y);
    y += 16;
  }

  if (snapshot.run_state === "paused") {
    ctx.fillStyle = COLOR_GHOST;
    ctx.font = "15px monospace";
    ctx.textAlign = "right";
    ctx.fillText("PAUSED", width - 10, 20);
  }
}
