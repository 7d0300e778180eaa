// Console view state. Everything the canvas shows comes from the last
// snapshot plus the local draft; reconnecting and receiving one
// snapshot rebuilds the scene completely.

import type { ClientMessage, Hello, Reply, RunState, Snapshot } from "./protocol.js";
import { pointerToGround } from "./geometry.js";

export type DrawMode = "none" | "path" | "boundary";

export type Connection = "connecting" | "open" | "closed";

export class ViewState {
  connection: Connection = "connecting";
  hello: Hello | null = null;
  snapshot: Snapshot | null = null;
  drawMode: DrawMode = "none";
  draft: [number, number][] = []; // ground coordinates
  selectedRobot: number | null = null;
  showGhost = false;

  private nextMsgId = 1;
  // Controls stay disabled per kind while a message of that kind is in
  // flight; the reply (ack or error) re-enables them.
  private pending = new Map<number, string>();

  onOpen(): void {
    this.connection = "open";
  }

  onClose(): void {
    this.connection = "closed";
    this.pending.clear();
  }

  onHello(hello: Hello): void {
    this.hello = hello;
    if (this.selectedRobot === null && hello.robots.length > 0) {
      this.selectedRobot = hello.robots[0]!;
    }
  }

  onSnapshot(snapshot: Snapshot): void {
    this.snapshot = snapshot;
  }

  onReply(reply: Reply): void {
    this.pending.delete(reply.msg_id);
  }

  get runState(): RunState {
    if (this.snapshot) return this.snapshot.run_state;
    if (this.hello) return this.hello.run_state;
    return "idle";
  }

  setDrawMode(mode: DrawMode): void {
    if (mode !== this.drawMode) {
      this.drawMode = mode;
      this.draft = [];
    }
  }

  addPointerPoint(pixel: [number, number]): void {
    if (this.drawMode === "none" || !this.hello) return;
    this.draft.push(pointerToGround(this.hello.homography, pixel));
  }

  selectRobot(id: number): void {
    this.selectedRobot = id;
  }

  private inFlight(kind: string): boolean {
    for (const k of this.pending.values()) {
      if (k === kind) return true;
    }
    return false;
  }

  canCommit(): boolean {
    if (this.selectedRobot === null || this.inFlight("edit")) return false;
    if (this.drawMode === "path") return this.draft.length >= 2;
    if (this.drawMode === "boundary") return this.draft.length >= 3;
    return false;
  }

  /**
   * Turn the draft into a set_path / set_boundary message, or null when
   * the guard rules say the commit control is disabled. A committed
   * draft is cleared; the boundary stays an open vertex list on the
   * wire because the polygon's closing edge is implicit.
   */
  commitDrawing(): ClientMessage | null {
    if (!this.canCommit()) return null;
    const msgId = this.nextMsgId++;
    const points = this.draft.map((p) => [p[0], p[1]] as [number, number]);
    const message: ClientMessage =
      this.drawMode === "path"
        ? { msg_id: msgId, type: "set_path", robot_id: this.selectedRobot!, points }
        : { msg_id: msgId, type: "set_boundary", robot_id: this.selectedRobot!, points };
    this.pending.set(msgId, "edit");
    this.draft = [];
    return message;
  }

  canControl(): boolean {
    return !this.inFlight("control");
  }

  controlMessage(kind: "start" | "pause" | "reset"): ClientMessage | null {
    if (!this.canControl()) return null;
    const msgId = this.nextMsgId++;
    this.pending.set(msgId, "control");
    return { msg_id: msgId, type: kind };
  }

  subscribeMessage(rateHz: number): ClientMessage {
    return { msg_id: this.nextMsgId++, type: "subscribe", rate_hz: rateHz };
  }
}
