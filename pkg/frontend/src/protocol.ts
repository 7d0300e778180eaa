// Wire types for the gateway's line-JSON protocol. One long-lived
// WebSocket; the server pushes hello once, snapshots at the subscribed
// rate, and one reply per client msg_id.

export interface Hello {
  type: "hello";
  homography: number[]; // 9 values, row-major ground->pixel
  arena: [number, number][];
  width: number;
  height: number;
  robots: number[];
  run_state: RunState;
}

export type RunState = "idle" | "running" | "paused";

export type TrackStatus = "none" | "tentative" | "confirmed" | "coasting";

export interface SnapshotRobot {
  id: number;
  pose: [number, number, number]; // true sim pose, for the debug ghost
  track: [number, number, number] | null;
  status: TrackStatus;
  bbox: [number, number, number, number] | null; // pixel x0,y0,x1,y1
}

export type ModeDoc =
  | { type: "idle" }
  | { type: "follow_path"; points: [number, number][] }
  | { type: "bounded_wander"; points: [number, number][] }
  | {
      type: "coverage";
      points: [number, number][];
      lane_width: number;
      tool_radius: number;
    };

export interface Snapshot {
  type: "snapshot";
  t: number;
  robots: SnapshotRobot[];
  modes: Record<string, ModeDoc>;
  coverage: number;
  frame_digest: string | null;
  run_state: RunState;
}

export interface Reply {
  msg_id: number;
  ok: boolean;
  path_id?: number;
  run_state?: RunState;
  code?: string;
  detail?: string;
}

export type ClientMessage =
  | { msg_id: number; type: "set_path"; robot_id: number; points: [number, number][] }
  | { msg_id: number; type: "set_boundary"; robot_id: number; points: [number, number][] }
  | { msg_id: number; type: "set_mode"; robot_id: number; mode: "idle" }
  | { msg_id: number; type: "start" }
  | { msg_id: number; type: "pause" }
  | { msg_id: number; type: "reset" }
  | { msg_id: number; type: "subscribe"; rate_hz: number };

export type ServerMessage = Hello | Snapshot | Reply;

export function isHello(msg: ServerMessage): msg is Hello {
  return (msg as Hello).type === "hello";
}

export function isSnapshot(msg: ServerMessage): msg is Snapshot {
  return (msg as Snapshot).type === "snapshot";
}
