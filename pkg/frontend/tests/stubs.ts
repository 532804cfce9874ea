/** Shared test doubles: a scripted fetch stub that mimics the session
 * service contract, and a controllable WebSocket stand-in. */

import {
  CommitResponse,
  FetchLike,
  Metrics,
  PoseRequest,
  PoseResponse,
  SessionInfo,
} from "../src/api";
import { WebSocketLike } from "../src/ar";

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

/** Minimal in-memory model of one server session, faithful to the service's
 * observable contract (pose deltas move the cup; errors shrink as the cup
 * approaches the scripted ground truth). */
export class FakeServer {
  calls: RecordedCall[] = [];
  committed = false;
  presetMode = false;
  cupOffset = [10, 0, 0]; // mm from ground truth
  readonly truthAngles = { inclination_deg: 40, anteversion_deg: 25 };
  angles = { inclination_deg: 43, anteversion_deg: 22 };
  alignment: { axis_deg: number; tip_mm: number } | null = null;

  readonly session: SessionInfo = {
    id: "sess1",
    preset: "user-study-20deg",
    state: "Planning",
    preset_mode: false,
    angles: { inclination_deg: 43, anteversion_deg: 22 },
    ground_truth_available: true,
    views: [
      { name: "a", camera: {}, image_url: "/sessions/sess1/views/a.png" },
      { name: "b", camera: {}, image_url: "/sessions/sess1/views/b.png" },
    ],
  };

  private norm(v: number[]): number {
    return Math.hypot(v[0], v[1], v[2]);
  }

  private poseResponse(): PoseResponse {
    // contour centroid shifts with the offset so overlays visibly track it
    const [dx, dy] = this.cupOffset;
    return {
      contours: [
        [[[100 + dx, 100 + dy], [110 + dx, 100 + dy], [110 + dx, 110 + dy]]],
        [[[200 + dx, 150 + dy], [210 + dx, 150 + dy], [210 + dx, 160 + dy]]],
      ],
      angles: { ...this.angles },
      cup_pose: { from: "cup", to: "app", q: [1, 0, 0, 0], t_mm: [...this.cupOffset] },
      errors: {
        translation_mm: this.norm(this.cupOffset),
        inclination_deg: Math.abs(this.angles.inclination_deg - this.truthAngles.inclination_deg),
        anteversion_deg: Math.abs(this.angles.anteversion_deg - this.truthAngles.anteversion_deg),
      },
    };
  }

  metrics(): Metrics {
    const m: Metrics = {
      state: this.committed ? "Committed" : "Planning",
      angles: { ...this.angles },
      plan_errors: this.poseResponse().errors,
    };
    if (this.alignment) m.alignment = { ...this.alignment };
    return m;
  }

  commitResponse(): CommitResponse {
    return {
      state: "Committed",
      planned_pose_rgbd: { from: "cup", to: "rgbd", q: [1, 0, 0, 0], t_mm: [0, 0, 600] },
      planned_axis: [0, 0, 1],
      planned_tip_mm: [0, 0, 300],
      stream_url: "/sessions/sess1/ar",
    };
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ method, path, body });

    if (method === "POST" && path === "/sessions") {
      return jsonResponse(201, this.session);
    }
    if (method === "GET" && path === "/sessions/sess1") {
      return jsonResponse(200, { ...this.session, preset_mode: this.presetMode });
    }
    if (method === "PUT" && path === "/sessions/sess1/pose") {
      if (this.committed) {
        return jsonResponse(409, { code: "committed", message: "session already committed" });
      }
      const pose = body as PoseRequest;
      if (this.presetMode && pose.rotation_axis && pose.rotation_deg) {
        return jsonResponse(422, { code: "rotation_locked", message: "preset mode" });
      }
      if (pose.translation_mm) {
        for (let k = 0; k < 3; k++) this.cupOffset[k] += pose.translation_mm[k];
      }
      return jsonResponse(200, this.poseResponse());
    }
    if (method === "POST" && path === "/sessions/sess1/preset") {
      this.presetMode = (body as { enabled: boolean }).enabled;
      if (this.presetMode) this.angles = { ...this.truthAngles };
      return jsonResponse(200, this.poseResponse());
    }
    if (method === "POST" && path === "/sessions/sess1/commit") {
      if (this.committed) {
        return jsonResponse(409, { code: "committed", message: "session already committed" });
      }
      this.committed = true;
      this.alignment = { axis_deg: 0, tip_mm: 0 };
      return jsonResponse(201, this.commitResponse());
    }
    if (method === "GET" && path === "/sessions/sess1/metrics") {
      return jsonResponse(200, this.metrics());
    }
    if (method === "DELETE" && path === "/sessions/sess1") {
      return new Response(null, { status: 204 });
    }
    return jsonResponse(404, { code: "not_found", message: path });
  };
}

export function encodeFrame(seq: number, points: number[][]): ArrayBuffer {
  const buffer = new ArrayBuffer(8 + 12 * points.length);
  const view = new DataView(buffer);
  view.setUint32(0, seq, true);
  view.setUint32(4, points.length, true);
  const f32 = new Float32Array(buffer, 8);
  points.forEach((p, i) => f32.set(p, 3 * i));
  return buffer;
}

export class FakeWebSocket implements WebSocketLike {
  sent: string[] = [];
  closed = false;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  emitBinary(seq: number, points: number[][]): void {
    this.onmessage?.({ data: encodeFrame(seq, points) });
  }

  emitText(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) });
  }
}
