/** Binary point-cloud stream decoding and sequence-gap tracking.
 *
 * Frame layout: uint32le sequence number, uint32le point count, then
 * count * 3 float32le xyz triplets (millimetres, RGBD frame). */

export interface CloudFrame {
  seq: number;
  points: Float32Array; // length 3 * count
  count: number;
}

export function decodeCloudFrame(buffer: ArrayBuffer): CloudFrame {
  if (buffer.byteLength < 8) {
    throw new Error(`frame too short: ${buffer.byteLength} bytes`);
  }
  const header = new DataView(buffer, 0, 8);
  const seq = header.getUint32(0, true);
  const count = header.getUint32(4, true);
  const expected = 8 + 12 * count;
  if (buffer.byteLength !== expected) {
    throw new Error(`frame length ${buffer.byteLength} != ${expected} for ${count} points`);
  }
  return { seq, count, points: new Float32Array(buffer, 8, count * 3) };
}

/** Tracks stream continuity; a jump of more than one reports the gap. */
export class SequenceTracker {
  private last: number | null = null;
  gaps = 0;

  /** Returns the number of missed frames before this one (0 if contiguous). */
  observe(seq: number): number {
    if (this.last === null) {
      this.last = seq;
      return 0;
    }
    const missed = Math.max(0, seq - this.last - 1);
    if (missed > 0) this.gaps += 1;
    this.last = seq;
    return missed;
  }

  reset(): void {
    this.last = null;
    this.gaps = 0;
  }
}

export interface AlignmentMessage {
  type: "alignment";
  seq: number;
  axis_deg: number;
  tip_mm: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type StreamMessage = AlignmentMessage | ErrorMessage;

export function parseStreamMessage(text: string): StreamMessage {
  const msg = JSON.parse(text) as { type?: string };
  if (msg.type === "alignment" || msg.type === "error") return msg as StreamMessage;
  throw new Error(`unknown stream message type: ${msg.type}`);
}

export function encodeImpactorPose(q: number[], t_mm: number[]): string {
  return JSON.stringify({ type: "impactor_pose", q, t_mm });
}
