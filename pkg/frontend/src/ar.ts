/** AR alignment store: one shared scene state consumed by all four
 * viewports, server-computed error pass-through, and the sustained-alignment
 * "complete" indicator. */

import { CommitResponse } from "./api";
import {
  CloudFrame,
  SequenceTracker,
  decodeCloudFrame,
  encodeImpactorPose,
  parseStreamMessage,
} from "./wsframes";

export const VIEWPORT_COUNT = 4;

export const COMPLETE_AXIS_DEG = 1.0;
export const COMPLETE_TIP_MM = 2.0;
export const COMPLETE_HOLD_MS = 1000;

export interface ArState {
  cloud: CloudFrame | null;
  plannedAxis: number[];
  plannedTip: number[];
  axisErrorDeg: number | null; // last server-computed value, never local
  tipErrorMm: number | null;
  complete: boolean; // errors within bounds sustained for COMPLETE_HOLD_MS
  sequenceGapWarning: boolean;
  framesReceived: number;
  lastError: string | null;
}

type Listener = (state: ArState) => void;
type Clock = () => number;

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
}

export class ArStore {
  private state: ArState;
  private listeners: Listener[] = [];
  private tracker = new SequenceTracker();
  private withinSince: number | null = null;
  private ws: WebSocketLike | null = null;

  constructor(
    commit: CommitResponse,
    private readonly now: Clock = () => Date.now(),
  ) {
    this.state = {
      cloud: null,
      plannedAxis: commit.planned_axis,
      plannedTip: commit.planned_tip_mm,
      axisErrorDeg: null,
      tipErrorMm: null,
      complete: false,
      sequenceGapWarning: false,
      framesReceived: 0,
      lastError: null,
    };
  }

  getState(): ArState {
    return this.state;
  }

  /** Identical state object handed to every viewport. */
  viewportStates(): ArState[] {
    return Array.from({ length: VIEWPORT_COUNT }, () => this.state);
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private publish(partial: Partial<ArState>): void {
    this.state = { ...this.state, ...partial };
    for (const fn of this.listeners) fn(this.state);
  }

  attach(ws: WebSocketLike): void {
    this.ws = ws;
    ws.onmessage = (ev) => this.onMessage(ev.data);
    ws.onclose = () => {
      this.ws = null;
    };
  }

  detach(): void {
    this.ws?.close();
    this.ws = null;
    this.tracker.reset();
  }

  sendImpactorPose(q: number[], t_mm: number[]): void {
    if (!this.ws) throw new Error("stream not attached");
    this.ws.send(encodeImpactorPose(q, t_mm));
  }

  private onMessage(data: unknown): void {
    if (data instanceof ArrayBuffer) {
      this.onBinary(data);
    } else if (typeof data === "string") {
      this.onText(data);
    }
  }

  private onBinary(buffer: ArrayBuffer): void {
    let frame: CloudFrame;
    try {
      frame = decodeCloudFrame(buffer);
    } catch (err) {
      this.publish({ lastError: String(err) });
      return;
    }
    const missed = this.tracker.observe(frame.seq);
    this.publish({
      cloud: frame,
      framesReceived: this.state.framesReceived + 1,
      sequenceGapWarning: this.state.sequenceGapWarning || missed > 0,
    });
  }

  clearGapWarning(): void {
    this.publish({ sequenceGapWarning: false });
  }

  private onText(text: string): void {
    let msg;
    try {
      msg = parseStreamMessage(text);
    } catch (err) {
      this.publish({ lastError: String(err) });
      return;
    }
    if (msg.type === "error") {
      this.publish({ lastError: msg.message });
      return;
    }
    this.updateErrors(msg.axis_deg, msg.tip_mm);
  }

  /** Pass the server-computed errors through and run the sustained-hold
   * complete logic against the injected clock. */
  updateErrors(axisDeg: number, tipMm: number): void {
    const within = axisDeg < COMPLETE_AXIS_DEG && tipMm < COMPLETE_TIP_MM;
    const t = this.now();
    if (!within) {
      this.withinSince = null;
    } else if (this.withinSince === null) {
      this.withinSince = t;
    }
    const complete = this.withinSince !== null && t - this.withinSince >= COMPLETE_HOLD_MS;
    this.publish({ axisErrorDeg: axisDeg, tipErrorMm: tipMm, complete });
  }
}
