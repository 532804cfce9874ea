/** Planning-stage store: coalesces pose gestures into at most one in-flight
 * request (latest wins) and republishes whatever the server acknowledged.
 * Contours, angles, and errors are pass-through — never recomputed here. */

import {
  ApiClient,
  ApiError,
  Contours,
  PoseErrors,
  PoseRequest,
  PoseResponse,
  SessionInfo,
} from "./api";

export interface PlanningState {
  session: SessionInfo | null;
  contours: Contours;
  angles: { inclination_deg: number; anteversion_deg: number } | null;
  errors: PoseErrors | null;
  presetMode: boolean;
  committed: boolean;
  transparency: number; // 0..1, pure display property
  lastError: string | null;
}

type Listener = (state: PlanningState) => void;

export class PlanningStore {
  private state: PlanningState = {
    session: null,
    contours: [],
    angles: null,
    errors: null,
    presetMode: false,
    committed: false,
    transparency: 0.5,
    lastError: null,
  };
  private listeners: Listener[] = [];
  private inFlight = false;
  private pending: PoseRequest | null = null;

  constructor(private readonly api: ApiClient) {}

  getState(): PlanningState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private publish(partial: Partial<PlanningState>): void {
    this.state = { ...this.state, ...partial };
    for (const fn of this.listeners) fn(this.state);
  }

  /** Whether rotation gestures are allowed (hidden in preset mode). */
  rotationEnabled(): boolean {
    return !this.state.presetMode && !this.state.committed;
  }

  async createSession(preset = "user-study-20deg", renderImages = true): Promise<void> {
    const session = await this.api.createSession({ preset, render_images: renderImages });
    this.publish({
      session,
      presetMode: session.preset_mode,
      committed: session.state === "Committed",
      angles: session.angles,
      lastError: null,
    });
  }

  setTransparency(value: number): void {
    this.publish({ transparency: Math.min(1, Math.max(0, value)) });
  }

  private applyResponse(resp: PoseResponse): void {
    this.publish({
      contours: resp.contours,
      angles: resp.angles,
      errors: resp.errors ?? null,
      lastError: null,
    });
  }

  /** Queue a pose gesture; while a request is in flight the latest queued
   * gesture replaces any earlier one. */
  requestPose(pose: PoseRequest): void {
    this.pending = pose;
    void this.drain();
  }

  private async drain(): Promise<void> {
    if (!this.state.session) {
      this.pending = null; // gestures before a session exists are dropped
      return;
    }
    if (this.inFlight || !this.pending) return;
    const pose = this.pending;
    this.pending = null;
    this.inFlight = true;
    try {
      const resp = await this.api.updatePose(this.state.session.id, pose);
      this.applyResponse(resp);
    } catch (err) {
      this.publish({ lastError: err instanceof ApiError ? err.message : String(err) });
    } finally {
      this.inFlight = false;
      if (this.pending) void this.drain();
    }
  }

  /** Wait until no request is running and nothing is queued (test helper
   * and commit guard). */
  async idle(): Promise<void> {
    while (this.inFlight || this.pending) {
      await new Promise((resolve) => setTimeout(resolve, 0));
    }
  }

  async setPreset(enabled: boolean, angles?: { inclination_deg: number; anteversion_deg: number }): Promise<void> {
    if (!this.state.session) throw new Error("no session");
    const resp = await this.api.setPreset(this.state.session.id, {
      enabled,
      inclination_deg: angles?.inclination_deg,
      anteversion_deg: angles?.anteversion_deg,
    });
    this.publish({ presetMode: enabled });
    this.applyResponse(resp);
  }

  async commit() {
    if (!this.state.session) throw new Error("no session");
    await this.idle();
    const resp = await this.api.commit(this.state.session.id);
    this.publish({ committed: true });
    return resp;
  }
}
