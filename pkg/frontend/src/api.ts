/** Typed HTTP client for the planning/AR session service. The client never
 * computes geometry itself; every number it exposes came from the server. */

export interface Angles {
  inclination_deg: number;
  anteversion_deg: number;
}

export interface Transform {
  from: string;
  to: string;
  q: number[];
  t_mm: number[];
}

export interface ViewInfo {
  name: string;
  camera: unknown;
  image_url: string;
}

export interface SessionInfo {
  id: string;
  preset: string;
  state: "Planning" | "Committed";
  preset_mode: boolean;
  angles: Angles;
  ground_truth_available: boolean;
  views: ViewInfo[];
}

export interface PoseErrors {
  translation_mm: number;
  inclination_deg: number;
  anteversion_deg: number;
}

/** Per-view contour polylines in pixel coordinates: contours[view][poly][i] = [u, v]. */
export type Contours = number[][][][];

export interface PoseResponse {
  contours: Contours;
  angles: Angles;
  cup_pose: Transform;
  errors?: PoseErrors;
}

export interface CommitResponse {
  state: string;
  planned_pose_rgbd: Transform;
  planned_axis: number[];
  planned_tip_mm: number[];
  stream_url: string;
}

export interface Metrics {
  state: string;
  angles: Angles;
  plan_errors?: PoseErrors;
  alignment?: { axis_deg: number; tip_mm: number };
}

export interface PoseRequest {
  translation_mm?: number[];
  rotation_axis?: number[];
  rotation_deg?: number;
  absolute_q?: number[];
  absolute_t_mm?: number[];
}

export interface ServiceError {
  code: string;
  message: string;
  field?: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: ServiceError,
  ) {
    super(`${detail.code}: ${detail.message}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail: ServiceError;
      try {
        detail = (await resp.json()) as ServiceError;
      } catch {
        detail = { code: "http_error", message: resp.statusText };
      }
      throw new ApiError(resp.status, detail);
    }
    if (resp.status === 204) return undefined as T;
    return (await resp.json()) as T;
  }

  createSession(body: {
    preset?: string;
    render_images?: boolean;
    separation_deg?: number;
    mesh_resolution?: number;
  }): Promise<SessionInfo> {
    return this.request("POST", "/sessions", body);
  }

  getSession(id: string): Promise<SessionInfo> {
    return this.request("GET", `/sessions/${id}`);
  }

  updatePose(id: string, pose: PoseRequest): Promise<PoseResponse> {
    return this.request("PUT", `/sessions/${id}/pose`, pose);
  }

  setPreset(
    id: string,
    body: { enabled: boolean; inclination_deg?: number; anteversion_deg?: number },
  ): Promise<PoseResponse> {
    return this.request("POST", `/sessions/${id}/preset`, body);
  }

  commit(id: string): Promise<CommitResponse> {
    return this.request("POST", `/sessions/${id}/commit`);
  }

  metrics(id: string): Promise<Metrics> {
    return this.request("GET", `/sessions/${id}/metrics`);
  }

  deleteSession(id: string): Promise<void> {
    return this.request("DELETE", `/sessions/${id}`);
  }

  viewImageUrl(view: ViewInfo): string {
    return this.baseUrl + view.image_url;
  }

  streamUrl(commit: CommitResponse): string {
    const base = this.baseUrl || (typeof location !== "undefined" ? location.origin : "");
    return base.replace(/^http/, "ws") + commit.stream_url;
  }
}
