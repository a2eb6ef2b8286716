export interface SceneRecord {
  scene_id: string;
  width: number;
  height: number;
  has_depth: boolean;
  source: string;
}

export interface RenderParams {
  sceneId: string;
  fx: number;
  fy: number;
  bokeh: number;
}

export interface RenderResult {
  /** Object URL (or data URL) of the rendered PNG. */
  imageUrl: string;
  latencyMs: number;
}

export interface Transport {
  listScenes(): Promise<SceneRecord[]>;
  render(params: RenderParams): Promise<RenderResult>;
  /** Raw grayscale PNG bytes of the focus-set mask. */
  focusSet(sceneId: string, fx: number, fy: number, eps?: number): Promise<Uint8Array>;
  depthUrl(sceneId: string): string;
}

export type RequestState = "idle" | "in_flight" | "queued";

export interface UiState {
  sceneId: string | null;
  fx: number;
  fy: number;
  bokeh: number;
  lastLatencyMs: number | null;
  overlayDepth: boolean;
  overlayFocusSet: boolean;
  requestState: RequestState;
}
