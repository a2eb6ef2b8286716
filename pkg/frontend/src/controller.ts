import { RenderParams, RenderResult, Transport, UiState } from "./types.js";

export const SLIDER_DEBOUNCE_MS = 150;
export const BOKEH_MAX = 30;

export interface DisplayUpdate {
  result: RenderResult;
  seq: number;
}

/**
 * UI state machine for click-to-refocus.
 *
 * Invariants:
 *  - at most one render request is in flight; parameter changes while busy
 *    collapse into a single queued follow-up carrying the latest values;
 *  - responses are reconciled against a monotonically increasing sequence
 *    number, so a stale response can never overwrite a newer displayed one;
 *  - slider changes are debounced: bursts within SLIDER_DEBOUNCE_MS fire one
 *    request with the final value.
 */
export class RefocusController {
  readonly state: UiState = {
    sceneId: null,
    fx: 0.5,
    fy: 0.5,
    bokeh: 0,
    lastLatencyMs: null,
    overlayDepth: false,
    overlayFocusSet: false,
    requestState: "idle",
  };

  private seq = 0;
  private displayedSeq = 0;
  private debounceHandle: ReturnType<typeof setTimeout> | null = null;
  private onDisplay: (update: DisplayUpdate) => void = () => undefined;
  private onError: (err: unknown) => void = () => undefined;

  constructor(
    private readonly transport: Transport,
    private readonly debounceMs: number = SLIDER_DEBOUNCE_MS,
  ) {}

  display(handler: (update: DisplayUpdate) => void): void {
    this.onDisplay = handler;
  }

  errors(handler: (err: unknown) => void): void {
    this.onError = handler;
  }

  selectScene(sceneId: string): void {
    this.state.sceneId = sceneId;
  }

  /**
   * Map a canvas-space click to normalized coordinates and request a render.
   * Clicks outside the displayed image are ignored.
   */
  clickAt(pixelX: number, pixelY: number, displayWidth: number, displayHeight: number): void {
    if (this.state.sceneId === null) return;
    if (pixelX < 0 || pixelY < 0 || pixelX >= displayWidth || pixelY >= displayHeight) return;
    const clamp01 = (v: number) => Math.min(1, Math.max(0, v));
    this.state.fx = clamp01(displayWidth > 1 ? pixelX / (displayWidth - 1) : 0);
    this.state.fy = clamp01(displayHeight > 1 ? pixelY / (displayHeight - 1) : 0);
    this.requestRender();
  }

  /** Debounced slider handler; the displayed value updates immediately. */
  setBokeh(value: number): void {
    this.state.bokeh = Math.min(BOKEH_MAX, Math.max(0, value));
    if (this.debounceHandle !== null) clearTimeout(this.debounceHandle);
    this.debounceHandle = setTimeout(() => {
      this.debounceHandle = null;
      this.requestRender();
    }, this.debounceMs);
  }

  /** Fire a render now (or queue it if one is already in flight). */
  requestRender(): void {
    if (this.state.sceneId === null) return;
    if (this.state.requestState === "in_flight" || this.state.requestState === "queued") {
      this.state.requestState = "queued";
      return;
    }
    this.fire();
  }

  private currentParams(): RenderParams {
    return {
      sceneId: this.state.sceneId as string,
      fx: this.state.fx,
      fy: this.state.fy,
      bokeh: this.state.bokeh,
    };
  }

  private fire(): void {
    const mySeq = ++this.seq;
    this.state.requestState = "in_flight";
    this.transport.render(this.currentParams()).then(
      (result) => this.settle(mySeq, result, null),
      (err) => this.settle(mySeq, null, err),
    );
  }

  private settle(mySeq: number, result: RenderResult | null, err: unknown): void {
    const hadQueued = this.state.requestState === "queued";
    this.state.requestState = "idle";
    if (result !== null && mySeq > this.displayedSeq && !hadQueued) {
      this.displayedSeq = mySeq;
      this.state.lastLatencyMs = result.latencyMs;
      this.onDisplay({ result, seq: mySeq });
    }
    if (err !== null) this.onError(err);
    if (hadQueued) this.fire(); // exactly one follow-up with the latest params
  }
}
