import { RenderParams, RenderResult, SceneRecord, Transport } from "./types.js";

/** HTTP client for the refocus service, relative to the serving origin. */
export class HttpTransport implements Transport {
  constructor(private readonly base: string = "") {}

  async listScenes(): Promise<SceneRecord[]> {
    const resp = await fetch(`${this.base}/api/scenes`);
    if (!resp.ok) throw new Error(`scene listing failed: ${resp.status}`);
    return (await resp.json()) as SceneRecord[];
  }

  async render(params: RenderParams): Promise<RenderResult> {
    const resp = await fetch(`${this.base}/api/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        scene_id: params.sceneId,
        f_x: params.fx,
        f_y: params.fy,
        bokeh: params.bokeh,
      }),
    });
    if (!resp.ok) {
      const body = await resp.text();
      throw new Error(`render failed: ${resp.status} ${body}`);
    }
    const latency = Number(resp.headers.get("x-render-millis") ?? "0");
    const blob = await resp.blob();
    return { imageUrl: URL.createObjectURL(blob), latencyMs: latency };
  }

  async focusSet(sceneId: string, fx: number, fy: number, eps?: number): Promise<Uint8Array> {
    const params = new URLSearchParams({ scene_id: sceneId, fx: String(fx), fy: String(fy) });
    if (eps !== undefined) params.set("eps", String(eps));
    const resp = await fetch(`${this.base}/api/focus_set?${params}`);
    if (!resp.ok) throw new Error(`focus set fetch failed: ${resp.status}`);
    return new Uint8Array(await resp.arrayBuffer());
  }

  depthUrl(sceneId: string): string {
    return `${this.base}/api/depth/${sceneId}`;
  }
}
