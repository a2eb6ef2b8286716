import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { PNG } from "pngjs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { composeOverlay, OVERLAY_ALPHA, OVERLAY_TINT } from "../src/overlay.js";

const PORT = 8791;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;

function decodePng(bytes: Uint8Array): { width: number; height: number; rgba: Uint8ClampedArray } {
  const png = PNG.sync.read(Buffer.from(bytes));
  return { width: png.width, height: png.height, rgba: new Uint8ClampedArray(png.data) };
}

async function waitForServer(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/api/scenes`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("refocus server did not come up");
}

describe("focus-set overlay against the live service", () => {
  const sceneDir = mkdtempSync(join(tmpdir(), "refocus-scenes-"));

  beforeAll(async () => {
    const made = spawnSync(
      "python3",
      ["-m", "refocus.cli", "make-scene", "--seed", "11", "--layers", "3",
       "--size", "32", "--out-dir", sceneDir, "--scene-id", "tri"],
      { encoding: "utf-8" },
    );
    expect(made.status, made.stderr).toBe(0);
    server = spawn("python3", [
      "-m", "refocus.cli", "serve", "--scene-dir", sceneDir, "--port", String(PORT),
    ]);
    await waitForServer();
  }, 30000);

  afterAll(() => {
    server?.kill();
  });

  it("overlay pixels equal the /api/focus_set mask on a 3-layer scene", async () => {
    const scenes = (await (await fetch(`${BASE}/api/scenes`)).json()) as Array<{
      scene_id: string;
    }>;
    expect(scenes.map((s) => s.scene_id)).toContain("tri");

    // depth visualization reveals the layer structure: pick a click point on
    // one layer by asking the server for the depth image
    const depthPng = decodePng(
      new Uint8Array(await (await fetch(`${BASE}/api/depth/tri`)).arrayBuffer()),
    );
    const levels = new Set<number>();
    for (let i = 0; i < depthPng.width * depthPng.height; i++) levels.add(depthPng.rgba[i * 4]);
    expect(levels.size).toBe(3);

    const fx = 0.5;
    const fy = 0.5;
    const maskResp = await fetch(
      `${BASE}/api/focus_set?scene_id=tri&fx=${fx}&fy=${fy}&eps=0.05`,
    );
    expect(maskResp.status).toBe(200);
    const maskPng = decodePng(new Uint8Array(await maskResp.arrayBuffer()));
    const mask = new Uint8Array(maskPng.width * maskPng.height);
    for (let i = 0; i < mask.length; i++) mask[i] = maskPng.rgba[i * 4];

    // the mask must cover exactly the clicked layer: compare against the
    // depth level under the click
    const cx = Math.round(fx * (depthPng.width - 1));
    const cy = Math.round(fy * (depthPng.height - 1));
    const clickedLevel = depthPng.rgba[(cy * depthPng.width + cx) * 4];
    for (let i = 0; i < mask.length; i++) {
      const sameLayer = depthPng.rgba[i * 4] === clickedLevel;
      expect(mask[i] === 255).toBe(sameLayer);
    }

    // render the scene and compose the overlay like the client does
    const renderResp = await fetch(`${BASE}/api/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scene_id: "tri", f_x: fx, f_y: fy, bokeh: 6.0 }),
    });
    expect(renderResp.status).toBe(200);
    const base = decodePng(new Uint8Array(await renderResp.arrayBuffer())).rgba;
    const composed = composeOverlay(base, mask);

    for (let i = 0; i < mask.length; i++) {
      const o = i * 4;
      if (mask[i] === 0) {
        // untouched outside the focus set, byte for byte
        expect(composed[o]).toBe(base[o]);
        expect(composed[o + 1]).toBe(base[o + 1]);
        expect(composed[o + 2]).toBe(base[o + 2]);
      } else {
        const blend = (b: number, t: number) => Math.round((1 - OVERLAY_ALPHA) * b + OVERLAY_ALPHA * t);
        expect(composed[o]).toBe(blend(base[o], OVERLAY_TINT.r));
        expect(composed[o + 1]).toBe(blend(base[o + 1], OVERLAY_TINT.g));
        expect(composed[o + 2]).toBe(blend(base[o + 2], OVERLAY_TINT.b));
      }
    }
  }, 30000);
});
