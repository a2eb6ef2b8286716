import { HttpTransport } from "./api.js";
import { BOKEH_MAX, RefocusController } from "./controller.js";
import { composeOverlay } from "./overlay.js";

const transport = new HttpTransport();
const controller = new RefocusController(transport);

const canvas = document.querySelector<HTMLCanvasElement>("#view")!;
const ctx = canvas.getContext("2d")!;
const sceneSelect = document.querySelector<HTMLSelectElement>("#scene")!;
const slider = document.querySelector<HTMLInputElement>("#bokeh")!;
const sliderValue = document.querySelector<HTMLSpanElement>("#bokeh-value")!;
const latencyLabel = document.querySelector<HTMLSpanElement>("#latency")!;
const depthToggle = document.querySelector<HTMLInputElement>("#show-depth")!;
const focusToggle = document.querySelector<HTMLInputElement>("#show-focus-set")!;
const notice = document.querySelector<HTMLDivElement>("#notice")!;

let baseImage: HTMLImageElement | null = null;
let focusMask: Uint8Array | null = null;

slider.max = String(BOKEH_MAX);

function setNotice(text: string): void {
  notice.textContent = text;
  notice.style.display = text ? "block" : "none";
}

function redraw(): void {
  if (!baseImage) return;
  canvas.width = baseImage.naturalWidth;
  canvas.height = baseImage.naturalHeight;
  ctx.drawImage(baseImage, 0, 0);
  if (controller.state.overlayFocusSet && focusMask) {
    const frame = ctx.getImageData(0, 0, canvas.width, canvas.height);
    frame.data.set(composeOverlay(frame.data, focusMask));
    ctx.putImageData(frame, 0, 0);
  }
  // focus marker
  const x = controller.state.fx * (canvas.width - 1);
  const y = controller.state.fy * (canvas.height - 1);
  ctx.strokeStyle = "#ff5050";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(x, y, 6, 0, 2 * Math.PI);
  ctx.stroke();
}

async function refreshFocusMask(): Promise<void> {
  const { sceneId, fx, fy } = controller.state;
  if (!controller.state.overlayFocusSet || sceneId === null) return;
  try {
    const png = await transport.focusSet(sceneId, fx, fy);
    focusMask = await decodeMaskPng(png);
    setNotice("");
  } catch (err) {
    controller.state.overlayFocusSet = false;
    focusToggle.checked = false;
    focusMask = null;
    setNotice(`focus-set overlay unavailable: ${String(err)}`);
  }
  redraw();
}

/** Decode a grayscale mask PNG into one byte per pixel via an offscreen canvas. */
async function decodeMaskPng(bytes: Uint8Array): Promise<Uint8Array> {
  const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  const off = document.createElement("canvas");
  off.width = bitmap.width;
  off.height = bitmap.height;
  const octx = off.getContext("2d")!;
  octx.drawImage(bitmap, 0, 0);
  const rgba = octx.getImageData(0, 0, off.width, off.height).data;
  const mask = new Uint8Array(off.width * off.height);
  for (let i = 0; i < mask.length; i++) mask[i] = rgba[i * 4];
  return mask;
}

controller.display(({ result }) => {
  const img = new Image();
  img.onload = () => {
    if (baseImage?.src.startsWith("blob:")) URL.revokeObjectURL(baseImage.src);
    baseImage = img;
    latencyLabel.textContent =
      controller.state.lastLatencyMs === null
        ? ""
        : `${controller.state.lastLatencyMs.toFixed(0)} ms`;
    redraw();
    void refreshFocusMask();
  };
  img.src = result.imageUrl;
});

controller.errors((err) => setNotice(String(err)));

canvas.addEventListener("click", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const scaleX = canvas.width / rect.width;
  const scaleY = canvas.height / rect.height;
  controller.clickAt(
    (ev.clientX - rect.left) * scaleX,
    (ev.clientY - rect.top) * scaleY,
    canvas.width,
    canvas.height,
  );
  redraw();
});

slider.addEventListener("input", () => {
  const value = Number(slider.value);
  sliderValue.textContent = value.toFixed(0);
  controller.setBokeh(value);
});

depthToggle.addEventListener("change", () => {
  controller.state.overlayDepth = depthToggle.checked;
  const sceneId = controller.state.sceneId;
  if (depthToggle.checked && sceneId !== null) {
    const img = new Image();
    img.onload = () => {
      baseImage = img;
      redraw();
    };
    img.src = transport.depthUrl(sceneId);
  } else {
    controller.requestRender();
  }
});

focusToggle.addEventListener("change", () => {
  controller.state.overlayFocusSet = focusToggle.checked;
  if (focusToggle.checked) {
    void refreshFocusMask();
  } else {
    focusMask = null;
    redraw(); // overlay removed without a new render
  }
});

sceneSelect.addEventListener("change", () => {
  controller.selectScene(sceneSelect.value);
  focusMask = null;
  controller.requestRender();
});

async function boot(): Promise<void> {
  try {
    const scenes = await transport.listScenes();
    if (!scenes.length) {
      setNotice("no scenes on the server; upload one via POST /api/scenes");
      return;
    }
    for (const scene of scenes) {
      const opt = document.createElement("option");
      opt.value = scene.scene_id;
      opt.textContent = `${scene.scene_id} (${scene.width}x${scene.height}${scene.has_depth ? "" : ", no depth"})`;
      sceneSelect.appendChild(opt);
    }
    controller.selectScene(scenes[0].scene_id);
    controller.requestRender();
  } catch (err) {
    setNotice(String(err));
  }
}

void boot();
