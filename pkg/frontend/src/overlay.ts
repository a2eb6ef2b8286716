/** Pure pixel operations for the focus-set overlay. */

export interface Rgba {
  r: number;
  g: number;
  b: number;
}

export const OVERLAY_TINT: Rgba = { r: 40, g: 220, b: 120 };
export const OVERLAY_ALPHA = 0.45;

/**
 * Alpha-blend a tint over the pixels selected by a binary mask.
 *
 * `base` is RGBA (4 bytes per pixel); `mask` holds one byte per pixel where
 * any nonzero value marks membership in the focus set. Pixels outside the
 * mask are returned untouched, byte for byte.
 */
export function composeOverlay(
  base: Uint8ClampedArray,
  mask: Uint8Array,
  tint: Rgba = OVERLAY_TINT,
  alpha: number = OVERLAY_ALPHA,
): Uint8ClampedArray {
  if (base.length !== mask.length * 4) {
    throw new Error(`mask has ${mask.length} pixels but base has ${base.length / 4}`);
  }
  const out = new Uint8ClampedArray(base);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] === 0) continue;
    const o = i * 4;
    out[o] = Math.round((1 - alpha) * base[o] + alpha * tint.r);
    out[o + 1] = Math.round((1 - alpha) * base[o + 1] + alpha * tint.g);
    out[o + 2] = Math.round((1 - alpha) * base[o + 2] + alpha * tint.b);
  }
  return out;
}

