/** Binary-mask codec and pixel arithmetic.
 *
 * Masks travel as base64 bitfields (row-major, MSB-first within each byte,
 * matching the service's packing). In memory a mask is a Uint8Array of 0/1
 * with length width*height.
 */

import type { PackedMask } from "./types.js";

function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

function bytesToBase64(bytes: Uint8Array): string {
  let bin = "";
  for (let i = 0; i < bytes.length; i++) bin += String.fromCharCode(bytes[i]);
  return btoa(bin);
}

export function decodePackedMask(packed: PackedMask): Uint8Array {
  const { width, height } = packed;
  if (width < 1 || height < 1) throw new Error(`bad mask dimensions ${width}x${height}`);
  const bytes = base64ToBytes(packed.bits);
  const expected = Math.ceil((width * height) / 8);
  if (bytes.length !== expected) {
    throw new Error(`mask bitfield has ${bytes.length} bytes, expected ${expected}`);
  }
  const mask = new Uint8Array(width * height);
  for (let i = 0; i < mask.length; i++) {
    mask[i] = (bytes[i >> 3] >> (7 - (i & 7))) & 1;
  }
  return mask;
}

export function encodePackedMask(mask: Uint8Array, width: number, height: number): PackedMask {
  if (mask.length !== width * height) {
    throw new Error(`mask length ${mask.length} does not match ${width}x${height}`);
  }
  const bytes = new Uint8Array(Math.ceil(mask.length / 8));
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) bytes[i >> 3] |= 1 << (7 - (i & 7));
  }
  return { width, height, bits: bytesToBase64(bytes) };
}

/** Intersection over union; 1.0 when both masks are empty. */
export function iou(a: Uint8Array, b: Uint8Array): number {
  if (a.length !== b.length) throw new Error("mask sizes differ");
  let inter = 0;
  let union = 0;
  for (let i = 0; i < a.length; i++) {
    const av = a[i] !== 0;
    const bv = b[i] !== 0;
    if (av && bv) inter++;
    if (av || bv) union++;
  }
  return union === 0 ? 1.0 : inter / union;
}

/** Split a labeled grayscale mask (0 = background) into per-object masks,
 * ordered by ascending gray value — the same convention the service uses. */
export function labeledToObjectMasks(gray: Uint8Array): Uint8Array[] {
  const values = new Set<number>();
  for (const v of gray) if (v !== 0) values.add(v);
  const ordered = [...values].sort((x, y) => x - y);
  return ordered.map((v) => {
    const mask = new Uint8Array(gray.length);
    for (let i = 0; i < gray.length; i++) mask[i] = gray[i] === v ? 1 : 0;
    return mask;
  });
}

/** RGBA overlay pixels for a mask tint (premultiplied nothing, plain RGBA). */
export function maskToOverlay(mask: Uint8Array, rgba: [number, number, number, number]) {
  const out = new Uint8ClampedArray(mask.length * 4);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      out[4 * i] = rgba[0];
      out[4 * i + 1] = rgba[1];
      out[4 * i + 2] = rgba[2];
      out[4 * i + 3] = rgba[3];
    }
  }
  return out;
}
