import { describe, expect, it } from "vitest";

import {
  decodePackedMask,
  encodePackedMask,
  iou,
  labeledToObjectMasks,
  maskToOverlay,
} from "../src/mask.js";

describe("packed mask codec", () => {
  it("decodes MSB-first bitfields (service packing)", () => {
    // 4x2 mask: row 0 = 1,0,1,0  row 1 = 0,0,0,1 -> bits 10100001 -> 0xA1
    const bits = btoa(String.fromCharCode(0b10100001));
    const mask = decodePackedMask({ width: 4, height: 2, bits });
    expect([...mask]).toEqual([1, 0, 1, 0, 0, 0, 0, 1]);
  });

  it("round-trips arbitrary masks", () => {
    const width = 37;
    const height = 21;
    const mask = new Uint8Array(width * height);
    for (let i = 0; i < mask.length; i++) mask[i] = (i * 7 + 3) % 5 === 0 ? 1 : 0;
    const packed = encodePackedMask(mask, width, height);
    expect([...decodePackedMask(packed)]).toEqual([...mask]);
  });

  it("rejects truncated bitfields", () => {
    expect(() => decodePackedMask({ width: 100, height: 100, bits: btoa("ab") })).toThrow(
      /expected/,
    );
  });
});

describe("iou", () => {
  it("is 1 for identical masks and 0 for disjoint ones", () => {
    const a = Uint8Array.from([1, 1, 0, 0]);
    const b = Uint8Array.from([0, 0, 1, 1]);
    expect(iou(a, a)).toBe(1);
    expect(iou(a, b)).toBe(0);
  });

  it("handles the empty-empty case as a perfect match", () => {
    const empty = new Uint8Array(9);
    expect(iou(empty, empty)).toBe(1);
  });

  it("computes partial overlap", () => {
    const a = Uint8Array.from([1, 1, 1, 1, 0, 0, 0, 0]);
    const b = Uint8Array.from([1, 1, 1, 1, 1, 1, 1, 1]);
    expect(iou(a, b)).toBeCloseTo(0.5, 12);
  });
});

describe("labeled masks", () => {
  it("splits by ascending gray value", () => {
    const gray = Uint8Array.from([0, 7, 7, 0, 3, 3, 0, 0, 7]);
    const objects = labeledToObjectMasks(gray);
    expect(objects).toHaveLength(2);
    expect([...objects[0]]).toEqual([0, 0, 0, 0, 1, 1, 0, 0, 0]); // value 3 first
    expect([...objects[1]]).toEqual([0, 1, 1, 0, 0, 0, 0, 0, 1]);
  });

  it("returns nothing for an all-background mask", () => {
    expect(labeledToObjectMasks(new Uint8Array(16))).toHaveLength(0);
  });
});

describe("overlay pixels", () => {
  it("colors only set pixels", () => {
    const overlay = maskToOverlay(Uint8Array.from([1, 0]), [10, 20, 30, 40]);
    expect([...overlay.slice(0, 4)]).toEqual([10, 20, 30, 40]);
    expect([...overlay.slice(4, 8)]).toEqual([0, 0, 0, 0]);
  });
});
