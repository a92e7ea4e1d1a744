import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { ApiClient } from "../src/api.js";
import { Previewer } from "../src/preview.js";
import type { PointsPayload, SegmentResponse } from "../src/types.js";

const points: PointsPayload = { objects: [{ object_id: 0, points: [[1, 1], [2, 2], [3, 3]] }] };

function fakeSegmentResponse(tag: string): SegmentResponse {
  return {
    union_mask: { width: 1, height: 1, bits: "gA==" },
    object_masks: [],
    masked_image_png: tag,
  };
}

function makeRequest() {
  return { image: new Blob(["img"]), mask: new Blob(["mask"]), points };
}

describe("Previewer", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("debounces bursts into a single request", async () => {
    const identify = vi.fn(async () => ({ bundle_id: "b1", objects: 1 }));
    const segment = vi.fn(async () => fakeSegmentResponse("r1"));
    const previewer = new Previewer({ identify, segment } as unknown as ApiClient, 100);
    const results: string[] = [];
    previewer.onResult = (r) => results.push(r.segment.masked_image_png);

    previewer.request(makeRequest());
    previewer.request(makeRequest());
    previewer.request(makeRequest());
    await vi.advanceTimersByTimeAsync(150);

    expect(identify).toHaveBeenCalledTimes(1);
    expect(segment).toHaveBeenCalledTimes(1);
    expect(results).toEqual(["r1"]);
  });

  it("drops stale responses: the latest request wins", async () => {
    let call = 0;
    const gates: (() => void)[] = [];
    const identify = vi.fn(async () => ({ bundle_id: `b${++call}`, objects: 1 }));
    const segment = vi.fn(
      (args: { bundleId: string }) =>
        new Promise<SegmentResponse>((resolve) => {
          gates.push(() => resolve(fakeSegmentResponse(args.bundleId)));
        }),
    );
    const previewer = new Previewer({ identify, segment } as unknown as ApiClient, 50);
    const results: string[] = [];
    previewer.onResult = (r) => results.push(r.segment.masked_image_png);

    previewer.request(makeRequest());
    await vi.advanceTimersByTimeAsync(60); // first request in flight
    previewer.request(makeRequest());
    await vi.advanceTimersByTimeAsync(60); // second request in flight

    expect(gates).toHaveLength(2);
    gates[1]();
    await vi.advanceTimersByTimeAsync(0);
    gates[0](); // stale response resolves after the newer one
    await vi.advanceTimersByTimeAsync(0);

    expect(results).toEqual(["b2"]);
  });

  it("routes failures to onError and keeps working afterwards", async () => {
    let fail = true;
    const identify = vi.fn(async () => {
      if (fail) throw new Error("boom");
      return { bundle_id: "ok", objects: 1 };
    });
    const segment = vi.fn(async () => fakeSegmentResponse("fine"));
    const previewer = new Previewer({ identify, segment } as unknown as ApiClient, 10);
    const errors: unknown[] = [];
    const results: string[] = [];
    previewer.onError = (e) => errors.push(e);
    previewer.onResult = (r) => results.push(r.segment.masked_image_png);

    previewer.request(makeRequest());
    await vi.advanceTimersByTimeAsync(20);
    expect(errors).toHaveLength(1);

    fail = false;
    previewer.request(makeRequest());
    await vi.advanceTimersByTimeAsync(20);
    expect(results).toEqual(["fine"]);
  });
});
